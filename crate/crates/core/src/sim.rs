//! Monte Carlo size studies under a conditional binormal design.
//!
//! Each replicate draws `Y ~ Bernoulli(π₀)` and then `(X, Z)` given `Y`,
//! fits the nested logit models, and records whether the mNRI test and the
//! legacy NRI test reject. Every replicate owns a ChaCha stream keyed by
//! `(seed, cell, replicate)`, so results do not depend on thread scheduling.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::{fit, fit_nested, Dataset, GlmError, Link};
use crate::inference::{self, InferenceError};
use crate::numerics::Matrix;
use crate::reclass::{self, Kernel, TrainTestPair};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("{failures} failed fits exceed the allowed {allowed} for {replicates} replicates")]
    TooManyFailures { failures: usize, allowed: usize, replicates: usize },
    #[error("empty simulation grid")]
    EmptyGrid,
    #[error(transparent)]
    Glm(#[from] GlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Single,
    TrainTest,
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMode::Single => "single",
            SimMode::TrainTest => "train_test",
        })
    }
}

impl std::str::FromStr for SimMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(SimMode::Single),
            "train_test" | "train-test" => Ok(SimMode::TrainTest),
            other => Err(format!("unknown mode '{other}' (expected single or train_test)")),
        }
    }
}

/// How `(X, Z)` is drawn given `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullStyle {
    /// `(X, Z) | Y` bivariate normal with means `(μ_X·Y, 0)`, unit variances
    /// and correlation `ρ`. For `ρ ≠ 0` this makes `Z` informative given `X`.
    Literal,
    /// `X | Y ~ N(μ_X·Y, 1)` and `Z = ρX + √(1 − ρ²)ε`, so `Z ⊥ Y | X`.
    #[default]
    Enforced,
}

impl fmt::Display for NullStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NullStyle::Literal => "literal",
            NullStyle::Enforced => "enforced",
        })
    }
}

impl std::str::FromStr for NullStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(NullStyle::Literal),
            "enforced" => Ok(NullStyle::Enforced),
            other => Err(format!("unknown null style '{other}' (expected literal or enforced)")),
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_160_101;
pub const MIN_N: usize = 50;

fn default_alpha() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub pi0: f64,
    pub mu_x: f64,
    pub rho: f64,
    pub replicates: usize,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub null_style: NullStyle,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl SimConfig {
    pub fn new(n: usize, pi0: f64, mu_x: f64, rho: f64, replicates: usize) -> Self {
        Self {
            n,
            pi0,
            mu_x,
            rho,
            replicates,
            mode: SimMode::Single,
            null_style: NullStyle::Enforced,
            seed: DEFAULT_SEED,
            alpha: 0.05,
        }
    }

    pub fn with_mode(mut self, mode: SimMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_null_style(mut self, style: NullStyle) -> Self {
        self.null_style = style;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n < MIN_N {
            return bad(format!("n = {} is below {MIN_N}", self.n));
        }
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return bad(format!("pi0 = {} is not inside (0, 1)", self.pi0));
        }
        if !self.mu_x.is_finite() {
            return bad("mu_x is not finite".into());
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.rho.abs() < 1.0) {
            return bad(format!("|rho| = {} is not below 1", self.rho.abs()));
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} is not inside (0, 1)", self.alpha));
        }
        Ok(())
    }

    /// Failed fits tolerated before a cell is abandoned.
    pub fn allowed_failures(&self) -> usize {
        (0.01 * self.replicates as f64).ceil() as usize
    }
}

/// Random stream for one replicate of one cell.
pub fn replicate_stream(seed: u64, cell: u64, replicate: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&cell.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}

/// Draws one dataset (intercept and `X` as base covariates, `Z` new).
pub fn gen_replicate<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Dataset, GlmError> {
    let n = config.n;
    let rho = config.rho;
    let tail = (1.0 - rho * rho).sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x = Matrix::zeros(n, 2);
    let mut z = Matrix::zeros(n, 1);
    for i in 0..n {
        let yi = if rng.random::<f64>() < config.pi0 { 1.0 } else { 0.0 };
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let xi = config.mu_x * yi + e1;
        // both styles put corr(X, Z | Y) = ρ; they differ in whether Z
        // correlates with the full X or only its within-class part
        let zi = match config.null_style {
            NullStyle::Literal => rho * e1 + tail * e2,
            NullStyle::Enforced => rho * xi + tail * e2,
        };
        y.push(yi);
        x[(i, 0)] = 1.0;
        x[(i, 1)] = xi;
        z[(i, 0)] = zi;
    }
    Dataset::new(y, x, z)
}

/// Test outcomes of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    /// `n·T^S`
    pub mnri_statistic: f64,
    pub k: f64,
    pub mnri_p: f64,
    /// `R_n` (hard, half scale)
    pub nri: f64,
    pub nri_p: f64,
    /// `n·R_n^S`
    pub nri_smooth_scaled: f64,
}

fn replicate_once<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<ReplicateOutcome, InferenceError> {
    let draw = |rng: &mut R| -> Result<_, InferenceError> {
        Ok(fit_nested(gen_replicate(config, rng)?, Link::Logit)?)
    };
    let fits = draw(rng)?;
    match config.mode {
        SimMode::Single => {
            let m = inference::test_mnri_single(&fits)?;
            let l = inference::test_nri_normal_legacy(&fits)?;
            let k = inference::k_constant(fits.ybar())?;
            Ok(ReplicateOutcome {
                mnri_statistic: m.statistic,
                k,
                mnri_p: m.p_value,
                nri: l.statistic,
                nri_p: l.p_value,
                nri_smooth_scaled: config.n as f64 * reclass::nri_smooth(&fits)?,
            })
        }
        SimMode::TrainTest => {
            let test = draw(rng)?;
            let pair = TrainTestPair::new(fits, test)?;
            let m = inference::test_mnri_train_test(&pair)?;
            let l = inference::test_nri_normal_legacy_train_test(&pair)?;
            Ok(ReplicateOutcome {
                mnri_statistic: m.statistic,
                k: inference::k_constant(pair.test_fits.ybar())?,
                mnri_p: m.p_value,
                nri: l.statistic,
                nri_p: l.p_value,
                nri_smooth_scaled: config.n as f64 * reclass::nri_train_test(&pair, Kernel::Smooth)?,
            })
        }
    }
}

/// Raw replicate outcomes of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub outcomes: Vec<ReplicateOutcome>,
    /// Replicates that had to be redrawn.
    pub failures: usize,
}

/// Runs every replicate of `config` as cell `cell`. A replicate whose data
/// or fits fail is redrawn from the continuation of its own stream.
pub fn simulate_cell(config: &SimConfig, cell: u64) -> Result<CellRun, SimError> {
    config.validate()?;
    let allowed = config.allowed_failures();
    let results: Vec<(Option<ReplicateOutcome>, usize)> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_stream(config.seed, cell, rep);
            let mut failures = 0;
            while failures <= allowed {
                match replicate_once(config, &mut rng) {
                    Ok(o) => return (Some(o), failures),
                    Err(_) => failures += 1,
                }
            }
            (None, failures)
        })
        .collect();
    let failures: usize = results.iter().map(|r| r.1).sum();
    if failures > allowed || results.iter().any(|r| r.0.is_none()) {
        return Err(SimError::TooManyFailures { failures, allowed, replicates: config.replicates });
    }
    Ok(CellRun { outcomes: results.into_iter().filter_map(|r| r.0).collect(), failures })
}

/// One line of a size table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTableRow {
    pub n: usize,
    pub pi0: f64,
    pub mu_x: f64,
    pub rho: f64,
    pub replicates: usize,
    pub mode: SimMode,
    pub null_style: NullStyle,
    pub seed: u64,
    pub alpha: f64,
    pub rejection_rate_mnri: f64,
    pub rejection_rate_nri_normal: f64,
    /// `√(α̂(1 − α̂)/replicates)` for the mNRI rate.
    pub mc_se_mnri: f64,
    pub mc_se_nri_normal: f64,
    pub failed_fits: usize,
}

impl SimTableRow {
    pub fn from_run(config: &SimConfig, run: &CellRun) -> Self {
        let reps = run.outcomes.len() as f64;
        let rate = |f: &dyn Fn(&ReplicateOutcome) -> bool| run.outcomes.iter().filter(|o| f(o)).count() as f64 / reps;
        let se = |p: f64| (p * (1.0 - p) / reps).sqrt();
        let m = rate(&|o| o.mnri_p < config.alpha);
        let l = rate(&|o| o.nri_p < config.alpha);
        Self {
            n: config.n,
            pi0: config.pi0,
            mu_x: config.mu_x,
            rho: config.rho,
            replicates: config.replicates,
            mode: config.mode,
            null_style: config.null_style,
            seed: config.seed,
            alpha: config.alpha,
            rejection_rate_mnri: m,
            rejection_rate_nri_normal: l,
            mc_se_mnri: se(m),
            mc_se_nri_normal: se(l),
            failed_fits: run.failures,
        }
    }
}

pub fn run_cell(config: &SimConfig) -> Result<SimTableRow, SimError> {
    run_cell_indexed(config, 0)
}

fn run_cell_indexed(config: &SimConfig, cell: u64) -> Result<SimTableRow, SimError> {
    let run = simulate_cell(config, cell)?;
    Ok(SimTableRow::from_run(config, &run))
}

/// Rows in input order; cell `i` uses streams keyed by `(config.seed, i)`.
pub fn run_grid(configs: &[SimConfig]) -> Result<Vec<SimTableRow>, SimError> {
    if configs.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    configs.iter().enumerate().map(|(i, c)| run_cell_indexed(c, i as u64)).collect()
}

/// Cartesian grid in `n`, `π₀`, `μ_X`, `ρ` order (last varies fastest).
pub fn expand_grid(
    ns: &[usize],
    pi0s: &[f64],
    mu_xs: &[f64],
    rhos: &[f64],
    template: &SimConfig,
) -> Vec<SimConfig> {
    let mut out = Vec::new();
    for &n in ns {
        for &pi0 in pi0s {
            for &mu_x in mu_xs {
                for &rho in rhos {
                    out.push(SimConfig { n, pi0, mu_x, rho, ..template.clone() });
                }
            }
        }
    }
    out
}

/// How `E[T₁]` is estimated from the draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T1Estimator {
    /// Average `T₁` over sampled `(Y, X, Z)`.
    Sampled,
    /// Average `E[T₁ | X, Z]`, which replaces the residual by
    /// `h(β⁰ᵀX)(G(θ₀) − G(β⁰ᵀX))`. Same expectation, no Bernoulli noise.
    #[default]
    Conditional,
}

/// Truth-known logit model for checking that the mNRI is a proper change
/// score: `X, Z ~ N(0, 1)` independent and
/// `P(Y = 1 | X, Z) = G(β₀ᵀ(1, X) + γ₀Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperChangeConfig {
    pub beta: [f64; 2],
    pub gamma: f64,
    pub estimator: T1Estimator,
    pub draws: usize,
    pub perturbations: usize,
    pub norms: Vec<f64>,
    pub seed: u64,
}

impl Default for ProperChangeConfig {
    fn default() -> Self {
        Self {
            beta: [0.0, 1.0],
            gamma: 1.0,
            estimator: T1Estimator::Conditional,
            draws: 100_000,
            perturbations: 20,
            norms: vec![0.25, 0.5],
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub delta: [f64; 3],
    pub norm: f64,
    pub mean_t1: f64,
    /// Mean of `T₁(θ₀) − T₁(θ)` over the common draws.
    pub paired_difference: f64,
    pub paired_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperChangeReport {
    /// Base-model coefficients `β⁰` (population fit of the base model).
    pub base: [f64; 2],
    pub pi0: f64,
    pub mean_t1_at_truth: f64,
    pub se_at_truth: f64,
    pub perturbations: Vec<PerturbationResult>,
}

impl ProperChangeReport {
    /// Whether the truth beats every perturbation by more than `m` paired SEs.
    pub fn truth_dominates(&self, m: f64) -> bool {
        self.perturbations.iter().all(|p| p.paired_difference > m * p.paired_se)
    }
}

fn draw_truth_sample(cfg: &ProperChangeConfig, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut y = Vec::with_capacity(cfg.draws);
    let mut xz = Vec::with_capacity(cfg.draws);
    for _ in 0..cfg.draws {
        let x: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let p = Link::Logit.prob(cfg.beta[0] + cfg.beta[1] * x + cfg.gamma * z);
        y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        xz.push([x, z]);
    }
    (y, xz)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Monte Carlo estimates of `E[T₁(θ; θ⁰; π₀)]` at the truth and at random
/// perturbations, on common draws. `β⁰` comes from the base-model fit to an
/// independent sample of the same size and `π₀` is the true event rate
/// averaged over the draws.
pub fn proper_change_check(cfg: &ProperChangeConfig) -> Result<ProperChangeReport, SimError> {
    if cfg.draws < 2 || cfg.norms.is_empty() {
        return Err(SimError::InvalidConfig("need at least two draws and one perturbation norm".into()));
    }
    let mut rng = replicate_stream(cfg.seed, u64::MAX, 0);
    let (y_pop, xz_pop) = draw_truth_sample(cfg, &mut rng);
    let mut design = Matrix::zeros(cfg.draws, 2);
    for (i, r) in xz_pop.iter().enumerate() {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = r[0];
    }
    let base_fit = fit(&y_pop, &design, Link::Logit)
        .map_err(|source| SimError::Glm(GlmError::Fit { model: crate::glm::ModelRole::Base, source }))?;
    let base = [base_fit.coefficients[0], base_fit.coefficients[1]];

    let (y, xz) = draw_truth_sample(cfg, &mut rng);
    let pi0 = xz
        .iter()
        .map(|r| Link::Logit.prob(cfg.beta[0] + cfg.beta[1] * r[0] + cfg.gamma * r[1]))
        .sum::<f64>()
        / cfg.draws as f64;
    let resid: Vec<f64> = y
        .iter()
        .zip(&xz)
        .map(|(yi, r)| {
            let g0 = Link::Logit.prob(base[0] + base[1] * r[0]);
            match cfg.estimator {
                T1Estimator::Sampled => yi - g0,
                T1Estimator::Conditional => Link::Logit.prob(cfg.beta[0] + cfg.beta[1] * r[0] + cfg.gamma * r[1]) - g0,
            }
        })
        .collect();
    let t1 = |theta: [f64; 3]| -> Vec<f64> {
        xz.iter()
            .zip(&resid)
            .map(|(r, ri)| {
                let delta = theta[0] + theta[1] * r[0] + theta[2] * r[1] - base[0] - base[1] * r[0];
                reclass::mnri_single_term(*ri, delta, pi0)
            })
            .collect()
    };
    let truth = [cfg.beta[0], cfg.beta[1], cfg.gamma];
    let at_truth = t1(truth);
    let (mean_truth, se_truth) = mean_se(&at_truth);

    let mut perturbations = Vec::with_capacity(cfg.perturbations);
    for j in 0..cfg.perturbations {
        let norm = cfg.norms[j % cfg.norms.len()];
        let dir: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let delta = dir.map(|d| norm * d / len);
        let theta = [truth[0] + delta[0], truth[1] + delta[1], truth[2] + delta[2]];
        let values = t1(theta);
        let diffs: Vec<f64> = at_truth.iter().zip(&values).map(|(a, b)| a - b).collect();
        let (d, d_se) = mean_se(&diffs);
        perturbations.push(PerturbationResult {
            delta,
            norm,
            mean_t1: mean_se(&values).0,
            paired_difference: d,
            paired_se: d_se,
        });
    }
    Ok(ProperChangeReport { base, pi0, mean_t1_at_truth: mean_truth, se_at_truth: se_truth, perturbations })
}
