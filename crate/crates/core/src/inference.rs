//! Reference distributions and p-values for the mNRI and the legacy NRI test.
//!
//! Single sample: `n·T_n^S → k·χ²_q` with `k = φ(0)/[π₀(1 − π₀)]`.
//!
//! Train/test: `n_test·T^S → (k/2) Σ λ_j χ²_j` where the `λ_j` are the
//! eigenvalues of `V·C`, `V = blockdiag(var(γ̃), var(γ̂))` and
//! `C = [[0, D], [D, 0]]` with `D = var(γ̃)⁻¹`. Variances here are absolute,
//! i.e. the γγ block of the inverse of the total expected information, so
//! training and test sizes may differ: the weights depend on the two
//! samples only through the ratio `var(γ̂)·var(γ̃)⁻¹`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::{information_blocks, FittedModel, GlmError, NestedFits};
use crate::numerics::{
    chisq_sf, eig_sym, mixture_tail, norm_pdf, norm_sf, MixtureSpec, NumericsError, SymMatrix,
};
use crate::reclass::{self, Kernel, ReclassError, TrainTestPair};
use crate::sim::{self, SimConfig, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("degenerate outcome: event rate {0} is not inside (0, 1)")]
    DegenerateOutcome(f64),
    #[error("the expanded model adds no new covariates")]
    NoNewCovariates,
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Reclass(#[from] ReclassError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sim(#[from] Box<SimError>),
}

impl From<SimError> for InferenceError {
    fn from(e: SimError) -> Self {
        InferenceError::Sim(Box::new(e))
    }
}

/// `k = φ(0) / [π(1 − π)]`.
pub fn k_constant(pi_hat: f64) -> Result<f64, InferenceError> {
    if !(pi_hat > 0.0 && pi_hat < 1.0) {
        return Err(InferenceError::DegenerateOutcome(pi_hat));
    }
    Ok(norm_pdf(0.0) / (pi_hat * (1.0 - pi_hat)))
}

/// Null distribution a statistic is referred to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// `k·χ²_q`, upper tail.
    ScaledChisq { k: f64, q: u32 },
    /// `scale·Σ λ_j χ²_j`, upper tail.
    ChisqMixture { scale: f64, weights: Vec<f64> },
    /// `N(0, variance)`, two-sided.
    Normal { variance: f64 },
}

impl Reference {
    pub fn p_value(&self, statistic: f64) -> Result<f64, InferenceError> {
        let p = match self {
            Reference::ScaledChisq { k, q } => chisq_sf((statistic / k).max(0.0), *q),
            Reference::ChisqMixture { scale, weights } => {
                mixture_tail(statistic, &MixtureSpec::new(weights.clone(), *scale)?)?
            }
            Reference::Normal { variance } => (2.0 * norm_sf(statistic.abs() / variance.sqrt())).min(1.0),
        };
        Ok(p.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub reference: Reference,
    pub p_value: f64,
    pub notes: String,
}

impl TestResult {
    fn new(statistic: f64, reference: Reference, notes: impl Into<String>) -> Result<Self, InferenceError> {
        let p_value = reference.p_value(statistic)?;
        Ok(Self { statistic, reference, p_value, notes: notes.into() })
    }

    /// Recomputes the p-value from the stored statistic and reference.
    pub fn recompute_p_value(&self) -> Result<f64, InferenceError> {
        self.reference.p_value(self.statistic)
    }
}

pub const LEGACY_NOTE: &str =
    "invalid reference distribution: the null distribution of the NRI is neither normal nor centred at zero";

fn new_covariates(fits: &NestedFits) -> Result<u32, InferenceError> {
    match fits.data.q() {
        0 => Err(InferenceError::NoNewCovariates),
        q => Ok(q as u32),
    }
}

/// Single-sample mNRI test: `n·T_n^S` against `k·χ²_q`.
pub fn test_mnri_single(fits: &NestedFits) -> Result<TestResult, InferenceError> {
    let q = new_covariates(fits)?;
    let k = k_constant(fits.ybar())?;
    let statistic = fits.data.n() as f64 * reclass::mnri_smooth(fits)?;
    TestResult::new(statistic, Reference::ScaledChisq { k, q }, "n·T_n^S referred to k·χ²_q")
}

/// Eigenvalues of `V·C`, returned as `±√μ_j` (descending), where the `μ_j`
/// are the eigenvalues of `var(γ̂)^{1/2} var(γ̃)⁻¹ var(γ̂)^{1/2}`.
pub fn mixture_weights(var_gamma_train: &SymMatrix, var_gamma_test: &SymMatrix) -> Result<Vec<f64>, InferenceError> {
    let q = var_gamma_train.dim();
    if var_gamma_test.dim() != q {
        return Err(NumericsError::DimensionMismatch { expected: q, found: var_gamma_test.dim() }.into());
    }
    let mu: Vec<f64> = if var_gamma_train == var_gamma_test {
        // identity ratio; skip the round-off of the general path
        vec![1.0; q]
    } else {
        let root = var_gamma_train.sqrt_psd()?;
        let ratio = var_gamma_test.inverse_spd()?.congruence(root.as_matrix())?;
        eig_sym(&ratio)?.values
    };
    let mut weights = Vec::with_capacity(2 * q);
    for m in mu {
        if m < 0.0 {
            return Err(NumericsError::NotPositiveDefinite { pivot: 0 }.into());
        }
        weights.push(m.sqrt());
        weights.push(-m.sqrt());
    }
    weights.sort_by(|a, b| b.total_cmp(a));
    Ok(weights)
}

/// `var(γ̂)`: γγ block of the inverse total expected information.
pub fn gamma_variance(expanded: &FittedModel, p: usize) -> Result<SymMatrix, InferenceError> {
    let blocks = information_blocks(expanded, p)?;
    Ok(blocks.gamma_gamma_inverse.scale(1.0 / expanded.n() as f64))
}

/// Train/test mNRI test: `n_test·T^S` against `(k/2) Σ λ_j χ²_j`.
pub fn test_mnri_train_test(pair: &TrainTestPair) -> Result<TestResult, InferenceError> {
    new_covariates(&pair.test_fits)?;
    let p = pair.test_data().p();
    let var_train = gamma_variance(&pair.train_fits.expanded, p)?;
    let var_test = gamma_variance(&pair.test_fits.expanded, p)?;
    let weights = mixture_weights(&var_train, &var_test)?;
    let k = k_constant(pair.test_fits.ybar())?;
    let statistic = pair.test_data().n() as f64 * reclass::mnri_train_test(pair)?;
    TestResult::new(
        statistic,
        Reference::ChisqMixture { scale: 0.5 * k, weights },
        "n_test·T^S referred to (k/2)·Σλ_jχ²_j",
    )
}

fn legacy_variance(y: &[f64]) -> Result<f64, InferenceError> {
    let n1 = y.iter().filter(|v| **v == 1.0).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(InferenceError::DegenerateOutcome(n1 as f64 / y.len().max(1) as f64));
    }
    Ok(0.25 / n1 as f64 + 0.25 / n0 as f64)
}

/// Normal test of the half-scale NRI with variance `1/(4n₁) + 1/(4n₀)`.
/// Kept for comparison only.
pub fn test_nri_normal_legacy(fits: &NestedFits) -> Result<TestResult, InferenceError> {
    let variance = legacy_variance(fits.data.y())?;
    TestResult::new(reclass::nri_hard(fits)?, Reference::Normal { variance }, LEGACY_NOTE)
}

/// Train/test version of [`test_nri_normal_legacy`], on the test sample.
pub fn test_nri_normal_legacy_train_test(pair: &TrainTestPair) -> Result<TestResult, InferenceError> {
    let variance = legacy_variance(pair.test_data().y())?;
    TestResult::new(reclass::nri_train_test(pair, Kernel::Hard)?, Reference::Normal { variance }, LEGACY_NOTE)
}

/// A sample moment with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `|value| > m·se`
    pub fn nonzero_beyond(&self, m: f64) -> bool {
        self.value.abs() > m * self.se
    }
}

/// Moments of a simulated null distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub replicates: usize,
    pub mean: Estimate,
    pub variance: f64,
    pub skewness: Estimate,
    pub excess_kurtosis: f64,
    pub jarque_bera: f64,
    /// Upper tail of `χ²₂` at the Jarque–Bera statistic.
    pub jarque_bera_p: f64,
}

impl DistributionSummary {
    pub fn from_sample(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in x {
            let d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        let sd = m2.sqrt();
        let skew = m3 / m2.powf(1.5);
        let kurt = m4 / (m2 * m2) - 3.0;
        // influence function of the skewness
        let infl: Vec<f64> = x
            .iter()
            .map(|v| {
                let u = (v - mean) / sd;
                u.powi(3) - 3.0 * u - 1.5 * skew * (u * u - 1.0)
            })
            .collect();
        let infl_var = infl.iter().map(|v| v * v).sum::<f64>() / n;
        let jb = n / 6.0 * (skew * skew + 0.25 * kurt * kurt);
        Self {
            replicates: x.len(),
            mean: Estimate { value: mean, se: (m2 * n / (n - 1.0)).sqrt() / n.sqrt() },
            variance: m2 * n / (n - 1.0),
            skewness: Estimate { value: skew, se: (infl_var / n).sqrt() },
            excess_kurtosis: kurt,
            jarque_bera: jb,
            jarque_bera_p: chisq_sf(jb, 2),
        }
    }
}

/// Simulated null distribution of `n·R_n^S`.
pub fn null_distribution_diagnostic(config: &SimConfig) -> Result<DistributionSummary, InferenceError> {
    let run = sim::simulate_cell(config, 0)?;
    let values: Vec<f64> = run.outcomes.iter().map(|o| o.nri_smooth_scaled).collect();
    Ok(DistributionSummary::from_sample(&values))
}
