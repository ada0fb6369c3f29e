//! Maximum-likelihood fitting of the constant, base and expanded
//! binary-response models.
//!
//! All three models share one [`Dataset`]: the base model uses the `x`
//! columns (the first of which is the intercept), the expanded model uses
//! `x` followed by `z`, and the constant model is intercept only. Fits are by
//! Fisher scoring with step halving.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{dot, norm_cdf, norm_pdf, Cholesky, Matrix, NumericsError, SymMatrix};

/// Probabilities used inside `log` are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const STEP_TOLERANCE: f64 = 1e-8;
/// Coefficient norm beyond which a still-improving fit is declared separated.
pub const SEPARATION_NORM: f64 = 1e3;
const SEPARATION_PROB: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("complete or quasi-complete separation (coefficient norm {norm:.1} after {iterations} iterations)")]
    Separation { iterations: usize, norm: f64 },
    #[error("design matrix is rank deficient (column {column} is collinear with earlier columns)")]
    RankDeficient { column: usize },
    #[error("Fisher scoring did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
}

/// Which member of the nested triple a fit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Constant,
    Base,
    Expanded,
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelRole::Constant => "constant",
            ModelRole::Base => "base",
            ModelRole::Expanded => "expanded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("degenerate outcome: all observations are {0}")]
    DegenerateOutcome(u8),
    #[error("{model} model fit failed: {source}")]
    Fit {
        model: ModelRole,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Inverse link `G` of the binary-response model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
    Probit,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
        })
    }
}

impl std::str::FromStr for Link {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            other => Err(format!("unknown link '{other}' (expected logit or probit)")),
        }
    }
}

impl Link {
    /// `G(η)`.
    #[inline]
    pub fn prob(self, eta: f64) -> f64 {
        self.prob_pair(eta).0
    }

    /// `(G(η), 1 − G(η))`, each computed without cancellation.
    #[inline]
    pub fn prob_pair(self, eta: f64) -> (f64, f64) {
        match self {
            Link::Logit => {
                if eta >= 0.0 {
                    let e = (-eta).exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                } else {
                    let e = eta.exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                }
            }
            Link::Probit => (norm_cdf(eta), norm_cdf(-eta)),
        }
    }

    /// `G′(η)`.
    #[inline]
    pub fn density(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let (g, gc) = self.prob_pair(eta);
                g * gc
            }
            Link::Probit => norm_pdf(eta),
        }
    }

    /// Score-residual weight `h(η) = G′(η) / [G(η)(1 − G(η))]`; identically 1
    /// for the logit link.
    #[inline]
    pub fn h(self, eta: f64) -> f64 {
        match self {
            Link::Logit => 1.0,
            Link::Probit => {
                let (g, gc) = self.prob_pair(eta);
                let v = (g * gc).max(PROB_CLAMP * (1.0 - PROB_CLAMP));
                norm_pdf(eta) / v
            }
        }
    }

    /// Score residual `h(η)·(y − G(η))`.
    #[inline]
    pub fn score_residual(self, eta: f64, y: f64) -> f64 {
        match self {
            Link::Logit => y - self.prob(eta),
            Link::Probit => self.h(eta) * (y - self.prob(eta)),
        }
    }

    /// Fisher weight `G′(η)² / [G(η)(1 − G(η))] = h(η)·G′(η)`.
    #[inline]
    pub fn fisher_weight(self, eta: f64) -> f64 {
        match self {
            Link::Logit => self.density(eta),
            Link::Probit => self.h(eta) * norm_pdf(eta),
        }
    }
}

/// Binary outcomes with base covariates `x` (first column all ones) and new
/// covariates `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    x: Matrix,
    z: Matrix,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Matrix, z: Matrix) -> Result<Self, GlmError> {
        let n = y.len();
        if x.rows() != n || z.rows() != n {
            return Err(GlmError::InvalidData(format!(
                "row counts differ: y has {n}, x has {}, z has {}",
                x.rows(),
                z.rows()
            )));
        }
        if x.cols() == 0 {
            return Err(GlmError::InvalidData("x needs at least the intercept column".into()));
        }
        if let Some(i) = (0..n).find(|&i| x[(i, 0)] != 1.0) {
            return Err(GlmError::InvalidData(format!("x[{i}, 0] is not the intercept value 1")));
        }
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(GlmError::InvalidData(format!("y[{i}] = {} is not 0 or 1", y[i])));
        }
        if x.as_slice().iter().chain(z.as_slice()).any(|v| !v.is_finite()) {
            return Err(GlmError::InvalidData("covariates contain non-finite values".into()));
        }
        let (p, q) = (x.cols(), z.cols());
        if n < p + q + 1 {
            return Err(GlmError::InvalidData(format!(
                "{n} observations cannot support {p} base and {q} new covariates"
            )));
        }
        let events = y.iter().filter(|&&v| v == 1.0).count();
        if events == 0 {
            return Err(GlmError::DegenerateOutcome(0));
        }
        if events == n {
            return Err(GlmError::DegenerateOutcome(1));
        }
        Ok(Self { y, x, z })
    }

    /// Builds `x = [1, x_cols...]` from covariate columns.
    pub fn from_columns(y: Vec<f64>, x_cols: &[Vec<f64>], z_cols: &[Vec<f64>]) -> Result<Self, GlmError> {
        let n = y.len();
        let x = columns_to_matrix(n, std::iter::once(&vec![1.0; n]).chain(x_cols))?;
        let z = columns_to_matrix(n, z_cols.iter())?;
        Self::new(y, x, z)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of base covariates including the intercept.
    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    /// Number of new covariates.
    #[inline]
    pub fn q(&self) -> usize {
        self.z.cols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn events(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1.0).count()
    }

    /// Observed event rate ȳ.
    pub fn ybar(&self) -> f64 {
        self.events() as f64 / self.n() as f64
    }

    /// `[x | z]`.
    pub fn expanded_design(&self) -> Matrix {
        self.x.hstack(&self.z).expect("row counts checked on construction")
    }

    pub fn constant_design(&self) -> Matrix {
        Matrix::from_row_major(self.n(), 1, vec![1.0; self.n()]).expect("n x 1")
    }

    /// Row subset (in the given order), revalidated.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Dataset, GlmError> {
        Dataset::new(idx.iter().map(|&i| self.y[i]).collect(), self.x.select_rows(idx), self.z.select_rows(idx))
    }
}

fn columns_to_matrix<'a>(n: usize, cols: impl Iterator<Item = &'a Vec<f64>>) -> Result<Matrix, GlmError> {
    let cols: Vec<&Vec<f64>> = cols.collect();
    if let Some(c) = cols.iter().find(|c| c.len() != n) {
        return Err(GlmError::InvalidData(format!("column of length {} where {n} expected", c.len())));
    }
    let mut m = Matrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            m[(i, j)] = c[i];
        }
    }
    Ok(m)
}

/// One fitted binary-response model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub coefficients: Vec<f64>,
    /// Linear predictor `η_i` at the estimate.
    pub eta: Vec<f64>,
    pub fitted_probs: Vec<f64>,
    pub loglik: f64,
    /// Total (not per-observation) expected information at the estimate.
    pub expected_information: SymMatrix,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedModel {
    pub fn n(&self) -> usize {
        self.eta.len()
    }

    /// `design · coefficients` for new rows.
    pub fn linear_predictor(&self, design: &Matrix) -> Result<Vec<f64>, NumericsError> {
        design.matvec(&self.coefficients)
    }
}

/// Bernoulli log-likelihood with clamped probabilities.
pub fn log_likelihood(y: &[f64], design: &Matrix, beta: &[f64], link: Link) -> f64 {
    (0..y.len()).map(|i| obs_loglik(y[i], dot(design.row(i), beta), link)).sum()
}

#[inline]
fn obs_loglik(y: f64, eta: f64, link: Link) -> f64 {
    let (g, gc) = link.prob_pair(eta);
    let g = g.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let gc = gc.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    y * g.ln() + (1.0 - y) * gc.ln()
}

/// Analytic score `Σ_i r_i x_i`.
pub fn score_vector(y: &[f64], design: &Matrix, beta: &[f64], link: Link) -> Vec<f64> {
    let k = design.cols();
    let mut u = vec![0.0; k];
    for (i, &yi) in y.iter().enumerate() {
        let row = design.row(i);
        let r = link.score_residual(dot(row, beta), yi);
        for j in 0..k {
            u[j] += r * row[j];
        }
    }
    u
}

/// Total expected information `Σ_i w_i x_i x_iᵀ`, `w = G′² / [G(1−G)]`.
pub fn expected_information(design: &Matrix, beta: &[f64], link: Link) -> SymMatrix {
    let k = design.cols();
    let mut info = Matrix::zeros(k, k);
    for i in 0..design.rows() {
        let row = design.row(i);
        let w = link.fisher_weight(dot(row, beta));
        for a in 0..k {
            let wa = w * row[a];
            for b in a..k {
                info[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    SymMatrix::new(info).expect("constructed symmetric")
}

fn extreme_probabilities(eta: &[f64], link: Link) -> bool {
    eta.iter().any(|&e| {
        let (g, gc) = link.prob_pair(e);
        g < SEPARATION_PROB || gc < SEPARATION_PROB
    })
}

/// Fits one model by Fisher scoring.
///
/// Converged when `max|score| ≤ 1e-8` and the scoring step has norm
/// `≤ 1e-8`. A trial step that lowers the likelihood is halved.
pub fn fit(y: &[f64], design: &Matrix, link: Link) -> Result<FittedModel, FitError> {
    let (n, k) = (design.rows(), design.cols());
    if y.len() != n {
        return Err(FitError::InvalidInput(format!("y has {} rows, design has {n}", y.len())));
    }
    if k == 0 || n <= k {
        return Err(FitError::InvalidInput(format!("{n} rows for {k} coefficients")));
    }

    let mut beta = vec![0.0; k];
    let mut loglik = log_likelihood(y, design, &beta, link);
    let mut iterations = 0;
    loop {
        let score = score_vector(y, design, &beta, link);
        let info = expected_information(design, &beta, link);
        let chol = match Cholesky::factor(&info) {
            Ok(c) => c,
            Err(NumericsError::NotPositiveDefinite { pivot }) => {
                let eta = design.matvec(&beta).expect("conformable");
                if iterations > 0 && extreme_probabilities(&eta, link) {
                    return Err(FitError::Separation { iterations, norm: norm(&beta) });
                }
                return Err(FitError::RankDeficient { column: pivot });
            }
            Err(e) => return Err(FitError::InvalidInput(e.to_string())),
        };
        let step = chol.solve(&score);
        let max_score = score.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max_score <= SCORE_TOLERANCE && norm(&step) <= STEP_TOLERANCE {
            let eta = design.matvec(&beta).expect("conformable");
            let fitted_probs = eta.iter().map(|&e| link.prob(e)).collect();
            return Ok(FittedModel {
                coefficients: beta,
                eta,
                fitted_probs,
                loglik,
                expected_information: info,
                converged: true,
                iterations,
            });
        }
        if iterations >= MAX_ITERATIONS {
            let eta = design.matvec(&beta).expect("conformable");
            if extreme_probabilities(&eta, link) {
                return Err(FitError::Separation { iterations, norm: norm(&beta) });
            }
            return Err(FitError::NoConvergence { iterations });
        }
        iterations += 1;

        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ll;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            cand_ll = log_likelihood(y, design, &candidate, link);
            // allow for rounding noise in the likelihood at convergence
            if cand_ll >= loglik - 1e-12 * loglik.abs().max(1.0) || halvings >= MAX_HALVINGS {
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
        let improving = cand_ll > loglik;
        beta = candidate;
        loglik = cand_ll;
        if improving && norm(&beta) > SEPARATION_NORM {
            return Err(FitError::Separation { iterations, norm: norm(&beta) });
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Score residuals `r_i = h(η_i)(y_i − G(η_i))` of a fitted model.
pub fn score_residuals(fit: &FittedModel, link: Link, y: &[f64]) -> Vec<f64> {
    fit.eta.iter().zip(y).map(|(&e, &yi)| link.score_residual(e, yi)).collect()
}

/// The constant, base and expanded fits on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedFits {
    pub expanded: FittedModel,
    pub base: FittedModel,
    pub constant: FittedModel,
    pub link: Link,
    pub data: Arc<Dataset>,
}

impl NestedFits {
    /// Score difference `Δ_i = η̂_i(expanded) − η̂_i(base)` on the fitting data.
    pub fn score_difference(&self) -> Vec<f64> {
        self.expanded.eta.iter().zip(&self.base.eta).map(|(a, b)| a - b).collect()
    }

    /// `Δ_i` for the rows of another dataset with the same covariate layout.
    pub fn score_difference_on(&self, other: &Dataset) -> Result<Vec<f64>, GlmError> {
        if other.p() != self.data.p() || other.q() != self.data.q() {
            return Err(GlmError::InvalidData(format!(
                "covariate layout (p={}, q={}) differs from the fitted (p={}, q={})",
                other.p(),
                other.q(),
                self.data.p(),
                self.data.q()
            )));
        }
        let exp = self.expanded.linear_predictor(&other.expanded_design())?;
        let base = self.base.linear_predictor(other.x())?;
        Ok(exp.iter().zip(&base).map(|(a, b)| a - b).collect())
    }

    /// Base-model score residuals on the fitting data.
    pub fn base_residuals(&self) -> Vec<f64> {
        score_residuals(&self.base, self.link, self.data.y())
    }

    pub fn ybar(&self) -> f64 {
        self.data.ybar()
    }
}

/// Fits the nested triple; a failure names the model that failed.
pub fn fit_nested(data: impl Into<Arc<Dataset>>, link: Link) -> Result<NestedFits, GlmError> {
    let data: Arc<Dataset> = data.into();
    let y = data.y();
    let tag = |model| move |source| GlmError::Fit { model, source };
    let constant = fit(y, &data.constant_design(), link).map_err(tag(ModelRole::Constant))?;
    let base = fit(y, data.x(), link).map_err(tag(ModelRole::Base))?;
    let expanded = fit(y, &data.expanded_design(), link).map_err(tag(ModelRole::Expanded))?;
    Ok(NestedFits { expanded, base, constant, link, data })
}

/// Partition of the per-observation expected information `n⁻¹ I(θ̂)` of the
/// expanded model into base (`β`) and new (`γ`) blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationBlocks {
    pub beta_beta: SymMatrix,
    pub beta_gamma: Matrix,
    pub gamma_gamma: SymMatrix,
    /// `I^γγ = (I_γγ − I_γβ I_ββ⁻¹ I_βγ)⁻¹`, the γγ block of the inverse.
    pub gamma_gamma_inverse: SymMatrix,
}

/// `p` is the number of base coefficients (intercept included).
pub fn information_blocks(expanded: &FittedModel, p: usize) -> Result<InformationBlocks, NumericsError> {
    let k = expanded.coefficients.len();
    if p == 0 || p >= k {
        return Err(NumericsError::DimensionMismatch { expected: k, found: p });
    }
    let n = expanded.n() as f64;
    let info = expanded.expected_information.scale(1.0 / n);
    let full = info.as_matrix();
    let beta_beta = info.principal_block(0..p);
    let beta_gamma = full.block(0..p, p..k);
    let gamma_gamma = info.principal_block(p..k);

    // Schur complement I_γγ − I_γβ I_ββ⁻¹ I_βγ
    let chol = Cholesky::factor(&beta_beta)?;
    let q = k - p;
    let mut solved = Matrix::zeros(p, q);
    for j in 0..q {
        let col = chol.solve(&beta_gamma.column(j));
        for i in 0..p {
            solved[(i, j)] = col[i];
        }
    }
    let correction = beta_gamma.transpose().matmul(&solved)?;
    let mut schur = gamma_gamma.as_matrix().clone();
    for a in 0..q {
        for b in 0..q {
            schur[(a, b)] -= correction[(a, b)];
        }
    }
    let schur = SymMatrix::new(schur)?;
    let gamma_gamma_inverse = schur.inverse_spd()?;
    Ok(InformationBlocks { beta_beta, beta_gamma, gamma_gamma, gamma_gamma_inverse })
}
