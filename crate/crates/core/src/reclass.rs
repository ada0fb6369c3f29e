//! Reclassification statistics: the NRI (on the half-NRI scale), the
//! modified NRI that weights by base-model score residuals, their smooth
//! versions, and the mean-absolute-difference summary.
//!
//! Every statistic has the form
//!
//! ```text
//! [n ȳ(1 − ȳ)]⁻¹ Σ w_i (K(Δ_i) − 1/2)
//! ```
//!
//! where `Δ_i` is the expanded-minus-base linear predictor, `K` is either the
//! extended indicator or `Φ`, and the weight `w_i` is `y_i − ȳ` for the NRI
//! and the base-model score residual for the mNRI.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glm::{score_residuals, Dataset, GlmError, NestedFits};
use crate::numerics::norm_cdf;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReclassError {
    #[error("degenerate outcome: event rate {ybar} leaves nothing to reclassify")]
    DegenerateOutcome { ybar: f64 },
    #[error("every score difference is exactly zero")]
    AllTies,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("train and test fits are incompatible: {0}")]
    IncompatiblePair(String),
    #[error(transparent)]
    Glm(#[from] GlmError),
}

/// `I(u > 0)` with the value 1/2 at `u = 0`.
#[inline]
pub fn extended_indicator(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// How a score difference is turned into a reclassification weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Extended indicator.
    Hard,
    /// Standard normal distribution function.
    Smooth,
}

impl Kernel {
    #[inline]
    pub fn apply(self, delta: f64) -> f64 {
        match self {
            Kernel::Hard => extended_indicator(delta),
            Kernel::Smooth => norm_cdf(delta),
        }
    }
}

fn check_ybar(ybar: f64) -> Result<f64, ReclassError> {
    if ybar > 0.0 && ybar < 1.0 {
        Ok(ybar * (1.0 - ybar))
    } else {
        Err(ReclassError::DegenerateOutcome { ybar })
    }
}

/// `[n ȳ(1 − ȳ)]⁻¹ Σ w_i (K(Δ_i) − 1/2)` with `n = w.len()`.
pub fn reclass_statistic(weights: &[f64], delta: &[f64], ybar: f64, kernel: Kernel) -> Result<f64, ReclassError> {
    if weights.len() != delta.len() {
        return Err(ReclassError::LengthMismatch { expected: weights.len(), found: delta.len() });
    }
    let v = check_ybar(ybar)?;
    let sum: f64 = weights.iter().zip(delta).map(|(w, d)| w * (kernel.apply(*d) - 0.5)).sum();
    Ok(sum / (weights.len() as f64 * v))
}

/// NRI from outcomes and score differences.
pub fn nri_from_parts(y: &[f64], delta: &[f64], kernel: Kernel) -> Result<f64, ReclassError> {
    let ybar = mean(y);
    let centred: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    reclass_statistic(&centred, delta, ybar, kernel)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `R_n`, the NRI on the half-NRI scale.
pub fn nri_hard(fits: &NestedFits) -> Result<f64, ReclassError> {
    nri_from_parts(fits.data.y(), &fits.score_difference(), Kernel::Hard)
}

/// `R_n^S`.
pub fn nri_smooth(fits: &NestedFits) -> Result<f64, ReclassError> {
    nri_from_parts(fits.data.y(), &fits.score_difference(), Kernel::Smooth)
}

/// `T_n`, the modified NRI.
pub fn mnri_hard(fits: &NestedFits) -> Result<f64, ReclassError> {
    reclass_statistic(&fits.base_residuals(), &fits.score_difference(), fits.ybar(), Kernel::Hard)
}

/// `T_n^S`.
pub fn mnri_smooth(fits: &NestedFits) -> Result<f64, ReclassError> {
    reclass_statistic(&fits.base_residuals(), &fits.score_difference(), fits.ybar(), Kernel::Smooth)
}

/// Nested fits on independent training and test samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTestPair {
    pub train_fits: NestedFits,
    pub test_fits: NestedFits,
}

impl TrainTestPair {
    pub fn new(train_fits: NestedFits, test_fits: NestedFits) -> Result<Self, ReclassError> {
        if train_fits.link != test_fits.link {
            return Err(ReclassError::IncompatiblePair(format!(
                "links differ ({} vs {})",
                train_fits.link, test_fits.link
            )));
        }
        let (a, b) = (&train_fits.data, &test_fits.data);
        if a.p() != b.p() || a.q() != b.q() {
            return Err(ReclassError::IncompatiblePair(format!(
                "covariate layouts differ (p={}, q={} vs p={}, q={})",
                a.p(),
                a.q(),
                b.p(),
                b.q()
            )));
        }
        Ok(Self { train_fits, test_fits })
    }

    pub fn test_data(&self) -> &Dataset {
        &self.test_fits.data
    }

    /// Training-fit score differences evaluated on the test rows.
    pub fn test_score_difference(&self) -> Result<Vec<f64>, ReclassError> {
        Ok(self.train_fits.score_difference_on(self.test_data())?)
    }
}

/// Train/test mNRI: residuals from the test-sample base fit, `Φ` argument
/// from the training fits, normalised on the test sample.
pub fn mnri_train_test(pair: &TrainTestPair) -> Result<f64, ReclassError> {
    let test = &pair.test_fits;
    let r = score_residuals(&test.base, test.link, test.data.y());
    reclass_statistic(&r, &pair.test_score_difference()?, test.ybar(), Kernel::Smooth)
}

/// Train/test NRI: training-fit score differences against test outcomes.
pub fn nri_train_test(pair: &TrainTestPair, kernel: Kernel) -> Result<f64, ReclassError> {
    nri_from_parts(pair.test_data().y(), &pair.test_score_difference()?, kernel)
}

/// Mean absolute difference of nested fitted probabilities and its
/// `[2ȳ(1 − ȳ)]⁻¹` rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MadSummary {
    pub mad: f64,
    pub scaled_mad: f64,
}

pub fn mad_probabilities(fits: &NestedFits) -> Result<MadSummary, ReclassError> {
    let v = check_ybar(fits.ybar())?;
    let mad = mean_abs_diff(&fits.expanded.fitted_probs, &fits.base.fitted_probs);
    Ok(MadSummary { mad, scaled_mad: mad / (2.0 * v) })
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `s_i = 2I(Δ_i) − 1` against the base residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignDecomposition {
    /// `sᵀr`
    pub sign_inner: f64,
    /// `sᵀs`, the number of untied subjects.
    pub sign_norm: usize,
    /// `[2ȳ(1 − ȳ)]⁻¹ sᵀr / sᵀs`
    pub regression_form: f64,
}

pub fn sign_decomposition_from_parts(
    residuals: &[f64],
    delta: &[f64],
    ybar: f64,
) -> Result<SignDecomposition, ReclassError> {
    if residuals.len() != delta.len() {
        return Err(ReclassError::LengthMismatch { expected: residuals.len(), found: delta.len() });
    }
    let v = check_ybar(ybar)?;
    let mut inner = 0.0;
    let mut norm = 0usize;
    for (r, d) in residuals.iter().zip(delta) {
        let s = 2.0 * extended_indicator(*d) - 1.0;
        if s != 0.0 {
            inner += s * r;
            norm += 1;
        }
    }
    if norm == 0 {
        return Err(ReclassError::AllTies);
    }
    Ok(SignDecomposition { sign_inner: inner, sign_norm: norm, regression_form: inner / norm as f64 / (2.0 * v) })
}

pub fn sign_decomposition(fits: &NestedFits) -> Result<SignDecomposition, ReclassError> {
    sign_decomposition_from_parts(&fits.base_residuals(), &fits.score_difference(), fits.ybar())
}

/// Single-subject mNRI kernel
/// `[π₀(1 − π₀)]⁻¹ r (I(Δ) − 1/2)` with the base model and event rate held
/// at fixed values.
#[inline]
pub fn mnri_single_term(residual: f64, delta: f64, pi0: f64) -> f64 {
    residual * (extended_indicator(delta) - 0.5) / (pi0 * (1.0 - pi0))
}

/// All single-sample reclassification summaries for one set of nested fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReclassReport {
    pub n: usize,
    pub ybar: f64,
    pub nri_hard: f64,
    pub nri_smooth: f64,
    pub mnri_hard: f64,
    pub mnri_smooth: f64,
    pub mad: f64,
    pub scaled_mad: f64,
    /// `[nȳ(1 − ȳ)]⁻¹ Σ (y_i − Ĝ_i)(I(Δ_i) − 1/2)` with `Ĝ` from the expanded
    /// model. Under the logit link `mnri_hard = cross_term + scaled_mad`
    /// exactly.
    pub cross_term: f64,
    pub sign_inner: f64,
    pub sign_norm: usize,
    /// `None` when every score difference is tied.
    pub regression_form: Option<f64>,
    pub ties: usize,
}

impl ReclassReport {
    pub fn compute(fits: &NestedFits) -> Result<Self, ReclassError> {
        let y = fits.data.y();
        let ybar = fits.ybar();
        let delta = fits.score_difference();
        let r = fits.base_residuals();
        let expanded_resid: Vec<f64> = y.iter().zip(&fits.expanded.fitted_probs).map(|(a, g)| a - g).collect();
        let mad = mad_probabilities(fits)?;
        let (sign_inner, sign_norm, regression_form) = match sign_decomposition_from_parts(&r, &delta, ybar) {
            Ok(s) => (s.sign_inner, s.sign_norm, Some(s.regression_form)),
            Err(ReclassError::AllTies) => (0.0, 0, None),
            Err(e) => return Err(e),
        };
        Ok(Self {
            n: y.len(),
            ybar,
            nri_hard: nri_from_parts(y, &delta, Kernel::Hard)?,
            nri_smooth: nri_from_parts(y, &delta, Kernel::Smooth)?,
            mnri_hard: reclass_statistic(&r, &delta, ybar, Kernel::Hard)?,
            mnri_smooth: reclass_statistic(&r, &delta, ybar, Kernel::Smooth)?,
            mad: mad.mad,
            scaled_mad: mad.scaled_mad,
            cross_term: reclass_statistic(&expanded_resid, &delta, ybar, Kernel::Hard)?,
            sign_inner,
            sign_norm,
            regression_form,
            ties: delta.iter().filter(|d| **d == 0.0).count(),
        })
    }

    /// `nri_hard` on the doubled (classical) scale.
    pub fn classic_nri(&self) -> f64 {
        2.0 * self.nri_hard
    }

    /// `mnri_hard − scaled_mad`; equals `cross_term` under the logit link.
    pub fn mad_gap(&self) -> f64 {
        self.mnri_hard - self.scaled_mad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{fit_nested, Dataset, Link};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn synthetic(n: usize, gamma: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            let zi: f64 = rng.sample(StandardNormal);
            let p = Link::Logit.prob(-0.3 + 0.8 * xi + gamma * zi);
            y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
            x.push(xi);
            z.push(zi);
        }
        Dataset::from_columns(y, &[x], &[z]).unwrap()
    }

    #[test]
    fn extended_indicator_values() {
        assert_eq!(extended_indicator(0.0), 0.5);
        assert_eq!(extended_indicator(-0.0), 0.5);
        assert_eq!(extended_indicator(3.7), 1.0);
        assert_eq!(extended_indicator(-1e-300), 0.0);
    }

    #[test]
    fn four_subject_hand_examples() {
        let y = [1.0, 1.0, 0.0, 0.0];
        // ȳ = 1/2, n ȳ(1−ȳ) = 1; terms ±1/4
        assert_eq!(nri_from_parts(&y, &[1.0, -1.0, -1.0, 1.0], Kernel::Hard).unwrap(), 0.0);
        assert_eq!(nri_from_parts(&y, &[1.0, 1.0, -1.0, -1.0], Kernel::Hard).unwrap(), 1.0);
        assert_eq!(nri_from_parts(&y, &[0.0; 4], Kernel::Hard).unwrap(), 0.0);
        assert_eq!(nri_from_parts(&y, &[0.0; 4], Kernel::Smooth).unwrap(), 0.0);
    }

    #[test]
    fn six_subject_worked_example() {
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let delta = [0.5, -0.2, 1.0, 0.3, -0.4, 0.0];
        let r = [0.4, -0.3, 0.2, -0.6, 0.7, -0.1];
        // ȳ = 1/2 so the normaliser is 6/4 = 1.5
        // hard: Σ r(I − 1/2) = 0.2 + 0.15 + 0.1 − 0.3 − 0.35 + 0 = −0.2
        let t = reclass_statistic(&r, &delta, 0.5, Kernel::Hard).unwrap();
        assert_abs_diff_eq!(t, -0.2 / 1.5, epsilon = 1e-15);
        // NRI: (y − ȳ) = ±1/2, Σ = 0.25 + 0.25 + 0.25 − 0.25 − 0.25 + 0 = 0.25
        assert_abs_diff_eq!(nri_from_parts(&y, &delta, Kernel::Hard).unwrap(), 0.25 / 1.5, epsilon = 1e-15);
        // smooth through Φ tables: Φ(.5)=.691462, Φ(−.2)=.420740, Φ(1)=.841345,
        // Φ(.3)=.617911, Φ(−.4)=.344578, Φ(0)=.5
        let phi = [0.691_462_461, 0.420_740_291, 0.841_344_746, 0.617_911_422, 0.344_578_258, 0.5];
        let hand: f64 = r.iter().zip(phi).map(|(ri, p)| ri * (p - 0.5)).sum::<f64>() / 1.5;
        assert_abs_diff_eq!(reclass_statistic(&r, &delta, 0.5, Kernel::Smooth).unwrap(), hand, epsilon = 1e-9);
        // signs (+,−,+,+,−,0): sᵀr = .4 + .3 + .2 − .6 − .7 = −0.4, sᵀs = 5
        let s = sign_decomposition_from_parts(&r, &delta, 0.5).unwrap();
        assert_abs_diff_eq!(s.sign_inner, -0.4, epsilon = 1e-15);
        assert_eq!(s.sign_norm, 5);
        assert_abs_diff_eq!(s.regression_form, -0.4 / 5.0 / 0.5, epsilon = 1e-15);
    }

    #[test]
    fn one_tie_in_five() {
        let s = sign_decomposition_from_parts(&[0.1, 0.2, -0.3, 0.4, -0.5], &[1.0, 0.0, -2.0, 3.0, -1.0], 0.4).unwrap();
        assert_eq!(s.sign_norm, 4);
        assert_eq!(
            sign_decomposition_from_parts(&[0.1, 0.2], &[0.0, 0.0], 0.5),
            Err(ReclassError::AllTies)
        );
    }

    #[test]
    fn degenerate_event_rate() {
        assert!(matches!(
            nri_from_parts(&[1.0, 1.0], &[1.0, -1.0], Kernel::Hard),
            Err(ReclassError::DegenerateOutcome { .. })
        ));
        assert!(matches!(
            reclass_statistic(&[0.1], &[1.0], 0.0, Kernel::Smooth),
            Err(ReclassError::DegenerateOutcome { .. })
        ));
    }

    #[test]
    fn scale_invariance_and_smooth_limit() {
        let fits = fit_nested(synthetic(300, 0.4, 7), Link::Logit).unwrap();
        let y = fits.data.y();
        let r = fits.base_residuals();
        let delta = fits.score_difference();
        assert!(delta.iter().all(|d| *d != 0.0));
        let hard_nri = nri_from_parts(y, &delta, Kernel::Hard).unwrap();
        let hard_mnri = reclass_statistic(&r, &delta, fits.ybar(), Kernel::Hard).unwrap();
        for c in [1e-3, 0.37, 5.0] {
            let scaled: Vec<f64> = delta.iter().map(|d| c * d).collect();
            assert_eq!(nri_from_parts(y, &scaled, Kernel::Hard).unwrap(), hard_nri);
            assert_eq!(reclass_statistic(&r, &scaled, fits.ybar(), Kernel::Hard).unwrap(), hard_mnri);
        }
        let big: Vec<f64> = delta.iter().map(|d| 1e6 * d).collect();
        // tiny |Δ| would still sit inside Φ's transition after scaling
        assert!(delta.iter().all(|d| d.abs() > 1e-5));
        assert_abs_diff_eq!(nri_from_parts(y, &big, Kernel::Smooth).unwrap(), hard_nri, epsilon = 1e-6);
        assert_abs_diff_eq!(
            reclass_statistic(&r, &big, fits.ybar(), Kernel::Smooth).unwrap(),
            hard_mnri,
            epsilon = 1e-6
        );
    }

    #[test]
    fn logit_mad_identity_and_sign_form() {
        for seed in 0..10 {
            let fits = fit_nested(synthetic(200 + 37 * seed as usize, 0.3 * seed as f64 / 3.0, seed), Link::Logit)
                .unwrap();
            let rep = ReclassReport::compute(&fits).unwrap();
            assert_abs_diff_eq!(rep.mnri_hard, rep.cross_term + rep.scaled_mad, epsilon = 1e-10);
            assert_abs_diff_eq!(rep.mad_gap(), rep.cross_term, epsilon = 1e-10);
            assert_eq!(rep.ties, 0);
            assert_abs_diff_eq!(rep.regression_form.unwrap(), rep.mnri_hard, epsilon = 1e-12);
            assert!(rep.nri_hard.abs() <= 1.0 && (0.0..=1.0).contains(&rep.mad));
        }
    }

    #[test]
    fn logit_mnri_uses_plain_residuals() {
        let fits = fit_nested(synthetic(250, 0.5, 3), Link::Logit).unwrap();
        let manual: Vec<f64> = fits.data.y().iter().zip(&fits.base.fitted_probs).map(|(y, g)| y - g).collect();
        let via_manual = reclass_statistic(&manual, &fits.score_difference(), fits.ybar(), Kernel::Hard).unwrap();
        assert_abs_diff_eq!(mnri_hard(&fits).unwrap(), via_manual, epsilon = 1e-14);
    }

    #[test]
    fn mad_scaling_factor() {
        // ȳ = 0.47 → 1/(2·0.47·0.53) = 2.00722…
        let factor = 1.0 / (2.0 * 0.47 * 0.53);
        assert_abs_diff_eq!(factor, 2.008, epsilon = 1e-3);
        let fits = fit_nested(synthetic(400, 0.5, 11), Link::Logit).unwrap();
        let m = mad_probabilities(&fits).unwrap();
        let ybar = fits.ybar();
        assert_abs_diff_eq!(m.scaled_mad, m.mad / (2.0 * ybar * (1.0 - ybar)), epsilon = 1e-15);
    }

    #[test]
    fn zero_expansion_gives_zero_statistics() {
        let mut fits = fit_nested(synthetic(150, 0.0, 5), Link::Logit).unwrap();
        fits.expanded.eta = fits.base.eta.clone();
        fits.expanded.fitted_probs = fits.base.fitted_probs.clone();
        let rep = ReclassReport::compute(&fits).unwrap();
        assert_eq!(rep.nri_hard, 0.0);
        assert_eq!(rep.nri_smooth, 0.0);
        assert_eq!(rep.mnri_hard, 0.0);
        assert_eq!(rep.mnri_smooth, 0.0);
        assert_eq!((rep.mad, rep.scaled_mad), (0.0, 0.0));
        assert_eq!(rep.ties, 150);
        assert_eq!(rep.regression_form, None);
    }

    #[test]
    fn train_test_collapses_to_single_sample() {
        let data = std::sync::Arc::new(synthetic(300, 0.2, 21));
        let a = fit_nested(data.clone(), Link::Probit).unwrap();
        let b = fit_nested(data, Link::Probit).unwrap();
        let pair = TrainTestPair::new(a.clone(), b).unwrap();
        assert_abs_diff_eq!(mnri_train_test(&pair).unwrap(), mnri_smooth(&a).unwrap(), epsilon = 1e-14);
        assert_abs_diff_eq!(nri_train_test(&pair, Kernel::Hard).unwrap(), nri_hard(&a).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn train_test_hand_computation() {
        let train = fit_nested(synthetic(200, 0.6, 1), Link::Logit).unwrap();
        let test = fit_nested(synthetic(180, 0.6, 2), Link::Logit).unwrap();
        let pair = TrainTestPair::new(train.clone(), test.clone()).unwrap();
        let (bt, bt0) = (&train.expanded.coefficients, &train.base.coefficients);
        let d = &test.data;
        let mut sum = 0.0;
        for i in 0..d.n() {
            let (x, z) = (d.x().row(i), d.z().row(i));
            let delta = bt[0] + bt[1] * x[1] + bt[2] * z[0] - bt0[0] - bt0[1] * x[1];
            let eta0 = test.base.coefficients[0] + test.base.coefficients[1] * x[1];
            sum += (d.y()[i] - Link::Logit.prob(eta0)) * (norm_cdf(delta) - 0.5);
        }
        let ybar = d.ybar();
        let hand = sum / (d.n() as f64 * ybar * (1.0 - ybar));
        assert_abs_diff_eq!(mnri_train_test(&pair).unwrap(), hand, epsilon = 1e-12);
    }

    #[test]
    fn incompatible_pairs_are_rejected() {
        let a = fit_nested(synthetic(100, 0.2, 1), Link::Logit).unwrap();
        let b = fit_nested(synthetic(100, 0.2, 2), Link::Probit).unwrap();
        assert!(matches!(TrainTestPair::new(a, b), Err(ReclassError::IncompatiblePair(_))));
    }
}
