//! Restricted (natural) cubic spline bases.
//!
//! With knots `t_1 < … < t_k` the basis has `k − 1` columns: `x` itself and,
//! for `j = 1..k−2`,
//!
//! ```text
//! [(x − t_j)₊³ − (x − t_{k−1})₊³ (t_k − t_j)/(t_k − t_{k−1})
//!             + (x − t_k)₊³ (t_{k−1} − t_j)/(t_k − t_{k−1})] / (t_k − t_1)²
//! ```
//!
//! Every column is linear below `t_1` and above `t_k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("{found} distinct values cannot support {knots} knots")]
    TooFewDistinctValues { knots: usize, found: usize },
    #[error("default knot placement is defined for 3, 4 or 5 knots, not {0}")]
    UnsupportedKnotCount(usize),
    #[error("knots must be finite and strictly increasing, with at least 3 of them")]
    InvalidKnots,
    #[error("sample quantiles gave tied knots {0:?}; supply knots explicitly")]
    TiedQuantileKnots(Vec<f64>),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

/// Quantile levels used by [`default_knots`].
pub fn default_knot_levels(k: usize) -> Result<&'static [f64], SplineError> {
    match k {
        3 => Ok(&[0.10, 0.50, 0.90]),
        4 => Ok(&[0.05, 0.35, 0.65, 0.95]),
        5 => Ok(&[0.05, 0.275, 0.50, 0.725, 0.95]),
        other => Err(SplineError::UnsupportedKnotCount(other)),
    }
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n − 1)p`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Knots at fixed sample quantiles of `x`.
pub fn default_knots(x: &[f64], k: usize) -> Result<Vec<f64>, SplineError> {
    let levels = default_knot_levels(k)?;
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(SplineError::NonFinite(i));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(SplineError::TooFewDistinctValues { knots: k, found: distinct.len() });
    }
    let knots: Vec<f64> = levels.iter().map(|&p| quantile_sorted(&sorted, p)).collect();
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SplineError::TiedQuantileKnots(knots));
    }
    Ok(knots)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        if knots.len() < 3 || knots.iter().any(|t| !t.is_finite()) || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SplineError::InvalidKnots);
        }
        Ok(Self { knots })
    }

    pub fn from_data(x: &[f64], k: usize) -> Result<Self, SplineError> {
        Self::new(default_knots(x, k)?)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn columns(&self) -> usize {
        self.knots.len() - 1
    }

    /// Basis row for one value.
    pub fn eval_row(&self, x: f64, out: &mut [f64]) {
        let t = &self.knots;
        let k = t.len();
        let (t1, tk1, tk) = (t[0], t[k - 2], t[k - 1]);
        let norm = (tk - t1) * (tk - t1);
        let cube = |u: f64| if u > 0.0 { u * u * u } else { 0.0 };
        let tail1 = cube(x - tk1);
        let tail2 = cube(x - tk);
        out[0] = x;
        for j in 0..k - 2 {
            let tj = t[j];
            let v = cube(x - tj) - tail1 * (tk - tj) / (tk - tk1) + tail2 * (tk1 - tj) / (tk - tk1);
            out[j + 1] = v / norm;
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(x.len(), self.columns());
        for (i, &v) in x.iter().enumerate() {
            self.eval_row(v, m.row_mut(i));
        }
        m
    }

    /// Column vectors of the basis.
    pub fn evaluate_columns(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let m = self.evaluate(x);
        (0..self.columns()).map(|j| m.column(j)).collect()
    }

    /// `<prefix>_rcs1 … <prefix>_rcs{k−1}`.
    pub fn column_names(&self, prefix: &str) -> Vec<String> {
        (1..=self.columns()).map(|j| format!("{prefix}_rcs{j}")).collect()
    }
}

/// Restricted cubic spline basis of `x` at `knots`.
pub fn rcs_basis(x: &[f64], knots: &[f64]) -> Result<Matrix, SplineError> {
    Ok(SplineBasis::new(knots.to_vec())?.evaluate(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{solve_spd, SymMatrix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quantile_rule_on_one_to_hundred() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let k = default_knots(&x, 4).unwrap();
        for (got, want) in k.iter().zip([5.95, 35.65, 65.35, 95.05]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let k3 = default_knots(&x, 3).unwrap();
        for (got, want) in k3.iter().zip([10.9, 50.5, 90.1]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(default_knots(&x, 5).unwrap().len(), 5);
    }

    #[test]
    fn knot_errors() {
        assert_eq!(
            default_knots(&[2.0; 20], 4),
            Err(SplineError::TooFewDistinctValues { knots: 4, found: 1 })
        );
        assert_eq!(default_knots(&[1.0, 2.0, 3.0], 6), Err(SplineError::UnsupportedKnotCount(6)));
        // four distinct values but the 5% and 35% quantiles coincide
        let mut x = vec![0.0; 50];
        x.extend([1.0, 2.0, 3.0]);
        assert!(matches!(default_knots(&x, 4), Err(SplineError::TiedQuantileKnots(_))));
        assert_eq!(SplineBasis::new(vec![1.0, 1.0, 2.0]), Err(SplineError::InvalidKnots));
        assert_eq!(SplineBasis::new(vec![1.0, 2.0]), Err(SplineError::InvalidKnots));
    }

    #[test]
    fn shape_and_first_knot() {
        let knots = [0.0, 1.0, 2.5, 4.0];
        let m = rcs_basis(&[0.0, 1.0, 3.0], &knots).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 3));
        assert_eq!(m.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(m[(1, 0)], 1.0);
        // x = 1: only (x − t_1)³/16 contributes to column 2
        assert_abs_diff_eq!(m[(1, 1)], 1.0 / 16.0, epsilon = 1e-15);
        assert_eq!(m[(1, 2)], 0.0);
    }

    #[test]
    fn hand_value_between_last_knots() {
        // x = 3 with knots 0, 1, 2.5, 4; column 2 (j = 1):
        // (3−0)³ − (3−2.5)³·(4−0)/(4−2.5) = 27 − 0.125·8/3
        let m = rcs_basis(&[3.0], &[0.0, 1.0, 2.5, 4.0]).unwrap();
        assert_abs_diff_eq!(m[(0, 1)], (27.0 - 0.125 * 8.0 / 3.0) / 16.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m[(0, 2)], (8.0 - 0.125 * 3.0 / 1.5) / 16.0, epsilon = 1e-14);
    }

    fn knots_strategy() -> impl Strategy<Value = Vec<f64>> {
        (prop::collection::vec(0.05f64..3.0, 2..5), -20.0f64..20.0).prop_map(|(gaps, start)| {
            let mut t = vec![start];
            for g in gaps {
                t.push(t.last().unwrap() + g);
            }
            t
        })
    }

    fn second_difference(b: &SplineBasis, x: f64, h: f64) -> Vec<f64> {
        let m = b.evaluate(&[x - h, x, x + h]);
        (0..b.columns()).map(|j| m[(0, j)] - 2.0 * m[(1, j)] + m[(2, j)]).collect()
    }

    proptest! {
        #[test]
        fn tails_are_linear(knots in knots_strategy(), offset in 0.01f64..10.0, h in 0.01f64..1.0) {
            let b = SplineBasis::new(knots.clone()).unwrap();
            let lo = knots[0] - offset - h;
            let hi = knots[knots.len() - 1] + offset + h;
            for x in [lo, hi] {
                for d in second_difference(&b, x, h) {
                    prop_assert!(d.abs() <= 1e-8, "second difference {d} at {x}");
                }
            }
        }

        #[test]
        fn continuous_across_knots(knots in knots_strategy()) {
            let b = SplineBasis::new(knots.clone()).unwrap();
            let eps = 1e-6;
            for &t in &knots {
                let m = b.evaluate(&[t - 2.0 * eps, t - eps, t, t + eps, t + 2.0 * eps]);
                for j in 0..b.columns() {
                    let c: Vec<f64> = (0..5).map(|i| m[(i, j)]).collect();
                    // values, first and second differences all change by O(eps)
                    prop_assert!((c[3] - c[1]).abs() < 1e-4);
                    let d_left = (c[2] - c[1]) / eps;
                    let d_right = (c[3] - c[2]) / eps;
                    prop_assert!((d_left - d_right).abs() < 1e-3);
                    let s_left = (c[2] - 2.0 * c[1] + c[0]) / (eps * eps);
                    let s_right = (c[4] - 2.0 * c[3] + c[2]) / (eps * eps);
                    prop_assert!((s_left - s_right).abs() < 1e-1 + 1e-2 * s_left.abs());
                }
            }
        }

        #[test]
        fn affine_maps_preserve_column_space(
            knots in knots_strategy(),
            a in prop_oneof![0.2f64..5.0, -5.0f64..-0.2],
            shift in -10.0f64..10.0,
        ) {
            let (lo, hi) = (knots[0] - 1.0, knots[knots.len() - 1] + 1.0);
            let x: Vec<f64> = (0..60).map(|i| lo + (hi - lo) * i as f64 / 59.0).collect();
            let mut mapped_knots: Vec<f64> = knots.iter().map(|t| a * t + shift).collect();
            if a < 0.0 {
                mapped_knots.reverse();
            }
            let xm: Vec<f64> = x.iter().map(|v| a * v + shift).collect();
            let b1 = rcs_basis(&x, &knots).unwrap();
            let b2 = rcs_basis(&xm, &mapped_knots).unwrap();
            let with_intercept = Matrix::from_rows(&[vec![1.0; x.len()]]).unwrap().transpose().hstack(&b1).unwrap();
            let gram = SymMatrix::new(with_intercept.transpose().matmul(&with_intercept).unwrap()).unwrap();
            for j in 0..b2.cols() {
                let target = b2.column(j);
                let rhs = with_intercept.transpose().matvec(&target).unwrap();
                let coef = solve_spd(&gram, &rhs).unwrap();
                let fitted = with_intercept.matvec(&coef).unwrap();
                let scale = target.iter().map(|v| v.abs()).fold(1.0, f64::max);
                let worst = fitted.iter().zip(&target).map(|(f, t)| (f - t).abs()).fold(0.0, f64::max);
                prop_assert!(worst <= 1e-8 * scale, "residual {worst}");
            }
        }
    }
}
