//! Tail probabilities of weighted sums of independent χ²₁ variables,
//! `P(scale · Σ λ_j χ²_j > t)`, by Imhof's inversion of the characteristic
//! function.
//!
//! For `t > 0` the Imhof integrand oscillates with half-period `2π/t` and
//! decays only algebraically (like `u^{-1-m/2}` for `m` terms), so the
//! integral is accumulated one half-period at a time and the alternating
//! partial sums are accelerated with Wynn's epsilon algorithm. At `t = 0`
//! the integrand does not oscillate and is integrated after mapping
//! `[0, ∞)` onto `[0, 1)`.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use super::quad::{integrate, QuadOptions};
use super::special::chisq_sf;
use super::NumericsError;

/// Weights `λ_j` and common scale of a χ²₁ mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    weights: Vec<f64>,
    scale: f64,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, scale: f64) -> Result<Self, NumericsError> {
        if weights.is_empty() {
            return Err(NumericsError::InvalidMixture { reason: "no weights".into() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(NumericsError::InvalidMixture { reason: "non-finite weight".into() });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(NumericsError::InvalidMixture { reason: format!("scale {scale} is not positive") });
        }
        Ok(Self { weights, scale })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Effective coefficients `scale·λ_j`, zeros dropped.
    fn coefficients(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w * self.scale).filter(|c| *c != 0.0).collect()
    }
}

/// Absolute accuracy targeted for the returned probability.
const TARGET_ABS_ERROR: f64 = 1e-8;
const MAX_HALF_PERIODS: usize = 4_000;

/// `P(scale · Σ λ_j χ²_j > t)`.
pub fn mixture_tail(t: f64, spec: &MixtureSpec) -> Result<f64, NumericsError> {
    if !t.is_finite() {
        return Ok(if t < 0.0 { 1.0 } else { 0.0 });
    }
    let coef = spec.coefficients();
    upper_tail(t, &coef).map(|p| p.clamp(0.0, 1.0))
}

fn upper_tail(t: f64, coef: &[f64]) -> Result<f64, NumericsError> {
    if coef.is_empty() {
        return Ok(if t < 0.0 { 1.0 } else { 0.0 });
    }
    if t < 0.0 {
        // P(Q > t) = 1 - P(-Q > -t) for a continuous Q
        let neg: Vec<f64> = coef.iter().map(|c| -c).collect();
        return Ok(1.0 - upper_tail(-t, &neg)?);
    }
    if coef.iter().all(|&c| c < 0.0) {
        return Ok(0.0);
    }
    if coef.len() == 1 {
        return Ok(chisq_sf(t / coef[0], 1));
    }
    let integral = if t == 0.0 { imhof_at_zero(coef)? } else { imhof_oscillatory(t, coef)? };
    Ok(0.5 + integral / PI)
}

/// Imhof integrand `sin θ(u) / (u ρ(u))`.
fn imhof_integrand(u: f64, t: f64, coef: &[f64]) -> f64 {
    if u == 0.0 {
        return 0.5 * (coef.iter().sum::<f64>() - t);
    }
    let mut theta = -0.5 * t * u;
    let mut log_rho = 0.0;
    for &c in coef {
        let cu = c * u;
        theta += 0.5 * cu.atan();
        log_rho += 0.25 * (cu * cu).ln_1p();
    }
    if u < 1e-6 {
        // sin θ / u loses precision near the origin; θ/u is smooth there
        let ratio = theta / u;
        return ratio * sinc(theta) * (-log_rho).exp();
    }
    theta.sin() * (-(u.ln() + log_rho)).exp()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn imhof_at_zero(coef: &[f64]) -> Result<f64, NumericsError> {
    let opts = QuadOptions { abs_tol: 1e-10, rel_tol: 1e-12, max_segments: 4_000 };
    let mapped = |s: f64| {
        let one_minus = 1.0 - s;
        let u = s / one_minus;
        imhof_integrand(u, 0.0, coef) / (one_minus * one_minus)
    };
    Ok(integrate(mapped, 0.0, 1.0, opts)?.value)
}

fn imhof_oscillatory(t: f64, coef: &[f64]) -> Result<f64, NumericsError> {
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-13, max_segments: 2_000 };
    let f = |u: f64| imhof_integrand(u, t, coef);

    // Asymptotically θ(u) ≈ θ∞ - t·u/2, so zeros of sin θ sit near
    // u_k = 2(θ∞ + kπ)/t.
    let theta_inf = FRAC_PI_4 * coef.iter().map(|c| c.signum()).sum::<f64>();
    let half_period = 2.0 * PI / t;
    let k0 = ((-theta_inf / PI).floor() + 1.0).max(0.0);
    let mut upper = 2.0 * (theta_inf + k0 * PI) / t;
    if upper <= 0.0 {
        upper = half_period;
    }

    // Imhof's bound on the truncated tail beyond u
    let m = coef.len() as f64;
    let log_prod = 0.5 * coef.iter().map(|c| c.abs().ln()).sum::<f64>();
    let tail_bound = |u: f64| (-(log_prod + 0.5 * m * u.ln())).exp() / (0.5 * m * PI);

    let mut partial = integrate(f, 0.0, upper, opts)?.value;
    let mut sums = vec![partial];
    let mut estimates: Vec<f64> = Vec::new();
    for _ in 0..MAX_HALF_PERIODS {
        let next = upper + half_period;
        partial += integrate(f, upper, next, opts)?.value;
        upper = next;
        sums.push(partial);

        if tail_bound(upper) < 0.1 * TARGET_ABS_ERROR {
            return Ok(partial);
        }
        let window = &sums[sums.len().saturating_sub(40)..];
        estimates.push(wynn_epsilon(window));
        let n = estimates.len();
        if n >= 6 {
            let d1 = (estimates[n - 1] - estimates[n - 2]).abs();
            let d2 = (estimates[n - 2] - estimates[n - 3]).abs();
            if d1.max(d2) < 0.1 * TARGET_ABS_ERROR {
                return Ok(estimates[n - 1]);
            }
        }
    }
    Err(NumericsError::IntegrationFailure {
        reason: format!("oscillatory tail did not converge within {MAX_HALF_PERIODS} half-periods"),
    })
}

/// Wynn's epsilon extrapolation of a sequence of partial sums; returns the
/// deepest even-column entry of the table.
fn wynn_epsilon(sums: &[f64]) -> f64 {
    let n = sums.len();
    if n < 3 {
        return *sums.last().expect("non-empty");
    }
    // prev = ε_{k-1}, cur = ε_k, stored per starting index
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = sums.to_vec();
    let mut best = sums[n - 1];
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            if diff == 0.0 || !diff.is_finite() {
                return if col % 2 == 0 { cur[i + 1] } else { best };
            }
            next.push(prev[i + 1] + 1.0 / diff);
        }
        col += 1;
        prev = cur;
        cur = next;
        if col % 2 == 0 {
            best = *cur.last().expect("non-empty");
        }
    }
    best
}
