//! Direction scaling, backtracking searches and predefined step sizes.

use crate::error::{Contract, Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm};
use crate::oracle::HessianOperator;

/// `sgn` with the convention `sgn(0) = +1`.
#[inline]
pub fn sgn(v: f64) -> f64 {
    if v < 0.0 { -1.0 } else { 1.0 }
}

/// `−sgn(dᵀg) (|dᵀHd|/‖d‖²) d/‖d‖` given the precomputed `dᵀHd`.
pub fn scale_nc_with_curvature(d: &[f64], dhd: f64, g: &[f64]) -> Result<Vec<f64>> {
    let nd = norm(d);
    if nd == 0.0 {
        return Err(Error::ZeroVector("negative-curvature direction"));
    }
    if !dhd.is_finite() {
        return Err(Error::NonFinite("direction curvature"));
    }
    let c = -sgn(dot(d, g)) * dhd.abs() / (nd * nd * nd);
    Ok(d.iter().map(|v| c * v).collect())
}

/// Rescales a raw capped-CG direction so that `‖d_k‖` equals its
/// curvature magnitude and `d_kᵀg ≤ 0`. Costs one product with `H`.
pub fn scale_nc_direction(d: &[f64], h: &dyn HessianOperator, g: &[f64]) -> Result<Vec<f64>> {
    if norm(d) == 0.0 {
        return Err(Error::ZeroVector("negative-curvature direction"));
    }
    let hd = h.apply(d)?;
    scale_nc_with_curvature(d, dot(d, &hd), g)
}

/// `−sgn(vᵀg) |λ| v` for a unit `v` with `vᵀHv = λ`.
pub fn scale_meo_with_curvature(v: &[f64], lambda: f64, g: &[f64]) -> Result<Vec<f64>> {
    let nv = norm(v);
    if (nv - 1.0).abs() > 1e-8 {
        return Err(Error::NonUnit(nv));
    }
    if !lambda.is_finite() {
        return Err(Error::NonFinite("eigenvalue estimate"));
    }
    let c = -sgn(dot(v, g)) * lambda.abs();
    Ok(v.iter().map(|x| c * x).collect())
}

/// As [`scale_meo_with_curvature`], computing `vᵀHv` with one product.
pub fn scale_meo_direction(v: &[f64], h: &dyn HessianOperator, g: &[f64]) -> Result<Vec<f64>> {
    let nv = norm(v);
    if (nv - 1.0).abs() > 1e-8 {
        return Err(Error::NonUnit(nv));
    }
    let hv = h.apply(v)?;
    scale_meo_with_curvature(v, dot(v, &hv), g)
}

/// Result of a backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    /// Trial evaluations, not counting the one at `x`.
    pub trials: usize,
    pub f_old: f64,
    pub f_new: f64,
}

impl LineSearchOutcome {
    /// Backtracking exponent `j` with `|α| = θ^j`.
    pub fn exponent(&self, theta: f64) -> usize {
        (self.alpha.abs().ln() / theta.ln()).round() as usize
    }
}

fn accepts(f_old: f64, f_trial: f64, eta: f64, alpha: f64, nd: f64) -> bool {
    f_trial.is_finite() && f_trial < f_old - eta / 6.0 * (alpha.abs() * nd).powi(3)
}

fn trial_point(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    axpy(alpha, d, &mut y);
    y
}

fn check_direction(x: &[f64], d: &[f64]) -> Result<f64> {
    if x.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: d.len(),
        });
    }
    if !all_finite(d) {
        return Err(Error::NonFinite("search direction"));
    }
    let nd = norm(d);
    if nd == 0.0 {
        return Err(Error::ZeroVector("search direction"));
    }
    Ok(nd)
}

/// Smallest `j ≥ 0` such that `α = θ^j` gives
/// `f(x + αd) < f(x) − (η/6)|α|³‖d‖³`. Evaluates `f(x)` first.
pub fn line_search_sol(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    d: &[f64],
    eta: f64,
    theta: f64,
    max_trials: usize,
) -> Result<LineSearchOutcome> {
    let nd = check_direction(x, d)?;
    let f_old = f(x)?;
    let mut alpha = 1.0;
    for trial in 1..=max_trials {
        let f_new = f(&trial_point(x, alpha, d))?;
        if accepts(f_old, f_new, eta, alpha, nd) {
            return Ok(LineSearchOutcome {
                alpha,
                trials: trial,
                f_old,
                f_new,
            });
        }
        alpha *= theta;
    }
    Err(Error::violation(
        Contract::LineSearchTrials,
        format!("no step accepted within {max_trials} trials"),
    ))
}

/// First `α` in `1, −1, θ, −θ, θ², −θ², …` meeting the same decrease test.
pub fn line_search_nc(
    f: &mut dyn FnMut(&[f64]) -> Result<f64>,
    x: &[f64],
    d: &[f64],
    eta: f64,
    theta: f64,
    max_trials: usize,
) -> Result<LineSearchOutcome> {
    let nd = check_direction(x, d)?;
    let f_old = f(x)?;
    let mut mag = 1.0;
    for trial in 1..=max_trials {
        let alpha = if trial % 2 == 1 { mag } else { -mag };
        let f_new = f(&trial_point(x, alpha, d))?;
        if accepts(f_old, f_new, eta, alpha, nd) {
            return Ok(LineSearchOutcome {
                alpha,
                trials: trial,
                f_old,
                f_new,
            });
        }
        if trial % 2 == 0 {
            mag *= theta;
        }
    }
    Err(Error::violation(
        Contract::LineSearchTrials,
        format!("no step accepted within {max_trials} trials"),
    ))
}

/// `[3(1−ζ)/(4(L_H+η))]^{1/2} (ε_H/‖d‖)^{1/2}`.
pub fn fixed_step_sol(norm_d: f64, eps_h: f64, zeta: f64, l_h: f64, eta: f64) -> f64 {
    (3.0 * (1.0 - zeta) / (4.0 * (l_h + eta))).sqrt() * (eps_h / norm_d).sqrt()
}

/// `θ̃ β₁` with
/// `β₁ = [(‖d‖−δ_H)/2 + √(((‖d‖−δ_H)/2)² − 4(L_H+η)δ_g/6)] / ((L_H+η)‖d‖/3)`.
pub fn fixed_step_nc(
    norm_d: f64,
    delta_h: f64,
    delta_g: f64,
    l_h: f64,
    eta: f64,
    theta_tilde: f64,
) -> Result<f64> {
    let lp = l_h + eta;
    let half = (norm_d - delta_h) / 2.0;
    let disc = half * half - 4.0 * lp * delta_g / 6.0;
    if !(disc > 0.0) || half <= 0.0 {
        return Err(Error::violation(
            Contract::FixedStepDiscriminant,
            format!("discriminant {disc:e} with (|d|-delta_H)/2 = {half:e}"),
        ));
    }
    let beta = (half + disc.sqrt()) / (lp * norm_d / 3.0);
    Ok(theta_tilde * beta)
}
