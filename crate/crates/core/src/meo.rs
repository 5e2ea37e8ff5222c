//! Randomized minimum-eigenvalue oracle built on Lanczos.
//!
//! Lanczos runs on `H` itself from a start vector uniform on the unit
//! sphere, with full reorthogonalization. After every step the smallest
//! Ritz pair of the tridiagonal projection is formed; the returned
//! eigenvalue estimate is the Rayleigh quotient of the normalized Ritz
//! vector, assembled from stored products `H q_i` so that `vᵀHv = λ`
//! holds by construction and costs no extra product.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm};
use crate::oracle::HessianOperator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeoOutcome {
    /// Unit `v` with `vᵀHv = lambda ≤ −ε/2`.
    NegativeCurvature { lambda: f64, v: Vec<f64> },
    /// `λ_min(H) ≥ −ε`, wrong with probability at most `δ`.
    Certificate {
        /// Smallest Ritz value seen, for diagnostics.
        ritz_min: f64,
        /// The Krylov space became invariant before the cap.
        breakdown: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeoResult {
    pub outcome: MeoOutcome,
    /// Lanczos steps taken; each costs one product with `H`.
    pub iterations: usize,
    /// The iteration cap in force.
    pub cap: usize,
}

impl MeoResult {
    pub fn is_certificate(&self) -> bool {
        matches!(self.outcome, MeoOutcome::Certificate { .. })
    }
}

/// `min(d, 1 + ⌈ln(2.75d/δ²)/2 · √(M/ε)⌉)`.
pub fn meo_iteration_cap(dim: usize, m: f64, epsilon: f64, delta: f64) -> usize {
    let d = dim as f64;
    let k = ((2.75 * d / (delta * delta)).ln() / 2.0 * (m / epsilon).sqrt()).ceil();
    let k = if k.is_finite() && k >= 0.0 { k } else { f64::MAX };
    let bound = 1.0 + k;
    if bound >= d { dim } else { bound as usize }
}

/// Searches for a direction of curvature `≤ −ε/2` or certifies
/// `λ_min(H) ≥ −ε`. `m` must bound `λ_max(H)`; `delta ∈ (0, 1)`.
pub fn meo_lanczos<R: Rng + ?Sized>(
    h: &dyn HessianOperator,
    m: f64,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<MeoResult> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid(format!("curvature bound M={m} must be positive and finite")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} not in (0,1)")));
    }
    let dim = h.dim();
    if dim == 0 {
        return Err(Error::invalid("operator has dimension 0"));
    }
    let cap = meo_iteration_cap(dim, m, epsilon, delta);

    let mut q: Vec<f64> = loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            break v.into_iter().map(|x| x / n).collect();
        }
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cap);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(cap);
    let mut alphas: Vec<f64> = Vec::with_capacity(cap);
    let mut betas: Vec<f64> = Vec::with_capacity(cap);
    let mut ritz_min = f64::INFINITY;

    for k in 0..cap {
        let hq = h.apply(&q)?;
        if !all_finite(&hq) {
            return Err(Error::NonFinite("Hessian-vector product in Lanczos"));
        }
        let alpha = dot(&q, &hq);
        let mut w = hq.clone();
        axpy(-alpha, &q, &mut w);
        if let (Some(prev), Some(b)) = (basis.last(), betas.last()) {
            axpy(-*b, prev, &mut w);
        }
        basis.push(q);
        images.push(hq);
        alphas.push(alpha);
        // two passes of Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(-c, b, &mut w);
            }
        }

        let size = k + 1;
        let mut t = DMatrix::zeros(size, size);
        for i in 0..size {
            t[(i, i)] = alphas[i];
            if i + 1 < size {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
        ritz_min = ritz_min.min(theta);
        let s = eig.eigenvectors.column(imin);

        let mut v = vec![0.0; dim];
        let mut hv = vec![0.0; dim];
        for (i, si) in s.iter().enumerate() {
            axpy(*si, &basis[i], &mut v);
            axpy(*si, &images[i], &mut hv);
        }
        let vn = norm(&v);
        if vn > 0.0 {
            v.iter_mut().for_each(|x| *x /= vn);
            hv.iter_mut().for_each(|x| *x /= vn);
            let lambda = dot(&v, &hv);
            if lambda <= -epsilon / 2.0 {
                return Ok(MeoResult {
                    outcome: MeoOutcome::NegativeCurvature { lambda, v },
                    iterations: size,
                    cap,
                });
            }
        }

        let beta = norm(&w);
        let scale = alphas.iter().chain(&betas).fold(m, |a, b| a.max(b.abs()));
        if beta <= 1e-12 * scale {
            return Ok(MeoResult {
                outcome: MeoOutcome::Certificate {
                    ritz_min,
                    breakdown: size < dim,
                },
                iterations: size,
                cap,
            });
        }
        betas.push(beta);
        q = w.into_iter().map(|x| x / beta).collect();
    }

    Ok(MeoResult {
        outcome: MeoOutcome::Certificate {
            ritz_min,
            breakdown: false,
        },
        iterations: cap,
        cap,
    })
}
