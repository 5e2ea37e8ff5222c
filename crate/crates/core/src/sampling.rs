//! Uniform subsampling of finite-sum components, sample-size formulas,
//! accuracy targets and the adaptive gradient batch rule.
//!
//! Logarithms in the sample-size formulas are natural logarithms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::IndexSet;

/// Which derivatives are estimated from subsamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    Exact,
    SubHessianOnly,
    SubBoth,
}

/// Gradient and Hessian accuracy levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTargets {
    pub delta_g: f64,
    pub delta_h: f64,
}

/// Batch policy for the outer driver. Index sets are redrawn every
/// iteration, including the Hessian set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub mode: SampleMode,
    pub grad_batch: usize,
    pub hess_batch: usize,
    /// Grow/shrink the gradient batch by [`GROWTH`] from gradient-norm ratios.
    pub adaptive: bool,
    /// Lower limit for the adaptive gradient batch.
    pub min_batch: usize,
}

/// Factor used by the adaptive gradient batch rule.
pub const GROWTH: f64 = 1.2;

impl SamplingPolicy {
    pub fn exact() -> Self {
        Self {
            mode: SampleMode::Exact,
            grad_batch: usize::MAX,
            hess_batch: usize::MAX,
            adaptive: false,
            min_batch: 32,
        }
    }

    pub fn sub_hessian(hess_batch: usize) -> Self {
        Self {
            mode: SampleMode::SubHessianOnly,
            hess_batch,
            ..Self::exact()
        }
    }

    pub fn sub_both(grad_batch: usize, hess_batch: usize, adaptive: bool) -> Self {
        Self {
            mode: SampleMode::SubBoth,
            grad_batch,
            hess_batch,
            adaptive,
            min_batch: 32,
        }
    }

    /// Uniform batch sizes that attain `targets` with per-iteration failure
    /// probability `delta_bar`, clamped to `n`.
    pub fn from_targets(
        k_g: f64,
        k_h: f64,
        targets: AccuracyTargets,
        dim: usize,
        delta_bar: f64,
        n: usize,
    ) -> Self {
        Self::sub_both(
            grad_sample_size(k_g, targets.delta_g, delta_bar).clamp(1, n),
            hess_sample_size(k_h, targets.delta_h, dim, delta_bar).clamp(1, n),
            false,
        )
    }

    pub fn samples_gradient(&self) -> bool {
        self.mode == SampleMode::SubBoth
    }

    pub fn samples_hessian(&self) -> bool {
        self.mode != SampleMode::Exact
    }

    /// Index set for this iteration's gradient.
    pub fn grad_set<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<IndexSet> {
        if !self.samples_gradient() || self.grad_batch >= n {
            return Ok(IndexSet::All);
        }
        Ok(IndexSet::Subset(sample_indices(n, self.grad_batch, rng)?))
    }

    /// Index set for this iteration's Hessian.
    pub fn hess_set<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<IndexSet> {
        if !self.samples_hessian() || self.hess_batch >= n {
            return Ok(IndexSet::All);
        }
        Ok(IndexSet::Subset(sample_indices(n, self.hess_batch, rng)?))
    }

    /// Applies the adaptive rule in place when enabled.
    pub fn observe_gradient(&mut self, g_now: f64, g_prev: f64, n: usize) {
        if self.adaptive && self.samples_gradient() {
            self.grad_batch = adapt_grad_batch(self.grad_batch, g_now, g_prev, n, self.min_batch);
        }
    }
}

/// `batch` distinct indices drawn uniformly from `0..n`, sorted ascending.
/// Oversized requests are clamped to `n`.
pub fn sample_indices<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 || batch == 0 {
        return Err(Error::EmptyIndexSet);
    }
    if batch >= n {
        if batch > n {
            log::debug!("batch {batch} clamped to population {n}");
        }
        return Ok((0..n).collect());
    }
    let mut idx = rand::seq::index::sample(rng, n, batch).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// `⌈16 K_g²/δ_g² · ln(1/δ̄)⌉`.
pub fn grad_sample_size(k_g: f64, delta_g: f64, delta_bar: f64) -> usize {
    let v = 16.0 * k_g * k_g / (delta_g * delta_g) * (1.0 / delta_bar).ln();
    ceil_count(v)
}

/// `⌈16 K_H²/δ_H² · ln(2d/δ̄)⌉`.
pub fn hess_sample_size(k_h: f64, delta_h: f64, dim: usize, delta_bar: f64) -> usize {
    let v = 16.0 * k_h * k_h / (delta_h * delta_h) * (2.0 * dim as f64 / delta_bar).ln();
    ceil_count(v)
}

fn ceil_count(v: f64) -> usize {
    if v.is_nan() || v <= 0.0 {
        0
    } else if v >= usize::MAX as f64 {
        usize::MAX
    } else {
        v.ceil() as usize
    }
}

/// Iteration-independent accuracy floors for `ε_g = ε`, `ε_H = √(L_H ε)`:
/// `δ_g = (1−ζ)/8 · min(3 L_H ε/(65(L_H+η)), ε)` and `δ_H = (1−ζ)/4 · √(L_H ε)`.
pub fn floor_targets(eps: f64, l_h: f64, zeta: f64, eta: f64) -> AccuracyTargets {
    AccuracyTargets {
        delta_g: (1.0 - zeta) / 8.0 * (3.0 * l_h * eps / (65.0 * (l_h + eta))).min(eps),
        delta_h: (1.0 - zeta) / 4.0 * (l_h * eps).sqrt(),
    }
}

/// Shrinks the batch by 1.2 when the gradient norm grew by at least 1.2,
/// grows it by 1.2 when the norm fell by at least that factor. Rounds up;
/// the result stays within `[min(floor, n), n]`.
pub fn adapt_grad_batch(prev: usize, g_now: f64, g_prev: f64, n: usize, floor: usize) -> usize {
    let next = if g_now >= GROWTH * g_prev {
        // ⌈5p/6⌉
        prev.saturating_mul(5).div_ceil(6)
    } else if g_now <= g_prev / GROWTH {
        // ⌈6p/5⌉
        prev.saturating_mul(6).div_ceil(5)
    } else {
        prev
    };
    next.max(floor.min(n)).min(n).max(1)
}

/// Which inexactness condition to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// Line-search variant.
    LineSearch,
    /// Fixed-step variant; additionally caps `δ_g` by `3ε_H²/(65(L_H+η))`.
    FixedStep,
}

/// Quantities the conditions depend on; `norm_g_next` makes the check
/// retrospective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionContext {
    pub eps_g: f64,
    pub eps_h: f64,
    pub zeta: f64,
    pub eta: f64,
    pub l_h: Option<f64>,
    pub norm_d: f64,
    pub norm_g: f64,
    pub norm_g_next: f64,
}

/// The largest admissible `(δ_g, δ_H)` under `which`.
pub fn condition_bounds(ctx: &ConditionContext, which: Condition) -> Result<AccuracyTargets> {
    let c = (1.0 - ctx.zeta) / 8.0;
    let inner = (ctx.eps_h * ctx.norm_d).min(ctx.norm_g).min(ctx.norm_g_next);
    let mut dg = ctx.eps_g.max(inner);
    if which == Condition::FixedStep {
        let l_h = ctx
            .l_h
            .ok_or_else(|| Error::invalid("fixed-step condition needs L_H"))?;
        dg = dg.min(3.0 * ctx.eps_h * ctx.eps_h / (65.0 * (l_h + ctx.eta)));
    }
    Ok(AccuracyTargets {
        delta_g: c * dg,
        delta_h: (1.0 - ctx.zeta) / 4.0 * ctx.eps_h,
    })
}

/// True iff the measured errors `‖g − ∇f‖` and `‖H − ∇²f‖` meet the
/// bounds (inclusive).
pub fn verify_condition(
    grad_error: f64,
    hess_error: f64,
    ctx: &ConditionContext,
    which: Condition,
) -> Result<bool> {
    let b = condition_bounds(ctx, which)?;
    Ok(grad_error <= b.delta_g && hess_error <= b.delta_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_size_formulas() {
        assert_eq!(grad_sample_size(1.0, 0.1, 0.1), 3685);
        assert_eq!(hess_sample_size(1.0, 0.1, 10, 0.1), 8478);
        assert_eq!(grad_sample_size(1.0, 0.1, 1.0), 0);
    }

    #[test]
    fn floors() {
        let t = floor_targets(1e-2, 1.0, 0.5, 1.0);
        assert!((t.delta_g - 3.0 / 13000.0 / 16.0).abs() < 1e-15);
        assert!((t.delta_h - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn adaptive_rule() {
        assert_eq!(adapt_grad_batch(1000, 1.3, 1.0, 10_000, 32), 834);
        assert_eq!(adapt_grad_batch(1000, 0.5, 1.0, 10_000, 32), 1200);
        assert_eq!(adapt_grad_batch(1000, 1.0, 1.0, 10_000, 32), 1000);
        assert_eq!(adapt_grad_batch(1000, 0.5, 1.0, 1100, 32), 1100);
        assert_eq!(adapt_grad_batch(33, 2.0, 1.0, 1100, 32), 32);
        assert_eq!(adapt_grad_batch(10, 2.0, 1.0, 5, 32), 5);
    }

    #[test]
    fn full_batch_and_determinism() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_indices(5, 5, &mut a).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_indices(5, 9, &mut a).unwrap().len(), 5);
        let s1 = sample_indices(100, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let s2 = sample_indices(100, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_indices(5, 0, &mut a).is_err());
    }

    #[test]
    fn condition_boundary_inclusive() {
        let ctx = ConditionContext {
            eps_g: 1e-3,
            eps_h: 0.1,
            zeta: 0.5,
            eta: 0.1,
            l_h: None,
            norm_d: 1.0,
            norm_g: 1.0,
            norm_g_next: 1.0,
        };
        assert!(verify_condition(0.0, 0.0, &ctx, Condition::LineSearch).unwrap());
        assert!(verify_condition(0.0, 0.5 / 4.0 * 0.1, &ctx, Condition::LineSearch).unwrap());
        assert!(!verify_condition(0.0, 0.0126, &ctx, Condition::LineSearch).unwrap());
        assert!(verify_condition(0.0, 0.0, &ctx, Condition::FixedStep).is_err());
    }
}
