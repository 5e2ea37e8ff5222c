//! Finite-sum objective evaluation with oracle-call accounting.
//!
//! Every evaluation goes through [`ObjectiveOracle`], which charges its
//! [`OracleLedger`]: one call per component value, two per component
//! gradient and four per component Hessian-vector product. Drivers never
//! touch the counters directly.
//!
//! The ledger uses relaxed atomic increments, so an oracle can be shared
//! across threads and evaluated concurrently; snapshots taken while other
//! threads are evaluating are not linearizable with respect to each other.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// A smooth objective of the form `f = (1/n) Σ f_i` (or the plain sum).
///
/// Implementations must be pure functions of their arguments, and each
/// component Hessian must be symmetric.
pub trait FiniteSum: Send + Sync {
    fn n_components(&self) -> usize;
    fn dim(&self) -> usize;
    fn component_value(&self, i: usize, x: &[f64]) -> f64;
    /// `out += weight * ∇f_i(x)`
    fn add_component_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]);
    /// `out += weight * ∇²f_i(x) v`
    fn add_component_hvp(&self, i: usize, x: &[f64], v: &[f64], weight: f64, out: &mut [f64]);
}

/// An implicit symmetric linear map `v ↦ Hv`.
pub trait HessianOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl HessianOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.nrows()];
        for (j, vj) in v.iter().enumerate() {
            if *vj == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += self[(i, j)] * vj;
            }
        }
        Ok(out)
    }
}

impl<T: HessianOperator + ?Sized> HessianOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).apply(v)
    }
}

/// Whether the objective is the component mean or the plain component sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scaling {
    #[default]
    Mean,
    Sum,
}

/// Component indices (0-based) an evaluation averages over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexSet {
    All,
    Subset(Vec<usize>),
}

impl IndexSet {
    pub fn len(&self, n: usize) -> usize {
        match self {
            IndexSet::All => n,
            IndexSet::Subset(s) => s.len(),
        }
    }

    pub fn is_empty(&self, n: usize) -> bool {
        self.len(n) == 0
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            IndexSet::All if n == 0 => Err(Error::EmptyIndexSet),
            IndexSet::All => Ok(()),
            IndexSet::Subset(s) if s.is_empty() => Err(Error::EmptyIndexSet),
            IndexSet::Subset(s) => match s.iter().find(|&&i| i >= n) {
                Some(&index) => Err(Error::IndexOutOfRange { index, n }),
                None => Ok(()),
            },
        }
    }

    fn for_each(&self, n: usize, mut f: impl FnMut(usize)) {
        match self {
            IndexSet::All => (0..n).for_each(f),
            IndexSet::Subset(s) => s.iter().for_each(|&i| f(i)),
        }
    }
}

/// Cumulative oracle-call counters.
#[derive(Debug, Default)]
pub struct OracleLedger {
    f_calls: AtomicU64,
    grad_calls: AtomicU64,
    hv_calls: AtomicU64,
}

/// A point-in-time copy of an [`OracleLedger`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub f_calls: u64,
    pub grad_calls: u64,
    pub hv_calls: u64,
}

impl LedgerSnapshot {
    /// Total propagations: `f + 2·grad + 4·hv`.
    pub fn props(&self) -> u64 {
        self.f_calls + 2 * self.grad_calls + 4 * self.hv_calls
    }

    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        LedgerSnapshot {
            f_calls: self.f_calls - earlier.f_calls,
            grad_calls: self.grad_calls - earlier.grad_calls,
            hv_calls: self.hv_calls - earlier.hv_calls,
        }
    }
}

impl OracleLedger {
    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            f_calls: self.f_calls.load(Ordering::Relaxed),
            grad_calls: self.grad_calls.load(Ordering::Relaxed),
            hv_calls: self.hv_calls.load(Ordering::Relaxed),
        }
    }

    pub fn props(&self) -> u64 {
        self.snapshot().props()
    }

    fn charge_f(&self, k: usize) {
        self.f_calls.fetch_add(k as u64, Ordering::Relaxed);
    }

    fn charge_grad(&self, k: usize) {
        self.grad_calls.fetch_add(k as u64, Ordering::Relaxed);
    }

    fn charge_hv(&self, k: usize) {
        self.hv_calls.fetch_add(k as u64, Ordering::Relaxed);
    }
}

/// A finite-sum objective plus its call ledger.
///
/// `audit` evaluations (see [`ObjectiveOracle::audit`]) are charged to a
/// separate ledger so that diagnostics never pollute the reported cost.
pub struct ObjectiveOracle {
    problem: Box<dyn FiniteSum>,
    scaling: Scaling,
    ledger: OracleLedger,
    audit_ledger: OracleLedger,
}

impl std::fmt::Debug for ObjectiveOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveOracle")
            .field("n", &self.n())
            .field("dim", &self.dim())
            .field("scaling", &self.scaling)
            .field("ledger", &self.ledger.snapshot())
            .finish()
    }
}

impl ObjectiveOracle {
    pub fn new(problem: impl FiniteSum + 'static) -> Self {
        Self::with_scaling(problem, Scaling::Mean)
    }

    pub fn with_scaling(problem: impl FiniteSum + 'static, scaling: Scaling) -> Self {
        Self::from_boxed(Box::new(problem), scaling)
    }

    pub fn from_boxed(problem: Box<dyn FiniteSum>, scaling: Scaling) -> Self {
        Self {
            problem,
            scaling,
            ledger: OracleLedger::default(),
            audit_ledger: OracleLedger::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.problem.n_components()
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn problem(&self) -> &dyn FiniteSum {
        self.problem.as_ref()
    }

    pub fn ledger(&self) -> &OracleLedger {
        &self.ledger
    }

    pub fn audit_ledger(&self) -> &OracleLedger {
        &self.audit_ledger
    }

    /// Evaluations charged to the audit ledger instead of the main one.
    pub fn audit(&self) -> Metered<'_> {
        Metered {
            oracle: self,
            ledger: &self.audit_ledger,
        }
    }

    fn metered(&self) -> Metered<'_> {
        Metered {
            oracle: self,
            ledger: &self.ledger,
        }
    }

    pub fn eval_f(&self, x: &[f64], set: &IndexSet) -> Result<f64> {
        self.metered().eval_f(x, set)
    }

    pub fn eval_grad(&self, x: &[f64], set: &IndexSet) -> Result<Vec<f64>> {
        self.metered().eval_grad(x, set)
    }

    pub fn eval_hvp(&self, x: &[f64], v: &[f64], set: &IndexSet) -> Result<Vec<f64>> {
        self.metered().eval_hvp(x, v, set)
    }

    /// The (subsampled) Hessian at `x` as an implicit operator; every
    /// `apply` is charged `|set|` Hessian-vector products.
    pub fn hessian(&self, x: &[f64], set: IndexSet) -> Result<SampledHessian<'_>> {
        self.metered().hessian(x, set)
    }

    fn weight(&self, batch: usize) -> f64 {
        match self.scaling {
            Scaling::Mean => 1.0 / batch as f64,
            Scaling::Sum => self.n() as f64 / batch as f64,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !all_finite(x) {
            return Err(Error::NonFinite("evaluation point"));
        }
        Ok(())
    }
}

/// An oracle bound to one of its ledgers.
#[derive(Clone, Copy)]
pub struct Metered<'a> {
    oracle: &'a ObjectiveOracle,
    ledger: &'a OracleLedger,
}

impl<'a> Metered<'a> {
    pub fn eval_f(&self, x: &[f64], set: &IndexSet) -> Result<f64> {
        let o = self.oracle;
        o.check_point(x)?;
        set.validate(o.n())?;
        let batch = set.len(o.n());
        let mut acc = 0.0;
        set.for_each(o.n(), |i| acc += o.problem.component_value(i, x));
        self.ledger.charge_f(batch);
        Ok(acc * o.weight(batch))
    }

    pub fn eval_grad(&self, x: &[f64], set: &IndexSet) -> Result<Vec<f64>> {
        let o = self.oracle;
        o.check_point(x)?;
        set.validate(o.n())?;
        let batch = set.len(o.n());
        let w = o.weight(batch);
        let mut out = vec![0.0; o.dim()];
        set.for_each(o.n(), |i| o.problem.add_component_grad(i, x, w, &mut out));
        self.ledger.charge_grad(batch);
        Ok(out)
    }

    pub fn eval_hvp(&self, x: &[f64], v: &[f64], set: &IndexSet) -> Result<Vec<f64>> {
        let o = self.oracle;
        o.check_point(x)?;
        set.validate(o.n())?;
        if v.len() != o.dim() {
            return Err(Error::DimensionMismatch {
                expected: o.dim(),
                got: v.len(),
            });
        }
        if !all_finite(v) {
            return Err(Error::NonFinite("Hessian-vector product direction"));
        }
        Ok(self.hvp_unchecked(x, v, set))
    }

    fn hvp_unchecked(&self, x: &[f64], v: &[f64], set: &IndexSet) -> Vec<f64> {
        let o = self.oracle;
        let batch = set.len(o.n());
        let w = o.weight(batch);
        let mut out = vec![0.0; o.dim()];
        set.for_each(o.n(), |i| o.problem.add_component_hvp(i, x, v, w, &mut out));
        self.ledger.charge_hv(batch);
        out
    }

    pub fn hessian(&self, x: &[f64], set: IndexSet) -> Result<SampledHessian<'a>> {
        self.oracle.check_point(x)?;
        set.validate(self.oracle.n())?;
        Ok(SampledHessian {
            meter: *self,
            x: x.to_vec(),
            set,
        })
    }
}

/// `v ↦ (1/|S|) Σ_{i∈S} ∇²f_i(x) v` at a frozen point.
pub struct SampledHessian<'a> {
    meter: Metered<'a>,
    x: Vec<f64>,
    set: IndexSet,
}

impl SampledHessian<'_> {
    pub fn batch_len(&self) -> usize {
        self.set.len(self.meter.oracle.n())
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.set
    }
}

impl HessianOperator for SampledHessian<'_> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                got: v.len(),
            });
        }
        if !all_finite(v) {
            return Err(Error::NonFinite("Hessian-vector product direction"));
        }
        Ok(self.meter.hvp_unchecked(&self.x, v, &self.set))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Quadratic;

    fn iso(dim: usize, n: usize) -> ObjectiveOracle {
        ObjectiveOracle::new(Quadratic::isotropic(dim, n))
    }

    #[test]
    fn full_set_charges_every_component() {
        let o = iso(3, 100);
        o.eval_f(&[1.0, 0.0, 0.0], &IndexSet::All).unwrap();
        assert_eq!(o.ledger().snapshot().f_calls, 100);
        assert_eq!(o.ledger().props(), 100);
    }

    #[test]
    fn singleton_value_at_zero() {
        let o = iso(1, 4);
        let f = o.eval_f(&[0.0], &IndexSet::Subset(vec![2])).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn gradient_of_identity_quadratic() {
        let o = iso(3, 7);
        let g = o.eval_grad(&[1.0, 0.0, 0.0], &IndexSet::Subset(vec![0, 1, 2, 3, 4])).unwrap();
        for (a, b) in g.iter().zip([1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(o.ledger().props(), 10);
    }

    #[test]
    fn hvp_accounting_and_identity() {
        let o = iso(2, 10);
        let h = o.hessian(&[0.3, -1.0], IndexSet::Subset(vec![4, 9])).unwrap();
        for _ in 0..3 {
            let hv = h.apply(&[2.0, -5.0]).unwrap();
            assert!((hv[0] - 2.0).abs() < 1e-15 && (hv[1] + 5.0).abs() < 1e-15);
        }
        assert_eq!(o.ledger().props(), 24);
    }

    #[test]
    fn audit_calls_use_separate_ledger() {
        let o = iso(2, 10);
        o.audit().eval_grad(&[1.0, 1.0], &IndexSet::All).unwrap();
        assert_eq!(o.ledger().props(), 0);
        assert_eq!(o.audit_ledger().props(), 20);
    }

    #[test]
    fn empty_and_out_of_range_sets_are_rejected() {
        let o = iso(2, 5);
        let x = [0.0, 0.0];
        assert_eq!(
            o.eval_f(&x, &IndexSet::Subset(vec![])),
            Err(Error::EmptyIndexSet)
        );
        assert_eq!(
            o.eval_grad(&x, &IndexSet::Subset(vec![5])),
            Err(Error::IndexOutOfRange { index: 5, n: 5 })
        );
        assert!(o.eval_hvp(&x, &[1.0, 0.0], &IndexSet::Subset(vec![])).is_err());
        assert_eq!(o.ledger().props(), 0);
    }

    #[test]
    fn sum_scaling_multiplies_by_n() {
        let o = ObjectiveOracle::with_scaling(Quadratic::isotropic(1, 8), Scaling::Sum);
        let f = o.eval_f(&[2.0], &IndexSet::All).unwrap();
        assert!((f - 16.0).abs() < 1e-12);
        let f_half = o.eval_f(&[2.0], &IndexSet::Subset(vec![0, 1])).unwrap();
        assert!((f_half - 16.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_point_is_rejected() {
        let o = iso(2, 2);
        assert!(matches!(
            o.eval_f(&[f64::NAN, 0.0], &IndexSet::All),
            Err(Error::NonFinite(_))
        ));
    }
}
