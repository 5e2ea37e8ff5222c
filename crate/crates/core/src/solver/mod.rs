//! Outer Newton-CG drivers.
//!
//! [`run`] executes either the backtracking variant ([`Variant::LineSearch`])
//! or the predefined-step variant ([`Variant::FixedStep`]) on an
//! [`ObjectiveOracle`], drawing gradient and Hessian subsamples according
//! to a [`SamplingPolicy`].
//!
//! Each iteration estimates `g_k`, then either runs capped CG (when
//! `‖g_k‖ ≥ ε_g`) or the eigenvalue oracle (otherwise). A CG solution that
//! is shorter than `ε_g/ε_H` triggers an eigenvalue check that either ends
//! the run at `x_k + d_k` or swaps in a negative-curvature direction; this
//! block can be switched off with [`SolverConfig::skip_small_step_block`].
//!
//! In audit mode the driver also evaluates the exact gradient, function
//! and (for small dimensions) the exact Hessian through the audit ledger,
//! and checks monotonicity, per-step decrease floors, backtracking caps
//! and the inexactness conditions. Failures are collected as
//! [`Violation`]s and, if [`SolverConfig::halt_on_violation`] is set, end
//! the run with [`Termination::ContractViolation`].

mod bounds;
mod steps;

pub use bounds::{c_bar_nc, c_bar_sol, c_nc, c_sol, j_nc, j_sol, k_bar, k_bar2};
pub use steps::{
    fixed_step_nc, fixed_step_sol, line_search_nc, line_search_sol, scale_meo_direction,
    scale_meo_with_curvature, scale_nc_direction, scale_nc_with_curvature, sgn,
    LineSearchOutcome,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capped_cg::{capped_cg, CappedCgParams, DType};
use crate::error::{Contract, Error, Result};
use crate::linalg::{all_finite, assemble, axpy, norm, sub, sym_spectral_norm};
use crate::meo::{meo_lanczos, MeoOutcome};
use crate::oracle::{IndexSet, LedgerSnapshot, ObjectiveOracle};
use crate::sampling::{verify_condition, Condition, ConditionContext, SamplingPolicy};

/// Dense Hessian errors are only measured up to this dimension in audit mode.
const AUDIT_HESSIAN_MAX_DIM: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    LineSearch,
    FixedStep,
}

/// Step sizes for [`Variant::FixedStep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepRule {
    /// Closed-form sizes derived from `L_H`, `η`, `ζ` and `θ̃`.
    Theory,
    /// Constant sizes per direction type.
    Preset { sol: f64, nc: f64 },
}

/// Which objective the backtracking search evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineSearchObjective {
    /// The full objective.
    Full,
    /// The mean over the current gradient batch. Heuristic: the decrease
    /// test then holds only for the subsampled objective.
    GradientBatch,
}

/// Iteration classes used by the complexity argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepClass {
    /// `‖g_k‖ < ε_g`.
    K1,
    /// Long SOL step after which `‖g_{k+1}‖ < ε_g`.
    K2,
    /// Long SOL step after which `‖g_{k+1}‖ ≥ ε_g`.
    K3,
    /// SOL step no longer than `ε_g/ε_H`.
    K4,
    /// Negative-curvature step with `‖g_k‖ ≥ ε_g`.
    K5,
}

impl std::fmt::Display for StepClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Where the step direction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionSource {
    CappedCg,
    EigenOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps_g: f64,
    /// Defaults to `√(L_H ε_g)` when unset.
    pub eps_h: Option<f64>,
    pub theta: f64,
    pub eta: f64,
    pub zeta: f64,
    /// Hessian-norm bound passed to both inner procedures.
    pub u_h: f64,
    /// Failure probability of the eigenvalue oracle.
    pub delta: f64,
    pub theta_tilde: f64,
    pub l_h: Option<f64>,
    pub max_outer_iters: usize,
    pub max_ls_trials: usize,
    pub skip_small_step_block: bool,
    pub seed: u64,
    pub audit: bool,
    pub halt_on_violation: bool,
    pub step_rule: StepRule,
    pub ls_objective: LineSearchObjective,
    /// `δ_g`, `δ_H` plugged into the theoretical negative-curvature step.
    pub assumed_delta_g: f64,
    pub assumed_delta_h: f64,
    /// Stop with `MaxIters` once this many propagations have been spent.
    pub max_props: Option<u64>,
    /// Lower bound on `f`, for the iteration bound.
    pub f_low: Option<f64>,
    /// Gradient-norm bound, for the SOL backtracking cap.
    pub u_g: Option<f64>,
    /// In audit mode, redo an iteration with a 4× gradient batch (halving
    /// `δ_g`) when the gradient accuracy condition fails in retrospect.
    pub redo_on_condition_failure: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_g: 1e-3,
            eps_h: None,
            theta: 0.5,
            eta: 0.1,
            zeta: 0.5,
            u_h: 1.0,
            delta: 0.05,
            theta_tilde: 0.9,
            l_h: None,
            max_outer_iters: 10_000,
            max_ls_trials: 60,
            skip_small_step_block: false,
            seed: 0,
            audit: false,
            halt_on_violation: true,
            step_rule: StepRule::Theory,
            ls_objective: LineSearchObjective::Full,
            assumed_delta_g: 0.0,
            assumed_delta_h: 0.0,
            max_props: None,
            f_low: None,
            u_g: None,
            redo_on_condition_failure: false,
        }
    }
}

impl SolverConfig {
    pub fn resolved_eps_h(&self) -> Result<f64> {
        match (self.eps_h, self.l_h) {
            (Some(e), _) => Ok(e),
            (None, Some(l)) => Ok((l * self.eps_g).sqrt()),
            (None, None) => Err(Error::invalid("eps_h unset and no L_H to derive it from")),
        }
    }

    pub fn validate(&self, variant: Variant) -> Result<()> {
        let in01 = |v: f64| v > 0.0 && v < 1.0;
        if !(self.eps_g > 0.0) {
            return Err(Error::invalid("eps_g must be positive"));
        }
        let eps_h = self.resolved_eps_h()?;
        if !in01(eps_h) {
            return Err(Error::invalid(format!("eps_h {eps_h} not in (0,1)")));
        }
        if !in01(self.theta) {
            return Err(Error::invalid("theta not in (0,1)"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::invalid("eta must be positive"));
        }
        if !(self.u_h > 0.0 && self.u_h.is_finite()) {
            return Err(Error::invalid("U_H must be positive and finite"));
        }
        if !(self.zeta > 0.0 && self.zeta < self.u_h.min(1.0)) {
            return Err(Error::invalid("zeta not in (0, min(1, U_H))"));
        }
        if !in01(self.delta) {
            return Err(Error::invalid("delta not in (0,1)"));
        }
        let lo = (2.0 - 3f64.sqrt()).powi(2);
        if !(self.theta_tilde > lo && self.theta_tilde < 1.0) {
            return Err(Error::invalid("theta_tilde not in ((2-sqrt 3)^2, 1)"));
        }
        if let Some(l) = self.l_h {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::invalid("L_H must be positive and finite"));
            }
        }
        if self.max_ls_trials == 0 {
            return Err(Error::invalid("max_ls_trials must be at least 1"));
        }
        if variant == Variant::FixedStep {
            match self.step_rule {
                StepRule::Theory if self.l_h.is_none() => {
                    return Err(Error::invalid("theoretical fixed steps need L_H"));
                }
                StepRule::Preset { sol, nc } if !(sol > 0.0 && nc > 0.0) => {
                    return Err(Error::invalid("preset step sizes must be positive"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// State at iterate `x_k` and what the driver did there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Full objective at `x_k`, from the audit ledger.
    pub f: f64,
    pub grad_est_norm: Option<f64>,
    pub grad_true_norm: Option<f64>,
    pub d_type: Option<DType>,
    /// `None` until known; long SOL steps are classified once `g_{k+1}` exists.
    pub step_class: Option<StepClass>,
    pub source: Option<DirectionSource>,
    pub alpha: Option<f64>,
    pub d_norm: Option<f64>,
    pub ls_trials: Option<usize>,
    /// `None` when capped CG was not called.
    pub cg_iters: Option<usize>,
    pub meo_iters: Option<usize>,
    /// Cumulative oracle calls at the moment `x_k` was reached.
    pub ledger: LedgerSnapshot,
}

impl IterationRecord {
    fn at(iter: usize, f: f64, ledger: LedgerSnapshot) -> Self {
        Self {
            iter,
            f,
            grad_est_norm: None,
            grad_true_norm: None,
            d_type: None,
            step_class: None,
            source: None,
            alpha: None,
            d_norm: None,
            ls_trials: None,
            cg_iters: None,
            meo_iters: None,
            ledger,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Short SOL step plus certificate; returned `x_k + d_k`.
    FirstOrderAndCertified,
    /// Small gradient plus certificate; returned `x_k`.
    CertifiedAtCurrentPoint,
    MaxIters,
    ContractViolation { contract: Contract, detail: String },
}

impl Termination {
    pub fn is_certified(&self) -> bool {
        matches!(
            self,
            Termination::FirstOrderAndCertified | Termination::CertifiedAtCurrentPoint
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub iter: usize,
    pub contract: Contract,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub x_final: Vec<f64>,
    /// `‖∇f(x_final)‖`, evaluated on the audit ledger.
    pub final_grad_true_norm: f64,
    pub f_final: f64,
    /// Outer iterations performed (steps taken plus a terminating check).
    pub iterations: usize,
    pub eps_h: f64,
    /// Worst-case iteration count, when `f_low` and `L_H` are known.
    pub iteration_bound: Option<u64>,
    pub violations: Vec<Violation>,
    /// Iterations recomputed after a failed gradient accuracy check.
    pub redos: usize,
    pub ledger: LedgerSnapshot,
}

/// Observer for finalized records.
pub type RecordSink<'a> = &'a mut dyn FnMut(&IterationRecord);

/// Runs the driver from `x0`.
pub fn run(
    oracle: &ObjectiveOracle,
    x0: &[f64],
    policy: SamplingPolicy,
    config: &SolverConfig,
    variant: Variant,
) -> Result<RunReport> {
    run_traced(oracle, x0, policy, config, variant, &mut |_| {})
}

/// As [`run`], passing each record to `sink` once it is final.
pub fn run_traced(
    oracle: &ObjectiveOracle,
    x0: &[f64],
    policy: SamplingPolicy,
    config: &SolverConfig,
    variant: Variant,
    sink: RecordSink<'_>,
) -> Result<RunReport> {
    config.validate(variant)?;
    if x0.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    if !all_finite(x0) {
        return Err(Error::NonFinite("starting point"));
    }
    Driver::new(oracle, policy, config, variant)?.run(x0, sink)
}

/// What the retrospective checks need from the previous step.
struct Pending {
    record: usize,
    x_prev: Vec<f64>,
    prev_gn_before: Option<f64>,
    grad_batch: usize,
    gn: f64,
    grad_err: Option<f64>,
    hess_err: Option<f64>,
    d_norm: f64,
    long_sol: bool,
    decrease: f64,
}

struct Driver<'a> {
    oracle: &'a ObjectiveOracle,
    policy: SamplingPolicy,
    cfg: &'a SolverConfig,
    variant: Variant,
    eps_g: f64,
    eps_h: f64,
    rng: ChaCha8Rng,
    violations: Vec<Violation>,
    records: Vec<IterationRecord>,
}

enum Flow {
    Continue,
    Stop(Termination),
}

impl<'a> Driver<'a> {
    fn new(
        oracle: &'a ObjectiveOracle,
        policy: SamplingPolicy,
        cfg: &'a SolverConfig,
        variant: Variant,
    ) -> Result<Self> {
        Ok(Self {
            oracle,
            policy,
            cfg,
            variant,
            eps_g: cfg.eps_g,
            eps_h: cfg.resolved_eps_h()?,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            violations: Vec::new(),
            records: Vec::new(),
        })
    }

    /// Records a violation; returns a termination when the run must halt.
    fn flag(&mut self, iter: usize, contract: Contract, detail: String) -> Option<Termination> {
        log::warn!("iteration {iter}: {contract} violated: {detail}");
        self.violations.push(Violation {
            iter,
            contract,
            detail: detail.clone(),
        });
        self.cfg
            .halt_on_violation
            .then_some(Termination::ContractViolation { contract, detail })
    }

    fn floors_apply(&self) -> bool {
        match self.variant {
            Variant::LineSearch => self.cfg.ls_objective == LineSearchObjective::Full,
            Variant::FixedStep => self.cfg.step_rule == StepRule::Theory,
        }
    }

    fn run(mut self, x0: &[f64], sink: RecordSink<'_>) -> Result<RunReport> {
        let oracle = self.oracle;
        let audit = oracle.audit();
        let n = oracle.n();
        let all = IndexSet::All;
        let f0 = audit.eval_f(x0, &all)?;
        let iteration_bound = self.iteration_bound(f0);

        let mut x = x0.to_vec();
        let mut prev_gn: Option<f64> = None;
        let mut pending: Option<Pending> = None;
        let mut redos = 0;
        let mut emitted = 0;
        let mut k = 0usize;

        let termination = loop {
            let start = oracle.ledger().snapshot();
            let f_x = audit.eval_f(&x, &all)?;
            let over_budget = self.cfg.max_props.is_some_and(|b| start.props() >= b);
            if k >= self.cfg.max_outer_iters || over_budget {
                let mut rec = IterationRecord::at(k, f_x, start);
                if self.cfg.audit {
                    rec.grad_true_norm = Some(norm(&audit.eval_grad(&x, &all)?));
                }
                self.records.push(rec);
                break Termination::MaxIters;
            }

            let grad_batch = self.policy.grad_batch.min(n);
            let s_g = self.policy.grad_set(n, &mut self.rng)?;
            let g = oracle.eval_grad(&x, &s_g)?;
            let gn = norm(&g);
            let true_g = if self.cfg.audit {
                Some(audit.eval_grad(&x, &all)?)
            } else {
                None
            };
            let grad_err = true_g.as_ref().map(|tg| norm(&sub(&g, tg)));

            if let Some(p) = pending.take() {
                match self.retrospect(&p, gn, grad_err, n) {
                    Retro::Redo(batch) => {
                        redos += 1;
                        log::debug!("redoing iteration {} with gradient batch {batch}", k - 1);
                        self.records.truncate(p.record);
                        x = p.x_prev;
                        prev_gn = p.prev_gn_before;
                        self.policy.grad_batch = batch;
                        k -= 1;
                        continue;
                    }
                    Retro::Stop(t) => {
                        let mut rec = IterationRecord::at(k, f_x, start);
                        rec.grad_est_norm = Some(gn);
                        rec.grad_true_norm = true_g.as_ref().map(|v| norm(v));
                        self.records.push(rec);
                        break t;
                    }
                    Retro::Ok => {}
                }
            }
            let prev_gn_before = prev_gn;
            if let Some(p) = prev_gn {
                self.policy.observe_gradient(gn, p, n);
            }
            prev_gn = Some(gn);

            let mut rec = IterationRecord::at(k, f_x, start);
            rec.grad_est_norm = Some(gn);
            rec.grad_true_norm = true_g.as_ref().map(|v| norm(v));

            let s_h = self.policy.hess_set(n, &mut self.rng)?;
            let hess_err = if self.cfg.audit && self.policy.samples_hessian() {
                self.hessian_error(&x, &s_h)?
            } else if self.cfg.audit {
                Some(0.0)
            } else {
                None
            };
            let h = oracle.hessian(&x, s_h)?;

            let step = self.direction(&h, &g, gn, &mut rec)?;
            let (d, d_type, source, class) = match step {
                Direction::Step {
                    d,
                    d_type,
                    source,
                    class,
                } => (d, d_type, source, class),
                Direction::Terminate(t, d_opt) => {
                    rec.step_class = Some(if d_opt.is_some() {
                        StepClass::K4
                    } else {
                        StepClass::K1
                    });
                    let x_final = match d_opt {
                        Some(d) => {
                            rec.d_type = Some(DType::Sol);
                            rec.alpha = Some(1.0);
                            rec.d_norm = Some(norm(&d));
                            rec.source = Some(DirectionSource::CappedCg);
                            let mut y = x.clone();
                            axpy(1.0, &d, &mut y);
                            self.records.push(rec);
                            let snap = oracle.ledger().snapshot();
                            let mut last = IterationRecord::at(k + 1, audit.eval_f(&y, &all)?, snap);
                            if self.cfg.audit {
                                last.grad_true_norm = Some(norm(&audit.eval_grad(&y, &all)?));
                            }
                            self.records.push(last);
                            y
                        }
                        None => {
                            self.records.push(rec);
                            x.clone()
                        }
                    };
                    x = x_final;
                    break t;
                }
                Direction::Violation(t) => {
                    self.records.push(rec);
                    break t;
                }
            };
            let d_norm = norm(&d);
            rec.d_type = Some(d_type);
            rec.source = Some(source);
            rec.step_class = class;
            rec.d_norm = Some(d_norm);

            let (alpha, trials) = match self.step_size(&x, &d, d_type, &s_g)? {
                StepOutcome::Step(a, t) => (a, t),
                StepOutcome::Stop(t, trials) => {
                    rec.ls_trials = trials;
                    self.records.push(rec);
                    break t;
                }
            };
            rec.alpha = Some(alpha);
            rec.ls_trials = trials;

            let mut x_new = x.clone();
            axpy(alpha, &d, &mut x_new);
            if !all_finite(&x_new) {
                return Err(Error::NonFinite("iterate"));
            }
            let decrease = if self.cfg.audit {
                f_x - audit.eval_f(&x_new, &all)?
            } else {
                f64::NAN
            };
            let long_sol = d_type == DType::Sol && d_norm > self.eps_g / self.eps_h;

            let record_index = self.records.len();
            self.records.push(rec);
            if self.cfg.audit {
                if let Flow::Stop(t) =
                    self.audit_step(k, d_type, source, d_norm, alpha, decrease, long_sol)
                {
                    x = x_new;
                    break t;
                }
            }

            pending = Some(Pending {
                record: record_index,
                x_prev: std::mem::replace(&mut x, x_new),
                prev_gn_before,
                grad_batch,
                gn,
                grad_err,
                hess_err,
                d_norm,
                long_sol,
                decrease,
            });
            k += 1;

            let ready = self.records.len() - 1;
            for r in &self.records[emitted..ready] {
                sink(r);
            }
            emitted = emitted.max(ready);
        };

        for r in &self.records[emitted.min(self.records.len())..] {
            sink(r);
        }

        let f_final = audit.eval_f(&x, &all)?;
        let final_grad_true_norm = norm(&audit.eval_grad(&x, &all)?);
        let iterations = if termination == Termination::MaxIters { k } else { k + 1 };
        if self.cfg.audit {
            if let Some(bound) = iteration_bound {
                if iterations as u64 > bound {
                    self.violations.push(Violation {
                        iter: k,
                        contract: Contract::IterationBound,
                        detail: format!("{iterations} iterations exceed bound {bound}"),
                    });
                }
            }
        }
        Ok(RunReport {
            records: self.records,
            termination,
            x_final: x,
            final_grad_true_norm,
            f_final,
            iterations,
            eps_h: self.eps_h,
            iteration_bound,
            violations: self.violations,
            redos,
            ledger: oracle.ledger().snapshot(),
        })
    }

    fn iteration_bound(&self, f0: f64) -> Option<u64> {
        let (f_low, l_h) = (self.cfg.f_low?, self.cfg.l_h?);
        let c = self.cfg;
        Some(match self.variant {
            Variant::LineSearch => k_bar(
                f0 - f_low,
                l_h,
                c_sol(c.eta, c.theta, c.zeta, l_h),
                c_nc(c.eta, c.theta, l_h),
                self.eps_g,
            ),
            Variant::FixedStep => k_bar2(
                f0 - f_low,
                l_h,
                c_bar_sol(c.eta, c.zeta, l_h),
                c_bar_nc(c.eta, c.theta_tilde, l_h),
                self.eps_g,
            ),
        })
    }

    /// Spectral-norm distance between the sampled and exact Hessian.
    fn hessian_error(&self, x: &[f64], s_h: &IndexSet) -> Result<Option<f64>> {
        if self.oracle.dim() > AUDIT_HESSIAN_MAX_DIM {
            return Ok(None);
        }
        let audit = self.oracle.audit();
        let exact = assemble(&audit.hessian(x, IndexSet::All)?)?;
        let sampled = assemble(&audit.hessian(x, s_h.clone())?)?;
        Ok(Some(sym_spectral_norm(&(sampled - exact))))
    }

    fn direction(
        &mut self,
        h: &dyn crate::oracle::HessianOperator,
        g: &[f64],
        gn: f64,
        rec: &mut IterationRecord,
    ) -> Result<Direction> {
        let cfg = self.cfg;
        let eps_h = self.eps_h;
        if gn >= self.eps_g {
            let params = CappedCgParams::new(eps_h, cfg.zeta).with_m(cfg.u_h);
            let cg = match capped_cg(h, g, &params) {
                Ok(r) => r,
                Err(Error::ContractViolation { contract, detail }) => {
                    return Ok(Direction::Violation(Termination::ContractViolation {
                        contract,
                        detail,
                    }))
                }
                Err(e) => return Err(e),
            };
            rec.cg_iters = Some(cg.iterations);
            match cg.d_type {
                DType::Nc => Ok(Direction::Step {
                    d: scale_nc_with_curvature(&cg.d, cg.curvature, g)?,
                    d_type: DType::Nc,
                    source: DirectionSource::CappedCg,
                    class: Some(StepClass::K5),
                }),
                DType::Sol => {
                    let short = norm(&cg.d) <= self.eps_g / eps_h;
                    if !short {
                        return Ok(Direction::Step {
                            d: cg.d,
                            d_type: DType::Sol,
                            source: DirectionSource::CappedCg,
                            class: None,
                        });
                    }
                    if cfg.skip_small_step_block {
                        return Ok(Direction::Step {
                            d: cg.d,
                            d_type: DType::Sol,
                            source: DirectionSource::CappedCg,
                            class: Some(StepClass::K4),
                        });
                    }
                    let meo = meo_lanczos(h, cfg.u_h, eps_h, cfg.delta, &mut self.rng)?;
                    rec.meo_iters = Some(meo.iterations);
                    match meo.outcome {
                        MeoOutcome::Certificate { .. } => Ok(Direction::Terminate(
                            Termination::FirstOrderAndCertified,
                            Some(cg.d),
                        )),
                        MeoOutcome::NegativeCurvature { lambda, v } => Ok(Direction::Step {
                            d: scale_meo_with_curvature(&v, lambda, g)?,
                            d_type: DType::Nc,
                            source: DirectionSource::EigenOracle,
                            class: Some(StepClass::K5),
                        }),
                    }
                }
            }
        } else {
            let meo = meo_lanczos(h, cfg.u_h, eps_h, cfg.delta, &mut self.rng)?;
            rec.meo_iters = Some(meo.iterations);
            match meo.outcome {
                MeoOutcome::Certificate { .. } => Ok(Direction::Terminate(
                    Termination::CertifiedAtCurrentPoint,
                    None,
                )),
                MeoOutcome::NegativeCurvature { lambda, v } => Ok(Direction::Step {
                    d: scale_meo_with_curvature(&v, lambda, g)?,
                    d_type: DType::Nc,
                    source: DirectionSource::EigenOracle,
                    class: Some(StepClass::K1),
                }),
            }
        }
    }

    fn step_size(&self, x: &[f64], d: &[f64], d_type: DType, s_g: &IndexSet) -> Result<StepOutcome> {
        let cfg = self.cfg;
        let violation = |e: Error, trials: Option<usize>| match e {
            Error::ContractViolation { contract, detail } => Ok(StepOutcome::Stop(
                Termination::ContractViolation { contract, detail },
                trials,
            )),
            other => Err(other),
        };
        match self.variant {
            Variant::LineSearch => {
                let set = match cfg.ls_objective {
                    LineSearchObjective::Full => IndexSet::All,
                    LineSearchObjective::GradientBatch => s_g.clone(),
                };
                let oracle = self.oracle;
                let mut f = |y: &[f64]| oracle.eval_f(y, &set);
                let out = match d_type {
                    DType::Sol => line_search_sol(&mut f, x, d, cfg.eta, cfg.theta, cfg.max_ls_trials),
                    DType::Nc => line_search_nc(&mut f, x, d, cfg.eta, cfg.theta, cfg.max_ls_trials),
                };
                match out {
                    Ok(o) => Ok(StepOutcome::Step(o.alpha, Some(o.trials))),
                    // every trial was evaluated, so it is charged
                    Err(e) => violation(e, Some(cfg.max_ls_trials)),
                }
            }
            Variant::FixedStep => {
                let nd = norm(d);
                let alpha = match (cfg.step_rule, d_type) {
                    (StepRule::Preset { sol, .. }, DType::Sol) => sol,
                    (StepRule::Preset { nc, .. }, DType::Nc) => nc,
                    (StepRule::Theory, DType::Sol) => {
                        let l_h = cfg.l_h.expect("validated");
                        let a = fixed_step_sol(nd, self.eps_h, cfg.zeta, l_h, cfg.eta);
                        // only reachable with the small-step block skipped
                        if nd < self.eps_g / self.eps_h { a.min(1.0) } else { a }
                    }
                    (StepRule::Theory, DType::Nc) => {
                        let l_h = cfg.l_h.expect("validated");
                        match fixed_step_nc(
                            nd,
                            cfg.assumed_delta_h,
                            cfg.assumed_delta_g,
                            l_h,
                            cfg.eta,
                            cfg.theta_tilde,
                        ) {
                            Ok(a) => a,
                            Err(e) => return violation(e, None),
                        }
                    }
                };
                Ok(StepOutcome::Step(alpha, None))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn audit_step(
        &mut self,
        k: usize,
        d_type: DType,
        source: DirectionSource,
        d_norm: f64,
        alpha: f64,
        decrease: f64,
        long_sol: bool,
    ) -> Flow {
        let cfg = self.cfg;
        let eh3 = self.eps_h.powi(3);
        let mut checks: Vec<(Contract, String)> = Vec::new();
        if self.floors_apply() && !(decrease > 0.0) {
            checks.push((Contract::Monotonicity, format!("decrease {decrease:e}")));
        }
        if let (true, Some(l_h)) = (self.floors_apply(), cfg.l_h) {
            let floor = match (self.variant, d_type, source) {
                (Variant::LineSearch, DType::Nc, DirectionSource::CappedCg) => {
                    Some(c_nc(cfg.eta, cfg.theta, l_h) * eh3)
                }
                (Variant::LineSearch, DType::Nc, DirectionSource::EigenOracle) => {
                    Some(c_nc(cfg.eta, cfg.theta, l_h) / 8.0 * eh3)
                }
                (Variant::FixedStep, DType::Nc, DirectionSource::CappedCg) => {
                    Some(c_bar_nc(cfg.eta, cfg.theta_tilde, l_h) * eh3)
                }
                (Variant::FixedStep, DType::Nc, DirectionSource::EigenOracle) => {
                    Some(c_bar_nc(cfg.eta, cfg.theta_tilde, l_h) / 8.0 * eh3)
                }
                (Variant::FixedStep, DType::Sol, _) if d_norm >= self.eps_g / self.eps_h => {
                    Some(c_bar_sol(cfg.eta, cfg.zeta, l_h) * eh3)
                }
                _ => None,
            };
            if let Some(fl) = floor {
                if decrease < fl {
                    checks.push((
                        Contract::DecreaseFloor,
                        format!("{d_type} step decreased f by {decrease:e} < floor {fl:e}"),
                    ));
                }
            }
            if self.variant == Variant::LineSearch {
                let j = (alpha.abs().ln() / cfg.theta.ln()).round() as u64;
                let cap = match d_type {
                    DType::Nc => Some(j_nc(cfg.theta, l_h, cfg.eta)),
                    DType::Sol if long_sol => cfg
                        .u_g
                        .map(|u| j_sol(cfg.theta, cfg.zeta, self.eps_h, u, l_h, cfg.eta)),
                    DType::Sol => None,
                };
                if let Some(c) = cap {
                    if j > c + 1 {
                        checks.push((
                            Contract::BacktrackingBound,
                            format!("{d_type} backtracking index {j} > {}", c + 1),
                        ));
                    }
                }
            }
        }
        for (c, detail) in checks {
            if let Some(t) = self.flag(k, c, detail) {
                return Flow::Stop(t);
            }
        }
        Flow::Continue
    }

    fn retrospect(&mut self, p: &Pending, gn_next: f64, grad_err_next: Option<f64>, n: usize) -> Retro {
        let cfg = self.cfg;
        let k = self.records[p.record].iter;
        if p.long_sol {
            self.records[p.record].step_class = Some(if gn_next < self.eps_g {
                StepClass::K2
            } else {
                StepClass::K3
            });
        }
        if !cfg.audit {
            return Retro::Ok;
        }
        let which = match (self.variant, cfg.l_h) {
            (Variant::FixedStep, Some(_)) => Condition::FixedStep,
            _ => Condition::LineSearch,
        };
        let ctx = ConditionContext {
            eps_g: self.eps_g,
            eps_h: self.eps_h,
            zeta: cfg.zeta,
            eta: cfg.eta,
            l_h: cfg.l_h,
            norm_d: p.d_norm,
            norm_g: p.gn,
            norm_g_next: gn_next,
        };
        let grad_err = p.grad_err.unwrap_or(0.0);
        let grad_ok = verify_condition(grad_err, 0.0, &ctx, which).unwrap_or(true);
        let hess_ok = verify_condition(0.0, p.hess_err.unwrap_or(0.0), &ctx, which).unwrap_or(true);
        if !grad_ok && cfg.redo_on_condition_failure && p.grad_batch < n {
            return Retro::Redo(p.grad_batch.saturating_mul(4).min(n));
        }
        if !grad_ok || !hess_ok {
            let detail = format!(
                "gradient error {grad_err:e}, Hessian error {:e}",
                p.hess_err.unwrap_or(0.0)
            );
            if let Some(t) = self.flag(k, Contract::AccuracyCondition, detail) {
                return Retro::Stop(t);
            }
        }
        // SOL decrease floor, which depends on the next gradient
        if p.long_sol
            && self.variant == Variant::LineSearch
            && cfg.ls_objective == LineSearchObjective::Full
        {
            if let Some(l_h) = cfg.l_h {
                let b = 2.5 * self.eps_h;
                let c = gn_next - grad_err - grad_err_next.unwrap_or(0.0);
                let inner = (c.powi(3) / b.powi(3)).min(b.powi(3)).min(self.eps_g.powf(1.5));
                let floor = c_sol(cfg.eta, cfg.theta, cfg.zeta, l_h) * inner.max(0.0);
                if p.decrease < floor {
                    let detail = format!("SOL step decreased f by {:e} < floor {floor:e}", p.decrease);
                    if let Some(t) = self.flag(k, Contract::DecreaseFloor, detail) {
                        return Retro::Stop(t);
                    }
                }
            }
        }
        Retro::Ok
    }
}

enum Direction {
    Step {
        d: Vec<f64>,
        d_type: DType,
        source: DirectionSource,
        class: Option<StepClass>,
    },
    /// Certificate issued; carries the SOL step for termination at `x_k + d_k`.
    Terminate(Termination, Option<Vec<f64>>),
    Violation(Termination),
}

enum StepOutcome {
    Step(f64, Option<usize>),
    Stop(Termination, Option<usize>),
}

enum Retro {
    Ok,
    Redo(usize),
    Stop(Termination),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Quadratic, SyntheticSaddle};

    #[test]
    fn quadratic_converges_and_certifies() {
        let o = ObjectiveOracle::new(Quadratic::isotropic(3, 1));
        let cfg = SolverConfig {
            eps_g: 1e-4,
            l_h: Some(1.0),
            audit: true,
            ..Default::default()
        };
        let r = run(&o, &[1.0, -2.0, 0.5], SamplingPolicy::exact(), &cfg, Variant::LineSearch).unwrap();
        assert!(r.termination.is_certified(), "{:?}", r.termination);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.records.windows(2).all(|w| w[1].f <= w[0].f));
    }

    #[test]
    fn escapes_saddle_from_origin() {
        let s = SyntheticSaddle::new(3, 1.0, 1.0).unwrap();
        let o = ObjectiveOracle::new(s);
        let cfg = SolverConfig {
            eps_g: 1e-4,
            eps_h: Some(0.1),
            u_h: 10.0,
            ..Default::default()
        };
        let r = run(&o, &[0.0; 3], SamplingPolicy::exact(), &cfg, Variant::LineSearch).unwrap();
        assert_eq!(r.records[0].step_class, Some(StepClass::K1));
        assert_eq!(r.records[0].d_type, Some(DType::Nc));
        assert!(r.records[1].f < r.records[0].f);
    }

    #[test]
    fn rejects_bad_config() {
        let o = ObjectiveOracle::new(Quadratic::isotropic(2, 1));
        let cfg = SolverConfig::default();
        assert!(run(&o, &[1.0, 1.0], SamplingPolicy::exact(), &cfg, Variant::LineSearch).is_err());
        let cfg = SolverConfig {
            eps_h: Some(0.1),
            theta_tilde: 0.05,
            ..Default::default()
        };
        assert!(run(&o, &[1.0, 1.0], SamplingPolicy::exact(), &cfg, Variant::LineSearch).is_err());
    }
}
