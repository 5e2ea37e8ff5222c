//! Conjugate gradient on the damped system `(H + 2εI) d = −g`, capped so
//! that it either returns an approximate solution or a direction along
//! which `H` has curvature at most `−ε`.
//!
//! Every iterate `y_j` and residual `r_j` is kept. Since `y_0 = 0` and
//! `r_0 = g`, the damped product `H̄ y_j` equals `r_j − g`, and the
//! difference `H̄ (y_{j+1} − y_i)` equals `r_{j+1} − r_i`. All curvature
//! tests therefore reuse the single product `H p_j` computed per
//! iteration, for `iterations + 1` products in total.

use serde::{Deserialize, Serialize};

use crate::error::{Contract, Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm, sub};
use crate::oracle::HessianOperator;

/// Which exit the procedure took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    /// Approximate solution of the damped Newton system.
    Sol,
    /// Direction of curvature at most `−ε`.
    Nc,
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DType::Sol => "SOL",
            DType::Nc => "NC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CappedCgParams {
    /// Damping `ε ∈ (0, 1)`.
    pub epsilon: f64,
    /// Accuracy `ζ ∈ (0, 1)`.
    pub zeta: f64,
    /// Initial curvature bound; `None` starts from zero.
    pub m_init: Option<f64>,
    /// Hard iteration cap; `None` relies on the built-in `J(M, ε, ζ)` bound.
    pub max_iters_override: Option<usize>,
}

impl CappedCgParams {
    pub fn new(epsilon: f64, zeta: f64) -> Self {
        Self {
            epsilon,
            zeta,
            m_init: None,
            max_iters_override: None,
        }
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m_init = Some(m);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon {} not in (0,1)", self.epsilon)));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::invalid(format!("zeta {} not in (0,1)", self.zeta)));
        }
        if let Some(m) = self.m_init {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::invalid(format!("initial M {m} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Quantities derived from the running curvature bound `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub m: f64,
    pub kappa: f64,
    pub zeta_hat: f64,
    pub tau: f64,
    pub t: f64,
}

impl DerivedParams {
    pub fn new(m: f64, epsilon: f64, zeta: f64) -> Self {
        let kappa = (m + 2.0 * epsilon) / epsilon;
        let zeta_hat = zeta / (3.0 * kappa);
        let tau = 1.0 / (kappa.sqrt() + 1.0);
        // 1 − √(1−τ) written without cancellation
        let gap = tau / (1.0 + (1.0 - tau).sqrt());
        let t = 4.0 * kappa.powi(4) / (gap * gap);
        Self {
            m,
            kappa,
            zeta_hat,
            tau,
            t,
        }
    }

    /// `√T (1−τ)^{j/2}`, the residual envelope below which CG is on track.
    pub fn envelope(&self, j: usize) -> f64 {
        (0.5 * (self.t.ln() + j as f64 * (1.0 - self.tau).ln())).exp()
    }
}

/// Smallest `J ≥ 0` with `√T (1−τ)^{J/2} ≤ ζ̂`.
pub fn j_cap(m: f64, epsilon: f64, zeta: f64) -> usize {
    let p = DerivedParams::new(m, epsilon, zeta);
    let raw = (2.0 * p.zeta_hat.ln() - p.t.ln()) / (1.0 - p.tau).ln();
    let mut j = raw.ceil().max(0.0) as usize;
    while j > 0 && p.envelope(j - 1) <= p.zeta_hat {
        j -= 1;
    }
    while p.envelope(j) > p.zeta_hat {
        j += 1;
    }
    j
}

#[derive(Debug, Clone, PartialEq)]
pub struct CappedCgResult {
    pub d_type: DType,
    pub d: Vec<f64>,
    /// Completed CG iterations `j` at exit.
    pub iterations: usize,
    /// Hessian products spent.
    pub matvecs: usize,
    /// Parameters at exit, including the final `M`.
    pub params: DerivedParams,
    /// `dᵀ H d` for the returned direction (undamped).
    pub curvature: f64,
    /// Recurrence residual `‖r_j‖` on SOL exits.
    pub residual_norm: Option<f64>,
}

impl CappedCgResult {
    pub fn m_final(&self) -> f64 {
        self.params.m
    }
}

/// Runs capped CG on `H` with right-hand side `−g`.
pub fn capped_cg(h: &dyn HessianOperator, g: &[f64], params: &CappedCgParams) -> Result<CappedCgResult> {
    capped_cg_traced(h, g, params, &mut |_, _| {})
}

/// As [`capped_cg`], calling `trace(j, ‖r_j‖)` once per iteration.
pub fn capped_cg_traced(
    h: &dyn HessianOperator,
    g: &[f64],
    params: &CappedCgParams,
    trace: &mut dyn FnMut(usize, f64),
) -> Result<CappedCgResult> {
    params.validate()?;
    let dim = h.dim();
    if g.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: g.len(),
        });
    }
    if !all_finite(g) {
        return Err(Error::NonFinite("capped CG right-hand side"));
    }
    let r0_norm = norm(g);
    if r0_norm < 1e-300 {
        return Err(Error::ZeroVector("capped CG right-hand side"));
    }

    let eps = params.epsilon;
    let mut der = DerivedParams::new(params.m_init.unwrap_or(0.0), eps, params.zeta);
    let mut matvecs = 0;
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        let hv = h.apply(v)?;
        if !all_finite(&hv) {
            return Err(Error::NonFinite("Hessian-vector product in capped CG"));
        }
        Ok(hv)
    };

    let mut p: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut hp = apply(&p)?;
    matvecs += 1;
    let pp = dot(&p, &p);
    let php = dot(&p, &hp);
    if php + 2.0 * eps * pp < eps * pp {
        return Ok(CappedCgResult {
            d_type: DType::Nc,
            d: p,
            iterations: 0,
            matvecs,
            params: der,
            curvature: php,
            residual_norm: None,
        });
    }
    let ratio = norm(&hp) / pp.sqrt();
    if ratio > der.m {
        der = DerivedParams::new(ratio, eps, params.zeta);
    }

    let mut ys: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    let mut rs: Vec<Vec<f64>> = vec![g.to_vec()];
    let mut j = 0usize;
    trace(0, r0_norm);

    loop {
        let (y, r) = (&ys[j], &rs[j]);
        let rr = dot(r, r);
        let pbp = dot(&p, &hp) + 2.0 * eps * dot(&p, &p);
        let alpha = rr / pbp;
        let mut y_next = y.clone();
        axpy(alpha, &p, &mut y_next);
        let mut r_next = r.clone();
        axpy(alpha, &hp, &mut r_next);
        axpy(alpha * 2.0 * eps, &p, &mut r_next);
        let beta = dot(&r_next, &r_next) / rr;
        let mut p_next: Vec<f64> = r_next.iter().map(|v| -v).collect();
        axpy(beta, &p, &mut p_next);
        if !all_finite(&y_next) || !all_finite(&r_next) || !all_finite(&p_next) {
            return Err(Error::NonFinite("capped CG iterate"));
        }
        ys.push(y_next);
        rs.push(r_next);
        j += 1;

        let hp_prev = std::mem::take(&mut hp);
        p = p_next;
        hp = apply(&p)?;
        matvecs += 1;

        let (y, r) = (&ys[j], &rs[j]);
        let r_norm = norm(r);
        trace(j, r_norm);

        // H r_j = −H p_j + β H p_{j−1};  H̄ y_j = r_j − g
        let mut hr: Vec<f64> = hp.iter().map(|v| -v).collect();
        axpy(beta, &hp_prev, &mut hr);
        let hby = sub(r, g);
        let mut hy = hby.clone();
        axpy(-2.0 * eps, y, &mut hy);
        let mut bound = der.m;
        for (v, hv) in [(&p, &hp), (y, &hy), (r, &hr)] {
            let nv = norm(v);
            if nv > 0.0 {
                bound = bound.max(norm(hv) / nv);
            }
        }
        if bound > der.m {
            der = DerivedParams::new(bound, eps, params.zeta);
        }

        let yy = dot(y, y);
        let ybar = dot(y, &hby);
        if ybar <= eps * yy {
            return Ok(CappedCgResult {
                d_type: DType::Nc,
                d: y.clone(),
                iterations: j,
                matvecs,
                params: der,
                curvature: ybar - 2.0 * eps * yy,
                residual_norm: None,
            });
        }
        if r_norm <= der.zeta_hat * r0_norm {
            return Ok(CappedCgResult {
                d_type: DType::Sol,
                d: y.clone(),
                iterations: j,
                matvecs,
                params: der,
                curvature: ybar - 2.0 * eps * yy,
                residual_norm: Some(r_norm),
            });
        }
        let pp = dot(&p, &p);
        let php = dot(&p, &hp);
        if pp > 0.0 && php + 2.0 * eps * pp <= eps * pp {
            return Ok(CappedCgResult {
                d_type: DType::Nc,
                d: p,
                iterations: j,
                matvecs,
                params: der,
                curvature: php,
                residual_norm: None,
            });
        }
        if r_norm >= der.envelope(j) * r0_norm {
            return extract(&ys, &rs, &p, &hp, eps, j, matvecs, der);
        }
        if let Some(cap) = params.max_iters_override {
            if j >= cap {
                return Err(Error::violation(
                    Contract::CappedCgCap,
                    format!("override cap {cap} reached"),
                ));
            }
        }
        if j > j_cap(der.m, eps, params.zeta) {
            return Err(Error::violation(
                Contract::CappedCgCap,
                format!("iteration {j} beyond J(M={}) with no exit", der.m),
            ));
        }
    }
}

/// Slow-decay exit: one more CG step, then the first `i < j` whose
/// accumulated difference `y_{j+1} − y_i` has damped curvature `≤ ε`.
#[allow(clippy::too_many_arguments)]
fn extract(
    ys: &[Vec<f64>],
    rs: &[Vec<f64>],
    p: &[f64],
    hp: &[f64],
    eps: f64,
    j: usize,
    matvecs: usize,
    der: DerivedParams,
) -> Result<CappedCgResult> {
    let (y, r) = (&ys[j], &rs[j]);
    let pp = dot(p, p);
    let alpha = dot(r, r) / (dot(p, hp) + 2.0 * eps * pp);
    let mut y_next = y.clone();
    axpy(alpha, p, &mut y_next);
    let mut r_next = r.clone();
    axpy(alpha, hp, &mut r_next);
    axpy(alpha * 2.0 * eps, p, &mut r_next);

    for i in 0..j {
        let diff = sub(&y_next, &ys[i]);
        let hdiff = sub(&r_next, &rs[i]);
        let dd = dot(&diff, &diff);
        let dbar = dot(&diff, &hdiff);
        if dd > 0.0 && dbar <= eps * dd {
            return Ok(CappedCgResult {
                d_type: DType::Nc,
                d: diff,
                iterations: j,
                matvecs,
                params: der,
                curvature: dbar - 2.0 * eps * dd,
                residual_norm: None,
            });
        }
    }
    Err(Error::violation(
        Contract::CappedCgExtraction,
        format!("slow residual decay at j={j} but no difference had curvature <= eps"),
    ))
}
