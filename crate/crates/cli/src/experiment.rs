//! Problem construction, solver presets, repeated runs and report files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use ncg_core::solver::{LineSearchObjective, StepRule};
use ncg_core::{
    FiniteSum, IterationRecord, Link, NlsProblem, ObjectiveOracle, Quadratic, RunReport,
    SamplingPolicy, SolverConfig, SyntheticSaddle, Termination, Variant,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, KeyValues};
use crate::libsvm::Dataset;
use crate::report::{self, Aggregate};

/// `ε_H` used when `√(L_H ε)` is not below one.
pub const EPS_H_CAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    NlsSigmoid,
    NlsTanh,
    NlsWelsch,
    Quadratic,
    Saddle,
}

impl FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "nls-sigmoid" => Self::NlsSigmoid,
            "nls-tanh" => Self::NlsTanh,
            "nls-welsch" => Self::NlsWelsch,
            "quadratic" => Self::Quadratic,
            "saddle" => Self::Saddle,
            _ => return Err(format!("unknown problem {s:?}")),
        })
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NlsSigmoid => "nls-sigmoid",
            Self::NlsTanh => "nls-tanh",
            Self::NlsWelsch => "nls-welsch",
            Self::Quadratic => "quadratic",
            Self::Saddle => "saddle",
        })
    }
}

/// The five solver configurations compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Exact gradient and Hessian, backtracking on the full objective.
    Full,
    /// Exact gradient, Hessian on a 0.01n batch.
    SubH,
    /// Adaptive gradient batch from 0.05n, Hessian batch 0.01n, full line search.
    InexactFullEval,
    /// As `InexactFullEval` with constant steps 0.2 (SOL) and 0.04 (NC).
    InexactFixed,
    /// As `InexactFullEval`, but backtracking on the gradient batch only.
    /// Heuristic: decrease is only guaranteed for the sampled objective.
    InexactSubEval,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Full,
        Preset::SubH,
        Preset::InexactFullEval,
        Preset::InexactFixed,
        Preset::InexactSubEval,
    ];
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "full" => Self::Full,
            "subh" => Self::SubH,
            "inexact-full-eval" => Self::InexactFullEval,
            "inexact-fixed" => Self::InexactFixed,
            "inexact-sub-eval" => Self::InexactSubEval,
            _ => return Err(format!("unknown variant {s:?}")),
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::SubH => "subh",
            Self::InexactFullEval => "inexact-full-eval",
            Self::InexactFixed => "inexact-fixed",
            Self::InexactSubEval => "inexact-sub-eval",
        })
    }
}

/// Keys accepted in config files and `--set` overrides.
pub const KNOWN_KEYS: &[&str] = &[
    "problem", "data", "variant", "eps", "seed", "repeats", "audit", "skip_small_step_block", "out",
    "bins", "dim", "subsample", "welsch_alpha", "max_iters", "max_props", "eps_h", "theta", "eta",
    "zeta", "u_h", "delta", "theta_tilde", "l_h", "max_ls_trials", "halt_on_violation",
    "redo_on_condition_failure", "grad_batch", "hess_batch", "adaptive", "min_batch", "step_sol",
    "step_nc", "assumed_delta_g", "assumed_delta_h",
];

/// A fully specified experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    pub data: Option<PathBuf>,
    pub variant: Preset,
    pub eps: f64,
    pub seed: u64,
    pub repeats: usize,
    pub audit: bool,
    pub skip_small_step_block: bool,
    pub out: PathBuf,
    pub bins: usize,
    /// Remaining keys, applied on top of the preset.
    pub settings: KeyValues,
}

impl ExperimentSpec {
    pub fn from_settings(kv: KeyValues) -> Result<Self, ConfigError> {
        if let Some(k) = kv.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
        let problem = kv.get::<ProblemKind>("problem")?.ok_or(ConfigError::Missing("problem"))?;
        let variant = kv.get_or("variant", Preset::Full)?;
        let repeats = kv.get_or("repeats", 1usize)?;
        if repeats == 0 {
            return Err(ConfigError::Value {
                key: "repeats".into(),
                value: "0".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(Self {
            problem,
            data: kv.raw("data").map(PathBuf::from),
            variant,
            eps: kv.get_or("eps", 1e-3)?,
            seed: kv.get_or("seed", 0u64)?,
            repeats,
            audit: kv.get_or("audit", false)?,
            skip_small_step_block: kv.get_or("skip_small_step_block", true)?,
            out: kv.raw("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
            bins: kv.get_or("bins", 50usize)?.max(1),
            settings: kv,
        })
    }
}

/// A problem instance plus the constants the solver needs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: ProblemData,
    pub x0: Vec<f64>,
    pub l_h: f64,
    pub u_h: f64,
    pub f_low: f64,
}

#[derive(Debug, Clone)]
pub enum ProblemData {
    Nls(NlsProblem),
    Quadratic(Quadratic),
    Saddle(SyntheticSaddle),
}

impl ProblemData {
    pub fn n(&self) -> usize {
        match self {
            Self::Nls(p) => p.n_components(),
            Self::Quadratic(p) => p.n_components(),
            Self::Saddle(p) => p.n_components(),
        }
    }

    /// An oracle with a fresh ledger.
    pub fn oracle(&self) -> ObjectiveOracle {
        match self {
            Self::Nls(p) => ObjectiveOracle::new(p.clone()),
            Self::Quadratic(p) => ObjectiveOracle::new(p.clone()),
            Self::Saddle(p) => ObjectiveOracle::new(p.clone()),
        }
    }
}

impl Instance {
    pub fn from_nls(problem: NlsProblem) -> Self {
        let c = problem.constants();
        let d = problem.dim();
        Self {
            problem: ProblemData::Nls(problem),
            x0: vec![0.0; d],
            l_h: c.l_h,
            u_h: c.u_h,
            f_low: 0.0,
        }
    }

    /// Builds the instance named by `spec`.
    pub fn build(spec: &ExperimentSpec) -> anyhow::Result<Self> {
        let kv = &spec.settings;
        let dim: usize = kv.get_or("dim", 10)?;
        match spec.problem {
            ProblemKind::NlsSigmoid | ProblemKind::NlsTanh | ProblemKind::NlsWelsch => {
                let link = match spec.problem {
                    ProblemKind::NlsSigmoid => Link::Sigmoid,
                    ProblemKind::NlsTanh => Link::Tanh,
                    _ => Link::Welsch {
                        alpha: kv.get_or("welsch_alpha", 1.0)?,
                    },
                };
                let path = spec
                    .data
                    .as_ref()
                    .context("NLS problems need a data file (--data)")?;
                let mut data = Dataset::read(path)
                    .with_context(|| format!("loading {}", path.display()))?;
                if let Some(m) = kv.get::<usize>("subsample")? {
                    // fixed stream so every repeat sees the same rows
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);
                    data = data.subsample(m, &mut rng);
                }
                Ok(Self::from_nls(data.to_problem(link)?))
            }
            ProblemKind::Quadratic => {
                if dim == 0 {
                    bail!("dim must be positive");
                }
                let diag: Vec<f64> = (1..=dim).map(|j| j as f64 / dim as f64).collect();
                Ok(Self {
                    problem: ProblemData::Quadratic(Quadratic::new(diag, 1)?),
                    x0: vec![1.0; dim],
                    // any positive value bounds a zero Lipschitz constant
                    l_h: 1.0,
                    u_h: 1.0,
                    f_low: 0.0,
                })
            }
            ProblemKind::Saddle => {
                let s = SyntheticSaddle::new(dim, 1.0, 1.0)?;
                let mut x0 = vec![0.0; dim];
                x0[1] = 0.5;
                let f0 = s.component_value(0, &x0);
                let (u_h, l_h) = s.bounds_on_ball(s.sublevel_radius(f0));
                Ok(Self {
                    f_low: s.f_low(),
                    problem: ProblemData::Saddle(s),
                    x0,
                    l_h,
                    u_h,
                })
            }
        }
    }
}

fn frac(n: usize, f: f64) -> usize {
    ((n as f64 * f).ceil() as usize).clamp(1, n)
}

/// Sampling policy, solver configuration and variant for a preset.
pub fn resolve(
    spec: &ExperimentSpec,
    inst: &Instance,
) -> Result<(SamplingPolicy, SolverConfig, Variant), ConfigError> {
    let kv = &spec.settings;
    let n = inst.problem.n();
    let eps_h_default = (inst.l_h * spec.eps).sqrt().min(EPS_H_CAP);
    let mut cfg = SolverConfig {
        eps_g: spec.eps,
        eps_h: Some(kv.get_or("eps_h", eps_h_default)?),
        l_h: Some(kv.get_or("l_h", inst.l_h)?),
        u_h: kv.get_or("u_h", inst.u_h)?,
        f_low: Some(inst.f_low),
        seed: spec.seed,
        audit: spec.audit,
        skip_small_step_block: spec.skip_small_step_block,
        ..SolverConfig::default()
    };
    cfg.theta = kv.get_or("theta", cfg.theta)?;
    cfg.eta = kv.get_or("eta", cfg.eta)?;
    cfg.zeta = kv.get_or("zeta", cfg.zeta)?;
    cfg.delta = kv.get_or("delta", cfg.delta)?;
    cfg.theta_tilde = kv.get_or("theta_tilde", cfg.theta_tilde)?;
    cfg.max_outer_iters = kv.get_or("max_iters", cfg.max_outer_iters)?;
    cfg.max_ls_trials = kv.get_or("max_ls_trials", cfg.max_ls_trials)?;
    cfg.max_props = kv.get("max_props")?;
    cfg.halt_on_violation = kv.get_or("halt_on_violation", cfg.halt_on_violation)?;
    cfg.redo_on_condition_failure =
        kv.get_or("redo_on_condition_failure", cfg.redo_on_condition_failure)?;
    cfg.assumed_delta_g = kv.get_or("assumed_delta_g", cfg.assumed_delta_g)?;
    cfg.assumed_delta_h = kv.get_or("assumed_delta_h", cfg.assumed_delta_h)?;

    let grad_batch = kv.get_or("grad_batch", frac(n, 0.05))?;
    let hess_batch = kv.get_or("hess_batch", frac(n, 0.01))?;
    let adaptive = kv.get_or("adaptive", true)?;
    let mut variant = Variant::LineSearch;
    let mut policy = match spec.variant {
        Preset::Full => SamplingPolicy::exact(),
        Preset::SubH => SamplingPolicy::sub_hessian(hess_batch),
        Preset::InexactFullEval | Preset::InexactFixed | Preset::InexactSubEval => {
            SamplingPolicy::sub_both(grad_batch, hess_batch, adaptive)
        }
    };
    policy.min_batch = kv.get_or("min_batch", policy.min_batch)?;
    match spec.variant {
        Preset::InexactFixed => {
            variant = Variant::FixedStep;
            cfg.step_rule = StepRule::Preset {
                sol: kv.get_or("step_sol", 0.2)?,
                nc: kv.get_or("step_nc", 0.04)?,
            };
        }
        Preset::InexactSubEval => cfg.ls_objective = LineSearchObjective::GradientBatch,
        _ => {}
    }
    Ok((policy, cfg, variant))
}

/// Summary of one repeat.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub repeat: usize,
    pub seed: u64,
    pub termination: String,
    pub contract_violation: bool,
    pub iterations: usize,
    pub props: u64,
    pub f_final: f64,
    pub grad_norm_final: f64,
    pub violations: usize,
    pub csv: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunSummary>,
    pub reports: Vec<RunReport>,
    pub aggregate: Aggregate,
}

impl ExperimentOutcome {
    pub fn any_violation(&self) -> bool {
        self.runs.iter().any(|r| r.contract_violation)
    }
}

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::FirstOrderAndCertified => "first-order-and-certified".into(),
        Termination::CertifiedAtCurrentPoint => "certified-at-current-point".into(),
        Termination::MaxIters => "max-iters".into(),
        Termination::ContractViolation { contract, .. } => format!("contract-violation:{contract}"),
    }
}

/// Runs all repeats with seeds `seed, seed+1, …` and writes
/// `run_{r}.csv` plus `aggregate.json` into `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> anyhow::Result<ExperimentOutcome> {
    let inst = Instance::build(spec)?;
    run_instance(spec, &inst)
}

/// As [`run_experiment`] with a prebuilt instance.
pub fn run_instance(spec: &ExperimentSpec, inst: &Instance) -> anyhow::Result<ExperimentOutcome> {
    std::fs::create_dir_all(&spec.out)
        .with_context(|| format!("creating {}", spec.out.display()))?;
    let mut runs = Vec::with_capacity(spec.repeats);
    let mut reports = Vec::with_capacity(spec.repeats);
    for r in 0..spec.repeats {
        let seed = spec.seed.wrapping_add(r as u64);
        let mut s = spec.clone();
        s.seed = seed;
        let (policy, cfg, variant) = resolve(&s, inst)?;
        let oracle = inst.problem.oracle();
        log::info!("{} / {} repeat {r} seed {seed}", spec.problem, spec.variant);
        let report = ncg_core::run(&oracle, &inst.x0, policy, &cfg, variant)?;
        let name = format!("run_{r}.csv");
        let path = spec.out.join(&name);
        report::write_csv(&path, &report.records)?;
        let contract_violation = matches!(report.termination, Termination::ContractViolation { .. })
            || (spec.audit && !report.violations.is_empty());
        runs.push(RunSummary {
            repeat: r,
            seed,
            termination: termination_label(&report.termination),
            contract_violation,
            iterations: report.iterations,
            props: report.ledger.props(),
            f_final: report.f_final,
            grad_norm_final: report.final_grad_true_norm,
            violations: report.violations.len(),
            csv: name,
        });
        reports.push(report);
    }
    let traj: Vec<&[IterationRecord]> = reports.iter().map(|r| r.records.as_slice()).collect();
    let aggregate = Aggregate::from_records(
        &spec.problem.to_string(),
        &spec.variant.to_string(),
        &traj,
        spec.bins,
        runs.clone(),
    );
    aggregate.save(&spec.out.join("aggregate.json"))?;
    Ok(ExperimentOutcome {
        runs,
        reports,
        aggregate,
    })
}

/// Output directory for one preset under a common root.
pub fn preset_dir(root: &Path, preset: Preset) -> PathBuf {
    root.join(preset.to_string())
}
