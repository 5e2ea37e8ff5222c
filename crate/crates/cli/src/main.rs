use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ncg_cli::libsvm::synthetic_binary;
use ncg_cli::{run_experiment, ExperimentSpec, KeyValues};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ncg", version, about = "Inexact Newton-CG experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver preset on a problem and write CSV/JSON reports.
    Solve(SolveArgs),
    /// Write a synthetic binary classification set in LIBSVM format.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// nls-sigmoid, nls-tanh, nls-welsch, quadratic or saddle
    #[arg(long)]
    problem: Option<String>,
    /// LIBSVM file for the NLS problems.
    #[arg(long)]
    data: Option<PathBuf>,
    /// full, subh, inexact-full-eval, inexact-fixed or inexact-sub-eval
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Compute true gradients and check run-time guarantees.
    #[arg(long)]
    audit: bool,
    /// Skip the eigenvalue check after short SOL steps (preset default).
    #[arg(long, conflicts_with = "keep_small_step_block")]
    skip_small_step_block: bool,
    /// Run the eigenvalue check after short SOL steps.
    #[arg(long)]
    keep_small_step_block: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 22)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn settings(a: &SolveArgs) -> anyhow::Result<KeyValues> {
    let mut kv = match &a.config {
        Some(p) => KeyValues::read(p).with_context(|| format!("reading {}", p.display()))?,
        None => KeyValues::new(),
    };
    for pair in &a.set {
        let (k, v) = KeyValues::parse_pair(pair).with_context(|| format!("bad --set {pair:?}"))?;
        kv.set(&k, v);
    }
    let flags: [(&str, Option<String>); 7] = [
        ("problem", a.problem.clone()),
        ("data", a.data.as_ref().map(|p| p.display().to_string())),
        ("variant", a.variant.clone()),
        ("eps", a.eps.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("repeats", a.repeats.map(|v| v.to_string())),
        ("out", a.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            kv.set(k, v);
        }
    }
    if a.audit {
        kv.set("audit", "true");
    }
    if a.skip_small_step_block {
        kv.set("skip_small_step_block", "true");
    }
    if a.keep_small_step_block {
        kv.set("skip_small_step_block", "false");
    }
    Ok(kv)
}

fn solve(a: &SolveArgs) -> anyhow::Result<ExitCode> {
    let spec = ExperimentSpec::from_settings(settings(a)?)?;
    let outcome = run_experiment(&spec)?;
    for r in &outcome.runs {
        println!(
            "repeat {} seed {}: {} after {} iterations, props {}, f {:.6e}, |grad f| {:.3e}",
            r.repeat, r.seed, r.termination, r.iterations, r.props, r.f_final, r.grad_norm_final
        );
    }
    println!("reports written to {}", spec.out.display());
    Ok(if outcome.any_violation() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn synth(a: &SynthArgs) -> anyhow::Result<ExitCode> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let data = synthetic_binary(a.n, a.dim, &mut rng);
    data.save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} rows with {} features to {}", data.n(), data.dim, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
