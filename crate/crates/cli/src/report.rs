//! Per-run CSV files and the cross-repeat aggregate.

use std::path::Path;

use ncg_core::IterationRecord;
use serde::Serialize;

use crate::experiment::RunSummary;

/// Bumped whenever [`CSV_COLUMNS`] changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 14] = [
    "iter",
    "f",
    "grad_est_norm",
    "grad_true_norm",
    "d_type",
    "step_class",
    "alpha",
    "ls_trials",
    "cg_iters",
    "meo_iters",
    "f_calls",
    "grad_calls",
    "hv_calls",
    "props",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV row; absent values are empty fields.
pub fn csv_row(r: &IterationRecord) -> [String; 14] {
    [
        r.iter.to_string(),
        r.f.to_string(),
        opt(r.grad_est_norm),
        opt(r.grad_true_norm),
        opt(r.d_type),
        opt(r.step_class),
        opt(r.alpha),
        opt(r.ls_trials),
        opt(r.cg_iters),
        opt(r.meo_iters),
        r.ledger.f_calls.to_string(),
        r.ledger.grad_calls.to_string(),
        r.ledger.hv_calls.to_string(),
        r.ledger.props().to_string(),
    ]
}

pub fn write_csv_to<W: std::io::Write>(w: W, records: &[IterationRecord]) -> csv::Result<()> {
    let mut wr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wr.write_record(CSV_COLUMNS)?;
    for r in records {
        wr.write_record(csv_row(r))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, records: &[IterationRecord]) -> anyhow::Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv_to(std::io::BufWriter::new(f), records)?;
    Ok(())
}

/// Mean and standard deviation of the objective over repeats on a common
/// grid of cumulative oracle calls.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub csv_schema_version: u32,
    pub problem: String,
    pub variant: String,
    pub repeats: usize,
    /// Evenly spaced from 0 to the largest final `props` over repeats.
    pub props_grid: Vec<f64>,
    pub f_mean: Vec<f64>,
    /// Sample standard deviation; zero for a single repeat.
    pub f_std: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

/// `f` of the last record with `props ≤ p`. Runs that ended earlier hold
/// their final value.
pub fn f_at(records: &[(u64, f64)], p: f64) -> f64 {
    let k = records.partition_point(|(q, _)| (*q as f64) <= p);
    records[k.saturating_sub(1)].1
}

/// Grid, mean and sample standard deviation from `(props, f)` trajectories.
pub fn binned_stats(trajs: &[Vec<(u64, f64)>], bins: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let top = trajs
        .iter()
        .filter_map(|t| t.last().map(|(p, _)| *p))
        .max()
        .unwrap_or(0) as f64;
    let grid: Vec<f64> = (0..=bins).map(|i| top * i as f64 / bins as f64).collect();
    let k = trajs.len() as f64;
    let mut mean = Vec::with_capacity(grid.len());
    let mut std = Vec::with_capacity(grid.len());
    for &p in &grid {
        let vals: Vec<f64> = trajs.iter().map(|t| f_at(t, p)).collect();
        let m = vals.iter().sum::<f64>() / k;
        let var = if trajs.len() > 1 {
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        std.push(var.sqrt());
    }
    (grid, mean, std)
}

impl Aggregate {
    pub fn from_records(
        problem: &str,
        variant: &str,
        runs_records: &[&[IterationRecord]],
        bins: usize,
        runs: Vec<RunSummary>,
    ) -> Self {
        let trajs: Vec<Vec<(u64, f64)>> = runs_records
            .iter()
            .map(|rs| rs.iter().map(|r| (r.ledger.props(), r.f)).collect())
            .collect();
        let (props_grid, f_mean, f_std) = binned_stats(&trajs, bins);
        Self {
            csv_schema_version: CSV_SCHEMA_VERSION,
            problem: problem.to_string(),
            variant: variant.to_string(),
            repeats: runs_records.len(),
            props_grid,
            f_mean,
            f_std,
            runs,
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_lookup_holds_last_value() {
        let t = vec![(0, 5.0), (10, 3.0), (30, 1.0)];
        assert_eq!(f_at(&t, 0.0), 5.0);
        assert_eq!(f_at(&t, 9.9), 5.0);
        assert_eq!(f_at(&t, 10.0), 3.0);
        assert_eq!(f_at(&t, 1e9), 1.0);
    }

    #[test]
    fn stats_over_two_runs() {
        let a = vec![(0, 4.0), (10, 2.0)];
        let b = vec![(0, 2.0), (20, 0.0)];
        let (g, m, s) = binned_stats(&[a, b], 2);
        assert_eq!(g, vec![0.0, 10.0, 20.0]);
        assert_eq!(m, vec![3.0, 2.0, 1.0]);
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-15);
    }
}
