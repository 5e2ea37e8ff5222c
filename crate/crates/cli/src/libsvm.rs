//! LIBSVM text format: `label index:value index:value ...` with 1-based,
//! strictly increasing indices.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ncg_core::{Link, NlsProblem};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LibsvmError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no data rows")]
    Empty,
}

/// Sparse rows as loaded. Indices are stored 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels: Vec<f64>,
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Largest feature index seen (1-based), i.e. the inferred dimension.
    pub dim: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LibsvmError> {
        let file = std::fs::File::open(path)?;
        Self::parse(BufReader::new(file))
    }

    pub fn parse(reader: impl Read) -> Result<Self, LibsvmError> {
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        let mut dim = 0;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: String| LibsvmError::Parse { line: lineno, msg };
            let mut tokens = body.split_whitespace();
            let label_tok = tokens.next().expect("nonempty line has a token");
            let label: f64 = label_tok
                .parse()
                .map_err(|_| err(format!("bad label {label_tok:?}")))?;
            if !label.is_finite() {
                return Err(err(format!("non-finite label {label_tok:?}")));
            }
            let mut row = Vec::new();
            let mut last = 0usize;
            for tok in tokens {
                let (idx, val) = tok
                    .split_once(':')
                    .ok_or_else(|| err(format!("expected index:value, got {tok:?}")))?;
                let idx: usize = idx.parse().map_err(|_| err(format!("bad index {idx:?}")))?;
                if idx == 0 {
                    return Err(err("indices are 1-based".into()));
                }
                if idx <= last {
                    return Err(err(format!("index {idx} not strictly increasing")));
                }
                let val: f64 = val.parse().map_err(|_| err(format!("bad value {val:?}")))?;
                if !val.is_finite() {
                    return Err(err(format!("non-finite value at index {idx}")));
                }
                last = idx;
                row.push((idx - 1, val));
            }
            dim = dim.max(last);
            labels.push(label);
            rows.push(row);
        }
        if labels.is_empty() {
            return Err(LibsvmError::Empty);
        }
        Ok(Self { labels, rows, dim })
    }

    /// Writes values with the shortest representation that parses back to
    /// the same `f64`. Zero entries are kept.
    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut line = String::new();
        for (b, row) in self.labels.iter().zip(&self.rows) {
            line.clear();
            write!(line, "{b}").expect("writing to a String");
            for (j, v) in row {
                write!(line, " {}:{v}", j + 1).expect("writing to a String");
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    /// Densifies into an NLS problem with `max(self.dim, 1)` features.
    pub fn to_problem(&self, link: Link) -> ncg_core::Result<NlsProblem> {
        let d = self.dim.max(1);
        let mut features = vec![0.0; self.n() * d];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                features[i * d + j] = v;
            }
        }
        NlsProblem::from_flat(features, self.labels.clone(), d, link)
    }

    /// First `n` rows of a uniformly shuffled copy.
    pub fn subsample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Self {
        let mut idx = rand::seq::index::sample(rng, self.n(), n.min(self.n())).into_vec();
        idx.sort_unstable();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        let rows: Vec<Vec<(usize, f64)>> = idx.iter().map(|&i| self.rows[i].clone()).collect();
        let dim = rows
            .iter()
            .filter_map(|r| r.last().map(|(j, _)| j + 1))
            .max()
            .unwrap_or(0);
        Self { labels, rows, dim }
    }
}

/// A binary classification set in the style of small LIBSVM benchmarks:
/// features clipped to `[-1, 1]`, about a third of them zero, labels in
/// `{0, 1}` drawn from a planted logistic model with class imbalance.
pub fn synthetic_binary<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Dataset {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let planted: Vec<f64> = (0..dim).map(|_| 1.5 * normal.sample(rng)).collect();
    let mut labels = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        let mut z = -1.0;
        for (j, w) in planted.iter().enumerate() {
            if rng.random::<f64>() < 1.0 / 3.0 {
                continue;
            }
            let v = (0.5 * normal.sample(rng)).clamp(-1.0, 1.0);
            z += w * v;
            row.push((j, v));
        }
        let p = 1.0 / (1.0 + (-z).exp());
        labels.push(f64::from(rng.random::<f64>() < p));
        rows.push(row);
    }
    let dim_seen = rows
        .iter()
        .filter_map(|r| r.last().map(|(j, _)| j + 1))
        .max()
        .unwrap_or(0);
    Dataset {
        labels,
        rows,
        dim: dim_seen,
    }
}
