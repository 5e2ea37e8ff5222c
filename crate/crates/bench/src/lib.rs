//! Deterministic fixtures shared by the kernel benchmarks.

use nalgebra::{DMatrix, DVector};
use ncg_core::{Link, NlsProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `Q diag(eigs) Qᵀ` with `Q` from the QR factor of a Gaussian matrix.
pub fn planted_matrix(eigs: &[f64], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = eigs.len();
    let q = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal))
        .qr()
        .q();
    let m = &q * DMatrix::from_diagonal(&DVector::from_row_slice(eigs)) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Eigenvalues spread evenly over `[lo, hi]`.
pub fn linear_spectrum(d: usize, lo: f64, hi: f64) -> Vec<f64> {
    if d == 1 {
        return vec![lo];
    }
    (0..d).map(|i| lo + (hi - lo) * i as f64 / (d - 1) as f64).collect()
}

pub fn gaussian_vector(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn nls_problem(n: usize, d: usize, seed: u64) -> NlsProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NlsProblem::synthetic(n, d, Link::Sigmoid, &mut rng)
}
