use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::oracle::FiniteSum;

/// Nonlinearity of an NLS objective.
///
/// `Sigmoid` and `Tanh` give `f_i(x) = (b_i − φ(⟨a_i, x⟩))²`; `Welsch`
/// gives `f_i(x) = ψ(b_i − ⟨a_i, x⟩)` with `ψ(r) = (1 − e^{−αr²})/α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Link {
    Sigmoid,
    Tanh,
    Welsch { alpha: f64 },
}

/// Smoothness and boundedness constants of a problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Lipschitz constant of the Hessian.
    pub l_h: f64,
    /// Bound on every component gradient norm.
    pub k_g: f64,
    /// Bound on every component Hessian norm.
    pub k_h: f64,
    /// Bound on the (estimated) Hessian norm handed to the kernels.
    pub u_h: f64,
}

/// `(φ, φ', φ'')` at `z`.
fn sigmoid3(z: f64) -> (f64, f64, f64) {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    let d1 = p * (1.0 - p);
    (p, d1, d1 * (1.0 - 2.0 * p))
}

fn tanh3(z: f64) -> (f64, f64, f64) {
    let t = z.tanh();
    let d1 = 1.0 - t * t;
    (t, d1, -2.0 * t * d1)
}

/// Dense row-major design matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NlsProblem {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
    link: Link,
}

impl NlsProblem {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>, link: Link) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("NLS problem needs at least one row"));
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let dim = rows[0].len();
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        Self::from_flat(features, labels, dim, link)
    }

    pub fn from_flat(features: Vec<f64>, labels: Vec<f64>, dim: usize, link: Link) -> Result<Self> {
        if labels.is_empty() || dim == 0 {
            return Err(Error::invalid("NLS problem needs at least one row and one feature"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        if let Link::Welsch { alpha } = link {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::invalid("Welsch alpha must be positive"));
            }
        }
        if !features.iter().chain(&labels).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("NLS data"));
        }
        Ok(Self {
            features,
            labels,
            dim,
            link,
        })
    }

    /// Gaussian features scaled by `1/√d`, labels drawn from a planted
    /// model: Bernoulli(σ(⟨a, x*⟩)) in {0, 1} for sigmoid, signs for tanh,
    /// noisy linear responses for Welsch.
    pub fn synthetic(n: usize, dim: usize, link: Link, rng: &mut impl Rng) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        let planted: Vec<f64> = (0..dim)
            .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut features = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..dim)
                .map(|_| s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let z = dot(&row, &planted);
            let b = match link {
                Link::Sigmoid => f64::from(rng.random::<f64>() < sigmoid3(z).0),
                Link::Tanh => {
                    if rng.random::<f64>() < sigmoid3(2.0 * z).0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Link::Welsch { .. } => z + 0.1 * rng.sample::<f64, _>(StandardNormal),
            };
            features.extend_from_slice(&row);
            labels.push(b);
        }
        Self {
            features,
            labels,
            dim,
            link,
        }
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.rows() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    n: self.rows(),
                });
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(features, labels, self.dim, self.link)
    }

    /// Per-row maxima of the closed-form bounds for each link.
    pub fn constants(&self) -> ProblemConstants {
        let mut l_h = 0.0_f64;
        let mut k_g = 0.0_f64;
        let mut k_h = 0.0_f64;
        for i in 0..self.rows() {
            let a = norm(self.row(i));
            let b = self.labels[i].abs();
            let (l, g, h) = match self.link {
                Link::Sigmoid => (
                    2.0 * (b + 4.0) * a.powi(3),
                    (b + 1.0) * a / 2.0,
                    (b + 2.0) * a * a,
                ),
                Link::Tanh => (
                    2.0 * (b + 4.0) * a.powi(3),
                    2.0 * (b + 1.0) * a,
                    (b + 2.0) * a * a,
                ),
                Link::Welsch { alpha } => (
                    9.0 * alpha.powf(1.5) * a.powi(3),
                    (2.0 / alpha).sqrt() * a,
                    2.0 * a * a,
                ),
            };
            l_h = l_h.max(l);
            k_g = k_g.max(g);
            k_h = k_h.max(h);
        }
        ProblemConstants {
            l_h,
            k_g,
            k_h,
            u_h: k_h,
        }
    }

    /// `(value, dvalue/dz, d²value/dz²)` of the component as a function of
    /// `z = ⟨a_i, x⟩`.
    fn scalar_derivs(&self, i: usize, z: f64) -> (f64, f64, f64) {
        let b = self.labels[i];
        match self.link {
            Link::Sigmoid | Link::Tanh => {
                let (p, d1, d2) = if self.link == Link::Sigmoid {
                    sigmoid3(z)
                } else {
                    tanh3(z)
                };
                let r = b - p;
                (r * r, -2.0 * r * d1, 2.0 * (d1 * d1 - r * d2))
            }
            Link::Welsch { alpha } => {
                let r = b - z;
                let e = (-alpha * r * r).exp();
                let val = (1.0 - e) / alpha;
                let dr = 2.0 * r * e;
                let ddr = (2.0 - 4.0 * alpha * r * r) * e;
                // d/dz = −d/dr
                (val, -dr, ddr)
            }
        }
    }
}

impl FiniteSum for NlsProblem {
    fn n_components(&self) -> usize {
        self.rows()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let a = self.row(i);
        self.scalar_derivs(i, dot(a, x)).0
    }

    fn add_component_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let a = self.row(i);
        let (_, d1, _) = self.scalar_derivs(i, dot(a, x));
        let c = weight * d1;
        for (o, ai) in out.iter_mut().zip(a) {
            *o += c * ai;
        }
    }

    fn add_component_hvp(&self, i: usize, x: &[f64], v: &[f64], weight: f64, out: &mut [f64]) {
        let a = self.row(i);
        let (_, _, d2) = self.scalar_derivs(i, dot(a, x));
        let c = weight * d2 * dot(a, v);
        for (o, ai) in out.iter_mut().zip(a) {
            *o += c * ai;
        }
    }
}
