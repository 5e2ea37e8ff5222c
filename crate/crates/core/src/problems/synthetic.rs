use crate::error::{Error, Result};
use crate::oracle::FiniteSum;

/// `f_i(x) = ½ Σ_j c_j x_j²`, replicated over `components` identical terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    diag: Vec<f64>,
    components: usize,
}

impl Quadratic {
    pub fn new(diag: Vec<f64>, components: usize) -> Result<Self> {
        if diag.is_empty() || components == 0 {
            return Err(Error::invalid("quadratic needs a dimension and a component"));
        }
        Ok(Self { diag, components })
    }

    /// `½‖x‖²` in every component.
    pub fn isotropic(dim: usize, components: usize) -> Self {
        Self {
            diag: vec![1.0; dim],
            components,
        }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}

impl FiniteSum for Quadratic {
    fn n_components(&self) -> usize {
        self.components
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn component_value(&self, _i: usize, x: &[f64]) -> f64 {
        0.5 * self.diag.iter().zip(x).map(|(c, v)| c * v * v).sum::<f64>()
    }

    fn add_component_grad(&self, _i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        for ((o, c), v) in out.iter_mut().zip(&self.diag).zip(x) {
            *o += weight * c * v;
        }
    }

    fn add_component_hvp(&self, _i: usize, _x: &[f64], v: &[f64], weight: f64, out: &mut [f64]) {
        for ((o, c), vi) in out.iter_mut().zip(&self.diag).zip(v) {
            *o += weight * c * vi;
        }
    }
}

/// Separable quartic with a strict saddle at the origin:
/// `f(x) = Σ_j (λ_j x_j²/2 + (c/4) x_j⁴)`.
///
/// The Hessian is `diag(λ_j + 3c x_j²)`, so on the ball of radius `R` the
/// Hessian is `6cR`-Lipschitz and bounded by `max|λ| + 3cR²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSaddle {
    spectrum: Vec<f64>,
    quartic: f64,
}

impl SyntheticSaddle {
    /// Spectrum `(−negative_curvature, 1, …, 1)` at the origin.
    pub fn new(dim: usize, negative_curvature: f64, quartic: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("saddle needs dim >= 2"));
        }
        let mut spectrum = vec![1.0; dim];
        spectrum[0] = -negative_curvature.abs();
        Self::with_spectrum(spectrum, quartic)
    }

    pub fn with_spectrum(spectrum: Vec<f64>, quartic: f64) -> Result<Self> {
        if spectrum.len() < 2 {
            return Err(Error::invalid("saddle needs dim >= 2"));
        }
        if !(quartic > 0.0) {
            return Err(Error::invalid("quartic coefficient must be positive"));
        }
        Ok(Self { spectrum, quartic })
    }

    /// Hessian eigenvalues at the origin.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Global minimum value: each negative `λ` contributes `−λ²/(4c)`.
    pub fn f_low(&self) -> f64 {
        self.spectrum
            .iter()
            .filter(|l| **l < 0.0)
            .map(|l| -l * l / (4.0 * self.quartic))
            .sum()
    }

    /// Radius of a ball containing `{x : f(x) ≤ level}`.
    pub fn sublevel_radius(&self, level: f64) -> f64 {
        let d = self.spectrum.len() as f64;
        let neg = self.spectrum.iter().fold(0.0_f64, |m, l| m.max(-l));
        let a = self.quartic / (4.0 * d);
        let b = neg / 2.0;
        let s = (b + (b * b + 4.0 * a * level.max(0.0)).sqrt()) / (2.0 * a);
        s.sqrt()
    }

    /// `(U_H, L_H)` valid on the ball of the given radius.
    pub fn bounds_on_ball(&self, radius: f64) -> (f64, f64) {
        let lmax = self.spectrum.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        (
            lmax + 3.0 * self.quartic * radius * radius,
            6.0 * self.quartic * radius,
        )
    }

    fn term(&self, j: usize, t: f64) -> f64 {
        0.5 * self.spectrum[j] * t * t + 0.25 * self.quartic * t.powi(4)
    }
}

impl FiniteSum for SyntheticSaddle {
    fn n_components(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        self.spectrum.len()
    }

    fn component_value(&self, _i: usize, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(j, t)| self.term(j, *t)).sum()
    }

    fn add_component_grad(&self, _i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        for (j, (o, t)) in out.iter_mut().zip(x).enumerate() {
            *o += weight * (self.spectrum[j] * t + self.quartic * t.powi(3));
        }
    }

    fn add_component_hvp(&self, _i: usize, x: &[f64], v: &[f64], weight: f64, out: &mut [f64]) {
        for (j, ((o, t), vj)) in out.iter_mut().zip(x).zip(v).enumerate() {
            *o += weight * (self.spectrum[j] + 3.0 * self.quartic * t * t) * vj;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{assemble, sym_min_eigenvalue};
    use crate::oracle::{IndexSet, ObjectiveOracle};

    #[test]
    fn saddle_at_origin() {
        let s = SyntheticSaddle::new(4, 1.0, 0.5).unwrap();
        let o = ObjectiveOracle::new(s);
        let x = [0.0; 4];
        let g = o.eval_grad(&x, &IndexSet::All).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        let h = o.hessian(&x, IndexSet::All).unwrap();
        let m = assemble(&h).unwrap();
        assert!((sym_min_eigenvalue(&m) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn f_low_is_attained() {
        let s = SyntheticSaddle::new(3, 2.0, 0.5).unwrap();
        // minimizer along the first axis at t² = 2/0.5
        let x = [2.0, 0.0, 0.0];
        assert!((s.component_value(0, &x) - s.f_low()).abs() < 1e-12);
        assert!((s.f_low() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn sublevel_radius_contains_level_set() {
        let s = SyntheticSaddle::new(3, 1.0, 0.25).unwrap();
        let r = s.sublevel_radius(1.0);
        // point on the boundary along an axis
        for t in [r * 0.99, -r * 0.99] {
            let mut x = [0.0; 3];
            x[0] = t;
            assert!(s.component_value(0, &x) > 1.0 || t.abs() < r);
        }
        assert!(r.is_finite() && r > 0.0);
    }
}
