//! Analytic objectives: nonlinear least squares with closed-form
//! derivatives, plus synthetic quadratics and saddles for the
//! negative-curvature paths.

mod nls;
mod synthetic;

pub use nls::{Link, NlsProblem, ProblemConstants};
pub use synthetic::{Quadratic, SyntheticSaddle};
