//! Inexact Newton-CG for smooth nonconvex finite sums.
//!
//! The crate provides the inner kernels ([`capped_cg`] and the Lanczos
//! minimum-eigenvalue oracle in [`meo`]), the outer drivers in [`solver`],
//! subsampling rules in [`sampling`], metered oracles in [`oracle`] and a
//! few analytic objectives in [`problems`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capped_cg;
pub mod error;
pub mod linalg;
pub mod meo;
pub mod oracle;
pub mod problems;
pub mod sampling;
pub mod solver;

pub use capped_cg::{capped_cg, j_cap, CappedCgParams, CappedCgResult, DType};
pub use error::{Contract, Error, Result};
pub use meo::{meo_lanczos, MeoOutcome, MeoResult};
pub use oracle::{
    FiniteSum, HessianOperator, IndexSet, LedgerSnapshot, ObjectiveOracle, OracleLedger, Scaling,
};
pub use problems::{Link, NlsProblem, ProblemConstants, Quadratic, SyntheticSaddle};
pub use sampling::{AccuracyTargets, SampleMode, SamplingPolicy};
pub use solver::{
    run, IterationRecord, RunReport, SolverConfig, StepClass, StepRule, Termination, Variant,
};
