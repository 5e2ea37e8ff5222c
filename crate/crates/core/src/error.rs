use thiserror::Error;

/// Guarantees the drivers can detect as broken at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Contract {
    /// Capped CG ran past its iteration cap without any exit test firing.
    CappedCgCap,
    /// Slow residual decay detected but no accumulated difference had curvature below the damping.
    CappedCgExtraction,
    /// Backtracking exhausted the trial budget.
    LineSearchTrials,
    /// The fixed negative-curvature step had a nonpositive discriminant.
    FixedStepDiscriminant,
    /// A step that must decrease the objective did not.
    Monotonicity,
    /// A step decreased the objective by less than its guaranteed floor.
    DecreaseFloor,
    /// The backtracking index exceeded its worst-case bound.
    BacktrackingBound,
    /// The gradient/Hessian accuracy condition failed retrospectively.
    AccuracyCondition,
    /// More outer iterations than the worst-case bound.
    IterationBound,
}

impl std::fmt::Display for Contract {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Contract::CappedCgCap => "capped-cg-cap",
            Contract::CappedCgExtraction => "capped-cg-extraction",
            Contract::LineSearchTrials => "line-search-trials",
            Contract::FixedStepDiscriminant => "fixed-step-discriminant",
            Contract::Monotonicity => "monotonicity",
            Contract::DecreaseFloor => "decrease-floor",
            Contract::BacktrackingBound => "backtracking-bound",
            Contract::AccuracyCondition => "accuracy-condition",
            Contract::IterationBound => "iteration-bound",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty index set")]
    EmptyIndexSet,
    #[error("component index {index} out of range for {n} components")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("zero vector passed to {0}")]
    ZeroVector(&'static str),
    #[error("vector is not unit length (norm {0})")]
    NonUnit(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("contract violated: {contract} ({detail})")]
    ContractViolation { contract: Contract, detail: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn violation(contract: Contract, detail: impl Into<String>) -> Self {
        Error::ContractViolation {
            contract,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
