use thiserror::Error;

/// Errors raised by the core crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite evaluation at stage {stage}: {what}")]
    NonFinite { stage: usize, what: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("infeasible point (violation {violation:e})")]
    Infeasible { violation: f64 },
    #[error("quadrature node budget exceeded: {nodes} > {budget}; use Monte Carlo instead")]
    NodeBudget { nodes: f64, budget: f64 },
    #[error("state {state:?} lies outside the tabular grid box at stage {stage}")]
    OutsideGrid { stage: usize, state: Vec<f64> },
    #[error("stochastic problem requires an expectation engine")]
    MissingEngine,
    #[error("ill-conditioned matrix at stage {stage} (condition {cond:e})")]
    IllConditioned { stage: usize, cond: f64 },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown name: {0}")]
    Unknown(String),
    #[error("gradient cross-check failed: relative error {rel:e}")]
    GradientCheck { rel: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    /// True for errors caused by bad inputs rather than failing numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Invalid(_)
                | Error::Infeasible { .. }
                | Error::Parse { .. }
                | Error::Unknown(_)
                | Error::MissingEngine
                | Error::NodeBudget { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
