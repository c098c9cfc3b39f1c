use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empirical likelihood dual did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),

    #[error("sample covariance is singular")]
    SingularCovariance,

    #[error(
        "no neighbour weights exist for k = {k}, r = {r}: {constraints} constraints on \
         {support} support points; use a larger k"
    )]
    NuInfeasible {
        k: usize,
        r: usize,
        constraints: usize,
        support: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation failed for model {model}: {reason}")]
    Simulation { model: String, reason: String },

    #[error("no feasible initial point for model {model} with m = {m} after {tries} attempts")]
    Initialization { model: String, m: usize, tries: usize },

    #[error("unknown summary set {name:?} for model {model}; valid options: {valid}")]
    UnknownSummarySet {
        model: String,
        name: String,
        valid: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
