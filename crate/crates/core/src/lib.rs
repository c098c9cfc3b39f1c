pub mod baselines;
pub mod el;
pub mod entropy;
pub mod error;
pub mod mcmc;
pub mod models;
pub mod posterior;
pub mod rng;
pub mod value;

pub use el::{compute_constraints, solve_el, ConstraintMatrix, ElSolution, SummaryVector};
pub use error::{Error, Result};
pub use rng::Stream;
pub use value::LogValue;
