//! Experiment orchestration for empirical-likelihood ABC: posterior profiles
//! over a grid, single chains, coverage studies and method comparisons.

pub mod cli;
pub mod output;
pub mod run;
pub mod spec;

pub use run::{run, Report};
pub use spec::{ExperimentSpec, GridSpec, Kind, Method, Resolved};
