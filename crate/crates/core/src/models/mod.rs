//! Generative models: a parameter space with a prior, a simulator, and a
//! deterministic summary map.

use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::el::SummaryVector;
use crate::entropy::EntropyMode;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::value::LogValue;

mod arch;
mod gk;
mod graph;
mod normal;
mod stereology;
pub mod summaries;

pub use arch::Arch1;
pub use gk::{gk_quantile, GAndK, GK_C};
pub use graph::{ErdosRenyi, Graph};
pub use normal::{NormalLocation, NormalVariance, VarianceSummary};
pub use stereology::{gpd_cdf, gpd_quantile, Stereology};
pub use summaries::{g4_summary, quantile_summary, raw_moment_summary, upcrossing_summary};

pub const MODEL_NAMES: [&str; 6] = [
    "normal_location",
    "normal_variance",
    "erdos_renyi",
    "gk",
    "arch1",
    "stereology",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Series(Vec<f64>),
    Graph(Graph),
}

impl Dataset {
    pub fn as_series(&self) -> Option<&[f64]> {
        match self {
            Dataset::Series(x) => Some(x),
            Dataset::Graph(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorComponent {
    /// Uniform on the open interval (lo, hi).
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, variance: f64 },
    Beta { a: f64, b: f64 },
}

impl PriorComponent {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            PriorComponent::Uniform { lo, hi } => {
                if x > lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorComponent::Normal { mean, variance } => {
                -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - (x - mean).powi(2) / (2.0 * variance)
            }
            PriorComponent::Beta { a, b } => {
                if x > 0.0 && x < 1.0 {
                    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            PriorComponent::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform_open(),
            PriorComponent::Normal { mean, variance } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + variance.sqrt() * z
            }
            PriorComponent::Beta { a, b } => Beta::new(a, b).expect("valid beta parameters").sample(rng),
        }
    }

    /// Closure of the support.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            PriorComponent::Uniform { lo, hi } => (lo, hi),
            PriorComponent::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PriorComponent::Beta { .. } => (0.0, 1.0),
        }
    }
}

/// Independent prior over the coordinates of θ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior(pub Vec<PriorComponent>);

impl Prior {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn log_density(&self, theta: &[f64]) -> LogValue {
        if theta.len() != self.0.len() || theta.iter().any(|v| !v.is_finite()) {
            return LogValue::LogZero;
        }
        let total: f64 = self.0.iter().zip(theta).map(|(c, &x)| c.log_density(x)).sum();
        LogValue::from_f64(total)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.log_density(theta).is_finite()
    }

    pub fn sample(&self, rng: &mut Stream) -> Vec<f64> {
        self.0.iter().map(|c| c.sample(rng)).collect()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.0.iter().map(PriorComponent::bounds).collect()
    }
}

/// A simulator with a prior and a summary map.
///
/// `simulate` must be a pure function of `theta` and the stream state, and
/// `summarize` a pure function of the dataset.
pub trait GenerativeModel: Send + Sync {
    fn name(&self) -> &str;

    fn param_names(&self) -> Vec<String>;

    fn prior(&self) -> &Prior;

    fn dim_theta(&self) -> usize {
        self.prior().dim()
    }

    fn summary_dim(&self) -> usize;

    /// Label of the active summary set.
    fn summary_set(&self) -> &str;

    fn theta_truth(&self) -> Option<&[f64]>;

    fn simulate(&self, theta: &[f64], rng: &mut Stream) -> Result<Dataset>;

    fn summarize(&self, data: &Dataset) -> Result<SummaryVector>;

    fn simulate_summary(&self, theta: &[f64], rng: &mut Stream) -> Result<SummaryVector> {
        let data = self.simulate(theta, rng)?;
        self.summarize(&data)
    }

    /// Entropy term used when the caller does not choose one.
    fn default_entropy(&self) -> EntropyMode {
        EntropyMode::Gaussian
    }

    /// Closed-form log posterior of θ given the observed summary, up to an
    /// additive constant, for models that have one.
    fn analytic_log_posterior(&self, _obs: &SummaryVector, _theta: &[f64]) -> Option<f64> {
        None
    }
}

pub(crate) fn check_theta(model: &dyn GenerativeModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.dim_theta() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_theta(),
            got: theta.len(),
        });
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("theta"));
    }
    Ok(())
}

pub(crate) fn standard_normals(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Construction options shared by the model registry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Observations per dataset (series models).
    pub n: Option<usize>,
    /// Vertices per graph (Erdős–Rényi).
    pub n_nodes: Option<usize>,
}

/// Builds a model by name. `summaries = None` selects the model's default set.
pub fn build_model(
    name: &str,
    summaries: Option<&str>,
    opts: &ModelOptions,
) -> Result<Box<dyn GenerativeModel>> {
    let model: Box<dyn GenerativeModel> = match name {
        "normal_location" => Box::new(NormalLocation::with_summaries(
            opts.n.unwrap_or(normal::DEFAULT_N),
            summaries.unwrap_or("mean"),
        )?),
        "normal_variance" => {
            let set = summaries.unwrap_or("g1");
            let which = VarianceSummary::parse(set).ok_or_else(|| Error::UnknownSummarySet {
                model: name.into(),
                name: set.into(),
                valid: "g1, g2".into(),
            })?;
            Box::new(NormalVariance::new(opts.n.unwrap_or(normal::DEFAULT_N), which))
        }
        "erdos_renyi" => {
            check_single_set(name, summaries, graph::SUMMARY_SET)?;
            Box::new(ErdosRenyi::new(opts.n_nodes.unwrap_or(graph::DEFAULT_NODES))?)
        }
        "gk" => {
            check_single_set(name, summaries, gk::SUMMARY_SET)?;
            Box::new(GAndK::new(opts.n.unwrap_or(gk::DEFAULT_N)))
        }
        "arch1" => {
            check_single_set(name, summaries, arch::SUMMARY_SET)?;
            Box::new(Arch1::new(opts.n.unwrap_or(arch::DEFAULT_N)))
        }
        "stereology" => {
            check_single_set(name, summaries, stereology::SUMMARY_SET)?;
            Box::new(Stereology::new())
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown model {other:?}; valid models: {}",
                MODEL_NAMES.join(", ")
            )))
        }
    };
    Ok(model)
}

fn check_single_set(model: &str, requested: Option<&str>, only: &str) -> Result<()> {
    match requested {
        None => Ok(()),
        Some(s) if s == only || s == "default" => Ok(()),
        Some(s) => Err(Error::UnknownSummarySet {
            model: model.into(),
            name: s.into(),
            valid: format!("{only} (or default)"),
        }),
    }
}

/// Summary-set names accepted by `build_model` for each model.
pub fn summary_sets(model: &str) -> Vec<&'static str> {
    match model {
        "normal_location" => normal::LOCATION_SETS.iter().map(|(n, _)| *n).collect(),
        "normal_variance" => vec!["g1", "g2"],
        "erdos_renyi" => vec![graph::SUMMARY_SET],
        "gk" => vec![gk::SUMMARY_SET],
        "arch1" => vec![arch::SUMMARY_SET],
        "stereology" => vec![stereology::SUMMARY_SET],
        _ => Vec::new(),
    }
}
