//! Experiment descriptions: what to run, with which model and budgets.
//!
//! An [`ExperimentSpec`] holds only what the user asked for. [`ExperimentSpec::resolve`]
//! fills in the per-model defaults and validates everything up front, producing
//! the [`Resolved`] form that the runners consume and that is written next to
//! every output.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, ensure, Context};
use elabc_core::entropy::EntropyMode;
use elabc_core::mcmc::{Init, McmcConfig, PilotConfig, Transform};
use elabc_core::models::{build_model, summary_sets, GAndK, GenerativeModel, ModelOptions, Prior, MODEL_NAMES};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Profile,
    Sample,
    Coverage,
    Compare,
}

impl FromStr for Kind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "profile" => Kind::Profile,
            "sample" => Kind::Sample,
            "coverage" => Kind::Coverage,
            "compare" => Kind::Compare,
            other => bail!("unknown experiment kind {other:?}; expected profile, sample, coverage or compare"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Abcel,
    Synthetic,
    RejectionAbc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Abcel => "abcel",
            Method::Synthetic => "synthetic",
            Method::RejectionAbc => "rejection_abc",
        }
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "abcel" => Method::Abcel,
            "synthetic" => Method::Synthetic,
            "rejection_abc" | "abc" => Method::RejectionAbc,
            other => bail!("unknown method {other:?}; expected abcel, synthetic or rejection_abc"),
        })
    }
}

/// Profile grid along one coordinate. The remaining coordinates are held at
/// the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridSpec {
    /// `points` equally spaced values from `lo` to `hi` inclusive.
    Range { lo: f64, hi: f64, points: usize },
    /// Equally spaced over the region where the normalised analytic posterior
    /// density exceeds `level` (0.05 by default).
    Auto {
        points: usize,
        #[serde(default)]
        level: Option<f64>,
    },
}

impl FromStr for GridSpec {
    type Err = anyhow::Error;

    /// `lo:hi:points` or `auto:points`.
    fn from_str(s: &str) -> anyhow::Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["auto", n] => Ok(GridSpec::Auto {
                points: n.parse().with_context(|| format!("bad grid point count {n:?}"))?,
                level: None,
            }),
            [lo, hi, n] => Ok(GridSpec::Range {
                lo: lo.parse().with_context(|| format!("bad grid bound {lo:?}"))?,
                hi: hi.parse().with_context(|| format!("bad grid bound {hi:?}"))?,
                points: n.parse().with_context(|| format!("bad grid point count {n:?}"))?,
            }),
            _ => bail!("grid must be lo:hi:points or auto:points, got {s:?}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSpec {
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub proposal_sd: Option<Vec<f64>>,
    pub transforms: Option<Vec<Transform>>,
    /// Start at the truth (the default) instead of drawing from the prior
    /// until the target is finite.
    pub init_at_truth: Option<bool>,
    pub pilot: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSpec {
    pub n_sims: Option<usize>,
    pub keep_fraction: Option<f64>,
    pub adjust: Option<bool>,
    /// Use the model's narrower ABC prior where one exists (g-and-k).
    pub restricted_prior: Option<bool>,
}

/// A user-level experiment description. Unset fields take per-model defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub model: String,
    #[serde(default)]
    pub summaries: Option<String>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub entropy: Option<EntropyMode>,
    #[serde(default)]
    pub k: Option<usize>,
    /// Observations per dataset.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_nodes: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicates: Option<usize>,
    /// Evaluations per grid point (profile).
    #[serde(default)]
    pub repeats: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Coordinate varied by the profile grid.
    #[serde(default)]
    pub grid_param: Option<usize>,
    #[serde(default)]
    pub mcmc: McmcSpec,
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    #[serde(default)]
    pub abc: AbcSpec,
    /// Paper-scale MCMC budgets instead of the desk-scale ones.
    #[serde(default)]
    pub full: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(kind: Kind, model: &str) -> Self {
        Self {
            kind,
            model: model.into(),
            summaries: None,
            m: None,
            entropy: None,
            k: None,
            n: None,
            n_nodes: None,
            seed: 0,
            replicates: None,
            repeats: None,
            grid: None,
            grid_param: None,
            mcmc: McmcSpec::default(),
            methods: None,
            abc: AbcSpec::default(),
            full: false,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).context("invalid experiment spec")
    }

    /// Fills in defaults and validates. Errors here are usage errors.
    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        if !MODEL_NAMES.contains(&self.model.as_str()) {
            bail!("unknown model {:?}; valid models: {}", self.model, MODEL_NAMES.join(", "));
        }
        let defaults = ModelDefaults::for_model(&self.model, self.full);
        let opts = ModelOptions {
            n: self.n,
            n_nodes: self.n_nodes,
        };
        let model = build_model(&self.model, self.summaries.as_deref(), &opts).map_err(|e| {
            anyhow::anyhow!("{e}; summary sets for {}: {}", self.model, summary_sets(&self.model).join(", "))
        })?;
        let dim = model.dim_theta();

        let m = self.m.unwrap_or(defaults.m);
        let entropy = self.entropy.unwrap_or_else(|| model.default_entropy());
        let replicates = self.replicates.unwrap_or(match self.kind {
            Kind::Coverage => 100,
            _ => 1,
        });
        ensure!(replicates >= 1, "replicates must be at least 1");
        let repeats = self.repeats.unwrap_or(100);
        ensure!(repeats >= 1, "repeats must be at least 1");

        let proposal_sd = self.mcmc.proposal_sd.clone().unwrap_or_else(|| defaults.proposal_sd.clone());
        ensure!(
            proposal_sd.len() == dim,
            "proposal_sd needs {dim} entries for {}, got {}",
            self.model,
            proposal_sd.len()
        );
        let transforms = self.mcmc.transforms.clone().unwrap_or_else(|| defaults.transforms.clone());
        ensure!(
            transforms.is_empty() || transforms.len() == dim,
            "transforms needs {dim} entries for {}, got {}",
            self.model,
            transforms.len()
        );
        let iterations = self.mcmc.iterations.unwrap_or(defaults.iterations);
        let burn_in = self.mcmc.burn_in.unwrap_or(defaults.burn_in);
        ensure!(iterations >= 1, "iterations must be at least 1");
        let init_at_truth = self.mcmc.init_at_truth.unwrap_or(true);

        let truth = model.theta_truth().map(<[f64]>::to_vec);
        if matches!(self.kind, Kind::Coverage | Kind::Compare | Kind::Sample) {
            ensure!(truth.is_some(), "model {} has no reference parameter", self.model);
        }

        let methods = self.methods.clone().unwrap_or_else(|| match self.kind {
            Kind::Compare => vec![Method::Abcel, Method::Synthetic, Method::RejectionAbc],
            _ => vec![Method::Abcel],
        });
        ensure!(!methods.is_empty(), "at least one method is required");
        if self.kind != Kind::Compare {
            ensure!(
                methods == [Method::Abcel] || self.kind == Kind::Sample && methods.len() == 1 && methods[0] != Method::RejectionAbc,
                "{:?} runs support the abcel method only (sample also accepts synthetic)",
                self.kind
            );
        }

        let grid_param = self.grid_param.unwrap_or(0);
        let grid = match self.kind {
            Kind::Profile => {
                ensure!(grid_param < dim, "grid_param {grid_param} out of range for {dim} parameters");
                let g = self.grid.clone().unwrap_or(GridSpec::Auto {
                    points: 61,
                    level: None,
                });
                match &g {
                    GridSpec::Range { lo, hi, points } => {
                        ensure!(*points >= 2, "grid needs at least 2 points");
                        ensure!(lo.is_finite() && hi.is_finite() && lo < hi, "grid bounds must satisfy lo < hi");
                    }
                    GridSpec::Auto { points, level } => {
                        ensure!(*points >= 2, "grid needs at least 2 points");
                        ensure!(dim == 1, "automatic grids need a one-parameter model; pass --grid lo:hi:points");
                        ensure!(
                            level.is_none_or(|l| l > 0.0 && l.is_finite()),
                            "grid level must be positive"
                        );
                    }
                }
                if dim > 1 {
                    ensure!(truth.is_some(), "profiles of multi-parameter models hold the others at the truth");
                }
                Some(g)
            }
            _ => None,
        };

        let abc_prior = if self.abc.restricted_prior.unwrap_or(self.model == "gk") && self.model == "gk" {
            Some(GAndK::restricted_prior())
        } else {
            None
        };
        let n_sims = self.abc.n_sims.unwrap_or(100_000);
        let keep_fraction = self.abc.keep_fraction.unwrap_or(0.01);
        ensure!(n_sims >= 1, "abc n_sims must be positive");
        ensure!(keep_fraction > 0.0 && keep_fraction <= 1.0, "abc keep_fraction must lie in (0, 1]");

        Ok(Resolved {
            kind: self.kind,
            model: model.name().to_string(),
            summaries: model.summary_set().to_string(),
            param_names: model.param_names(),
            n: self.n,
            n_nodes: self.n_nodes,
            m,
            entropy,
            k: self.k,
            seed: self.seed,
            replicates,
            repeats,
            grid,
            grid_param,
            truth,
            iterations,
            burn_in,
            proposal_sd,
            transforms,
            init_at_truth,
            pilot: self.mcmc.pilot.unwrap_or(true).then(PilotConfig::default),
            methods,
            abc_n_sims: n_sims,
            abc_keep_fraction: keep_fraction,
            abc_adjust: self.abc.adjust.unwrap_or(true),
            abc_prior,
            out: self.out.clone(),
            model_handle: Arc::from(model),
        })
    }
}

/// Per-model defaults: replicate count m, proposal scales on the
/// transformed scale, and MCMC budgets.
struct ModelDefaults {
    m: usize,
    proposal_sd: Vec<f64>,
    transforms: Vec<Transform>,
    iterations: usize,
    burn_in: usize,
}

impl ModelDefaults {
    fn for_model(name: &str, full: bool) -> Self {
        let (m, proposal_sd, transforms, full_iter) = match name {
            "normal_location" => (25, vec![0.15], vec![], 50_000),
            "normal_variance" => (25, vec![0.8], vec![], 50_000),
            "erdos_renyi" => (25, vec![0.08], vec![Transform::Logit], 50_000),
            "gk" => (40, vec![0.05, 0.05, 0.15, 0.05], vec![], 100_000),
            "arch1" => (50, vec![0.3, 0.08], vec![], 50_000),
            _ => (25, vec![10.0, 0.3, 0.05], vec![], 50_000),
        };
        let (iterations, burn_in) = if full { (full_iter, full_iter) } else { (10_000, 10_000) };
        Self {
            m,
            proposal_sd,
            transforms,
            iterations,
            burn_in,
        }
    }
}

/// A validated experiment with every default filled in.
#[derive(Clone, Serialize)]
pub struct Resolved {
    pub kind: Kind,
    pub model: String,
    pub summaries: String,
    pub param_names: Vec<String>,
    pub n: Option<usize>,
    pub n_nodes: Option<usize>,
    pub m: usize,
    pub entropy: EntropyMode,
    /// Neighbour order for the KL entropy; `None` uses the default for m.
    pub k: Option<usize>,
    pub seed: u64,
    pub replicates: usize,
    pub repeats: usize,
    pub grid: Option<GridSpec>,
    pub grid_param: usize,
    pub truth: Option<Vec<f64>>,
    pub iterations: usize,
    pub burn_in: usize,
    pub proposal_sd: Vec<f64>,
    pub transforms: Vec<Transform>,
    pub init_at_truth: bool,
    pub pilot: Option<PilotConfig>,
    pub methods: Vec<Method>,
    pub abc_n_sims: usize,
    pub abc_keep_fraction: f64,
    pub abc_adjust: bool,
    pub abc_prior: Option<Prior>,
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub model_handle: Arc<dyn GenerativeModel>,
}

impl std::fmt::Debug for Resolved {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&serde_json::to_string(self).map_err(|_| std::fmt::Error)?)
    }
}

impl Resolved {
    pub fn model(&self) -> &Arc<dyn GenerativeModel> {
        &self.model_handle
    }

    /// MCMC settings for one chain with the given seed.
    pub fn mcmc_config(&self, seed: u64, proposal_sd: Vec<f64>) -> McmcConfig {
        let mut cfg = McmcConfig::new(self.iterations, self.burn_in, proposal_sd, seed);
        cfg.transforms = self.transforms.clone();
        if self.init_at_truth {
            if let Some(t) = &self.truth {
                cfg.init = Init::Fixed(t.clone());
            }
        }
        cfg
    }
}
