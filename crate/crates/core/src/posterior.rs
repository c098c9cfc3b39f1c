//! The abcEL log posterior: log prior + mean log EL weight + entropy estimate.

use std::sync::Arc;

use serde::Serialize;

use crate::el::{compute_constraints, solve_el, SummaryVector, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::entropy::{default_k, gaussian_entropy, kl_entropy, solve_nu, EntropyMode, NuWeights};
use crate::error::{Error, Result};
use crate::models::summaries::quantile_in_place;
use crate::models::GenerativeModel;
use crate::rng::{label, Stream};
use crate::value::LogValue;

/// Everything needed to evaluate the log posterior at a parameter value.
#[derive(Clone)]
pub struct EvaluatorConfig {
    model: Arc<dyn GenerativeModel>,
    obs_summary: SummaryVector,
    m: usize,
    entropy_mode: EntropyMode,
    k: usize,
    nu: Option<NuWeights>,
    el_tol: f64,
    el_max_iter: usize,
}

impl std::fmt::Debug for EvaluatorConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvaluatorConfig")
            .field("model", &self.model.name())
            .field("obs_summary", &self.obs_summary)
            .field("m", &self.m)
            .field("entropy_mode", &self.entropy_mode)
            .field("k", &self.k)
            .field("el_tol", &self.el_tol)
            .finish()
    }
}

impl EvaluatorConfig {
    /// Uses the model's default entropy term and `k = ⌈√m⌉`.
    pub fn new(model: Arc<dyn GenerativeModel>, obs_summary: SummaryVector, m: usize) -> Result<Self> {
        let r = model.summary_dim();
        if obs_summary.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: obs_summary.len(),
            });
        }
        let needed = (r + 2).max(3);
        if m < needed {
            return Err(Error::TooFewPoints { needed, got: m });
        }
        let mode = model.default_entropy();
        let mut cfg = Self {
            model,
            obs_summary,
            m,
            entropy_mode: EntropyMode::None,
            k: default_k(m),
            nu: None,
            el_tol: DEFAULT_TOL,
            el_max_iter: DEFAULT_MAX_ITER,
        };
        cfg.set_entropy(mode, None)?;
        Ok(cfg)
    }

    pub fn with_entropy(mut self, mode: EntropyMode, k: Option<usize>) -> Result<Self> {
        self.set_entropy(mode, k)?;
        Ok(self)
    }

    pub fn with_el_tol(mut self, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("EL tolerance must be positive, got {tol}")));
        }
        self.el_tol = tol;
        Ok(self)
    }

    fn set_entropy(&mut self, mode: EntropyMode, k: Option<usize>) -> Result<()> {
        let k = k.unwrap_or_else(|| default_k(self.m));
        if k == 0 || k >= self.m {
            return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..{}", self.m)));
        }
        self.nu = match mode {
            EntropyMode::WeightedKl => Some(solve_nu(k, self.model.summary_dim())?),
            _ => None,
        };
        self.entropy_mode = mode;
        self.k = k;
        Ok(())
    }

    pub fn model(&self) -> &Arc<dyn GenerativeModel> {
        &self.model
    }

    pub fn obs_summary(&self) -> &SummaryVector {
        &self.obs_summary
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entropy_mode(&self) -> EntropyMode {
        self.entropy_mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn el_tol(&self) -> f64 {
        self.el_tol
    }

    /// Simulated summaries for replicate `0..m` at `theta`. Replicate `i`
    /// draws from its own child stream, so the batch does not depend on the
    /// order in which replicates are generated.
    pub fn simulate_batch(&self, theta: &[f64], rng: &Stream) -> Result<Vec<SummaryVector>> {
        let base = rng.derive(label::SIMULATION);
        (0..self.m)
            .map(|i| self.model.simulate_summary(theta, &mut base.derive(i as u64)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    OutsidePrior,
    /// The observed summary lies outside the hull of the simulated ones.
    Infeasible,
    /// EL was feasible but the entropy estimate was undefined (coincident
    /// summaries or a singular covariance).
    DegenerateEntropy,
}

/// Decomposed log posterior at one θ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogPosteriorValue {
    pub log_prior: LogValue,
    pub mean_log_w: LogValue,
    pub entropy: f64,
    pub total: LogValue,
    pub feasible: bool,
    pub status: EvalStatus,
    /// Datasets simulated for this evaluation.
    pub simulations: usize,
}

impl LogPosteriorValue {
    fn sentinel(log_prior: LogValue, mean_log_w: LogValue, status: EvalStatus, simulations: usize) -> Self {
        Self {
            log_prior,
            mean_log_w,
            entropy: 0.0,
            total: LogValue::LogZero,
            feasible: false,
            status,
            simulations,
        }
    }
}

/// abcEL log posterior at `theta`, using fresh replicates drawn from `rng`.
pub fn eval_log_posterior(theta: &[f64], cfg: &EvaluatorConfig, rng: &Stream) -> Result<LogPosteriorValue> {
    let model = &cfg.model;
    if theta.len() != model.dim_theta() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_theta(),
            got: theta.len(),
        });
    }
    let log_prior = model.prior().log_density(theta);
    if !log_prior.is_finite() {
        return Ok(LogPosteriorValue::sentinel(log_prior, LogValue::LogZero, EvalStatus::OutsidePrior, 0));
    }
    let sims = cfg.simulate_batch(theta, rng)?;
    let h = compute_constraints(&sims, &cfg.obs_summary)?;
    let sol = solve_el(&h, cfg.el_tol, cfg.el_max_iter)?;
    let Some(mlw) = sol.mean_log_weight.finite() else {
        return Ok(LogPosteriorValue::sentinel(log_prior, LogValue::LogZero, EvalStatus::Infeasible, cfg.m));
    };
    let entropy = match cfg.entropy_mode {
        EntropyMode::None => Ok(0.0),
        EntropyMode::Gaussian => gaussian_entropy(&sims).map(|e| e.value),
        EntropyMode::WeightedKl => {
            let nu = cfg.nu.as_ref().expect("weights prepared with the mode");
            kl_entropy(&sims, cfg.k, nu).map(|e| e.value)
        }
    };
    let entropy = match entropy {
        Ok(v) => v,
        Err(Error::DuplicatePoints(..) | Error::SingularCovariance) => {
            return Ok(LogPosteriorValue::sentinel(
                log_prior,
                LogValue::Finite(mlw),
                EvalStatus::DegenerateEntropy,
                cfg.m,
            ));
        }
        Err(e) => return Err(e),
    };
    let total = log_prior + LogValue::Finite(mlw) + LogValue::from_f64(entropy);
    Ok(LogPosteriorValue {
        log_prior,
        mean_log_w: LogValue::Finite(mlw),
        entropy,
        feasible: total.is_finite(),
        status: if total.is_finite() {
            EvalStatus::Ok
        } else {
            EvalStatus::DegenerateEntropy
        },
        total,
        simulations: cfg.m,
    })
}

/// One grid point of a profile: the spread of `total` over repeats.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileRow {
    pub theta: Vec<f64>,
    /// Mean over all repeats; log-zero if any repeat was.
    pub mean: LogValue,
    /// Mean over the feasible repeats only.
    pub mean_feasible: LogValue,
    pub lower: LogValue,
    pub upper: LogValue,
    pub n_feasible: usize,
    pub repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileTable {
    pub rows: Vec<ProfileRow>,
    /// Constant subtracted from every row so that the largest mean is 0
    /// (zero when alignment was not requested).
    pub shift: f64,
}

impl ProfileTable {
    /// Shifts all curves so that the maximum of the feasible-mean curve is 0.
    pub fn align_max(mut self) -> Self {
        let max = self
            .rows
            .iter()
            .filter_map(|r| r.mean_feasible.finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if max.is_finite() {
            let shift = |v: LogValue| v + LogValue::Finite(-max);
            for row in &mut self.rows {
                row.mean = shift(row.mean);
                row.mean_feasible = shift(row.mean_feasible);
                row.lower = shift(row.lower);
                row.upper = shift(row.upper);
            }
            self.shift += max;
        }
        self
    }
}

/// Repeated evaluation over a grid. Grid point `g`, repeat `j` uses the
/// stream `rng / GRID / g / j`; the mean is over all repeats, and is log-zero
/// if any repeat was.
pub fn grid_profile(cfg: &EvaluatorConfig, grid: &[Vec<f64>], repeats: usize, rng: &Stream) -> Result<ProfileTable> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let rows = grid
        .iter()
        .enumerate()
        .map(|(g, theta)| {
            let totals = (0..repeats)
                .map(|j| {
                    let s = rng.derive_path(&[label::GRID, g as u64, j as u64]);
                    eval_log_posterior(theta, cfg, &s).map(|v| v.total.to_f64())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(profile_row(theta.clone(), totals))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfileTable { rows, shift: 0.0 })
}

/// Summarises repeated totals (−∞ for sentinels) at one grid point.
pub fn profile_row(theta: Vec<f64>, mut totals: Vec<f64>) -> ProfileRow {
    let repeats = totals.len();
    let n_feasible = totals.iter().filter(|v| v.is_finite()).count();
    let mean = LogValue::from_f64(totals.iter().sum::<f64>() / repeats as f64);
    let mean_feasible = if n_feasible == 0 {
        LogValue::LogZero
    } else {
        LogValue::from_f64(totals.iter().filter(|v| v.is_finite()).sum::<f64>() / n_feasible as f64)
    };
    let lower = LogValue::from_f64(quantile_in_place(&mut totals, 0.025));
    let upper = LogValue::from_f64(quantile_in_place(&mut totals, 0.975));
    ProfileRow {
        theta,
        mean,
        mean_feasible,
        lower,
        upper,
        n_feasible,
        repeats,
    }
}
