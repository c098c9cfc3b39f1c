//! Random-walk Metropolis with pseudo-marginal log-posterior estimates.

use std::io::Write;

use log::{debug, warn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::synthetic_loglik;
use crate::error::{Error, Result};
use crate::models::summaries::quantile_in_place;
use crate::models::Prior;
use crate::posterior::{eval_log_posterior, EvaluatorConfig};
use crate::rng::{label, Stream};
use crate::value::LogValue;

/// An unnormalised, possibly noisy, log posterior.
pub trait Target: Sync {
    fn prior(&self) -> &Prior;

    /// Log posterior estimate at `theta` from the randomness in `rng`.
    fn log_density(&self, theta: &[f64], rng: &Stream) -> Result<LogValue>;

    /// Model name and replicate count, for error messages.
    fn describe(&self) -> (String, usize);

    fn dim(&self) -> usize {
        self.prior().dim()
    }
}

/// The abcEL posterior.
pub struct AbcElTarget<'a>(pub &'a EvaluatorConfig);

impl Target for AbcElTarget<'_> {
    fn prior(&self) -> &Prior {
        self.0.model().prior()
    }

    fn log_density(&self, theta: &[f64], rng: &Stream) -> Result<LogValue> {
        eval_log_posterior(theta, self.0, rng).map(|v| v.total)
    }

    fn describe(&self) -> (String, usize) {
        (self.0.model().name().to_string(), self.0.m())
    }
}

/// Prior times the Gaussian synthetic likelihood.
pub struct SyntheticTarget<'a>(pub &'a EvaluatorConfig);

impl Target for SyntheticTarget<'_> {
    fn prior(&self) -> &Prior {
        self.0.model().prior()
    }

    fn log_density(&self, theta: &[f64], rng: &Stream) -> Result<LogValue> {
        let lp = self.prior().log_density(theta);
        if !lp.is_finite() {
            return Ok(LogValue::LogZero);
        }
        Ok(lp + synthetic_loglik(theta, self.0, rng)?.log_density)
    }

    fn describe(&self) -> (String, usize) {
        (self.0.model().name().to_string(), self.0.m())
    }
}

/// A closed-form log posterior (prior included by the caller's function).
pub struct FnTarget<F> {
    pub prior: Prior,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Target for FnTarget<F> {
    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn log_density(&self, theta: &[f64], _: &Stream) -> Result<LogValue> {
        if !self.prior.contains(theta) {
            return Ok(LogValue::LogZero);
        }
        Ok(LogValue::from_f64((self.f)(theta)))
    }

    fn describe(&self) -> (String, usize) {
        ("analytic".into(), 0)
    }
}

/// Coordinate-wise reparameterisation for the random walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// y = log x for positive parameters.
    Log,
    /// y = log(x / (1 − x)) for probabilities.
    Logit,
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit => (x / (1.0 - x)).ln(),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Log => y.exp(),
            Transform::Logit => 1.0 / (1.0 + (-y).exp()),
        }
    }

    /// log |dx/dy| at y.
    pub fn log_jacobian(self, y: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => y,
            // x(1 − x) = e^{−|y|} / (1 + e^{−|y|})²
            Transform::Logit => -y.abs() - 2.0 * (-y.abs()).exp().ln_1p(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Draw from the prior until the target is finite.
    PriorDraw,
    /// Start here; re-evaluated with fresh randomness until finite. After
    /// half the budget, attempts are jittered around the point with a radius
    /// growing to three proposal scales, so an atypical dataset that no
    /// simulation at this point can match still gets a start nearby.
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Recorded iterations after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    /// Random-walk standard deviations on the transformed scale.
    pub proposal_sd: Vec<f64>,
    pub seed: u64,
    pub init: Init,
    /// One per coordinate; empty means identity everywhere.
    #[serde(default)]
    pub transforms: Vec<Transform>,
    #[serde(default = "default_init_budget")]
    pub init_budget: usize,
}

fn default_init_budget() -> usize {
    1000
}

impl McmcConfig {
    pub fn new(iterations: usize, burn_in: usize, proposal_sd: Vec<f64>, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            proposal_sd,
            seed,
            init: Init::PriorDraw,
            transforms: Vec::new(),
            init_budget: default_init_budget(),
        }
    }

    fn transform(&self, i: usize) -> Transform {
        self.transforms.get(i).copied().unwrap_or(Transform::Identity)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be positive".into()));
        }
        if self.proposal_sd.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.proposal_sd.len(),
            });
        }
        if self.proposal_sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "proposal scales must be positive, got {:?}",
                self.proposal_sd
            )));
        }
        if !self.transforms.is_empty() && self.transforms.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.transforms.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chain {
    /// Post burn-in states on the original scale.
    pub draws: Vec<Vec<f64>>,
    /// Stored log posterior estimate of each recorded state.
    pub log_post_trace: Vec<f64>,
    /// Accepted fraction of the recorded proposals.
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    /// Proposals whose estimate was log-zero (outside the prior, infeasible EL).
    pub n_infeasible_proposals: usize,
    /// Proposals whose evaluation returned an error; treated as rejections.
    pub n_failed_evaluations: usize,
    pub initial_state: Vec<f64>,
}

impl Chain {
    /// CSV with columns `names...` and `log_post`, one row per recorded draw.
    pub fn write_csv<W: Write>(&self, mut w: W, names: &[String]) -> std::io::Result<()> {
        writeln!(w, "{},log_post", names.join(","))?;
        for (d, lp) in self.draws.iter().zip(&self.log_post_trace) {
            for v in d {
                write!(w, "{v},")?;
            }
            writeln!(w, "{lp}")?;
        }
        Ok(())
    }
}

struct State {
    y: Vec<f64>,
    x: Vec<f64>,
    /// log target on the transformed scale (includes the Jacobian).
    log_target: f64,
    log_post: f64,
}

fn to_x(cfg: &McmcConfig, y: &[f64]) -> Vec<f64> {
    y.iter().enumerate().map(|(i, &v)| cfg.transform(i).inverse(v)).collect()
}

fn log_jac(cfg: &McmcConfig, y: &[f64]) -> f64 {
    y.iter().enumerate().map(|(i, &v)| cfg.transform(i).log_jacobian(v)).sum()
}

fn initial_state(target: &dyn Target, cfg: &McmcConfig) -> Result<State> {
    let base = Stream::new(cfg.seed).derive(label::INIT);
    for attempt in 0..cfg.init_budget {
        let mut s = base.derive(attempt as u64);
        let x = match &cfg.init {
            Init::PriorDraw => target.prior().sample(&mut s),
            Init::Fixed(x) => x.clone(),
        };
        if x.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: x.len(),
            });
        }
        let mut y: Vec<f64> = x.iter().enumerate().map(|(i, &v)| cfg.transform(i).forward(v)).collect();
        let settled = cfg.init_budget / 2;
        if matches!(cfg.init, Init::Fixed(_)) && attempt >= settled {
            let radius = 3.0 * (attempt - settled + 1) as f64 / (cfg.init_budget - settled) as f64;
            for (v, sd) in y.iter_mut().zip(&cfg.proposal_sd) {
                let z: f64 = StandardNormal.sample(&mut s);
                *v += radius * sd * z;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x = to_x(cfg, &y);
        match target.log_density(&x, &s.derive(label::EVAL)) {
            Ok(LogValue::Finite(lp)) => {
                debug!("initialised after {} attempts at {x:?}", attempt + 1);
                return Ok(State {
                    log_target: lp + log_jac(cfg, &y),
                    log_post: lp,
                    y,
                    x,
                })
            }
            Ok(LogValue::LogZero) => {}
            Err(e) => warn!("initial evaluation failed: {e}"),
        }
    }
    let (model, m) = target.describe();
    Err(Error::Initialization {
        model,
        m,
        tries: cfg.init_budget,
    })
}

struct Counters {
    accepted: usize,
    infeasible: usize,
    failed: usize,
}

/// One Metropolis step from `state` using the stream for iteration `t` of
/// `phase`. The current estimate is never refreshed.
fn step(target: &dyn Target, cfg: &McmcConfig, sd: &[f64], state: &mut State, s: Stream, c: &mut Counters) {
    let mut s = s;
    let y_new: Vec<f64> = state
        .y
        .iter()
        .zip(sd)
        .map(|(&y, &sd)| {
            let z: f64 = StandardNormal.sample(&mut s);
            y + sd * z
        })
        .collect();
    let u = s.uniform_open();
    let x_new = to_x(cfg, &y_new);
    if x_new.iter().any(|v| !v.is_finite()) || !target.prior().contains(&x_new) {
        c.infeasible += 1;
        return;
    }
    let lp = match target.log_density(&x_new, &s.derive(label::EVAL)) {
        Ok(LogValue::Finite(v)) => v,
        Ok(LogValue::LogZero) => {
            c.infeasible += 1;
            return;
        }
        Err(e) => {
            warn!("evaluation failed at {x_new:?}: {e}");
            c.failed += 1;
            return;
        }
    };
    let log_target = lp + log_jac(cfg, &y_new);
    if u.ln() < log_target - state.log_target {
        *state = State {
            y: y_new,
            x: x_new,
            log_target,
            log_post: lp,
        };
        c.accepted += 1;
    }
}

/// Random-walk Metropolis on the transformed scale. Iteration `t` (burn-in
/// included) draws its proposal, acceptance uniform and evaluation stream
/// from `seed / PROPOSAL / t`.
pub fn run_chain(target: &dyn Target, cfg: &McmcConfig) -> Result<Chain> {
    cfg.validate(target.dim())?;
    let mut state = initial_state(target, cfg)?;
    let initial_state = state.x.clone();
    let base = Stream::new(cfg.seed).derive(label::PROPOSAL);
    let mut burn = Counters {
        accepted: 0,
        infeasible: 0,
        failed: 0,
    };
    for t in 0..cfg.burn_in {
        step(target, cfg, &cfg.proposal_sd, &mut state, base.derive(t as u64), &mut burn);
    }
    let mut rec = Counters {
        accepted: 0,
        infeasible: 0,
        failed: 0,
    };
    let mut draws = Vec::with_capacity(cfg.iterations);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for t in cfg.burn_in..cfg.burn_in + cfg.iterations {
        step(target, cfg, &cfg.proposal_sd, &mut state, base.derive(t as u64), &mut rec);
        draws.push(state.x.clone());
        trace.push(state.log_post);
    }
    Ok(Chain {
        draws,
        log_post_trace: trace,
        acceptance_rate: rec.accepted as f64 / cfg.iterations as f64,
        burn_in_acceptance_rate: if cfg.burn_in > 0 {
            burn.accepted as f64 / cfg.burn_in as f64
        } else {
            0.0
        },
        n_infeasible_proposals: burn.infeasible + rec.infeasible,
        n_failed_evaluations: burn.failed + rec.failed,
        initial_state,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub batches: usize,
    pub batch_len: usize,
    /// Acceptance band; scales shrink below it and grow above it.
    pub target_low: f64,
    pub target_high: f64,
    /// Tuned scales stay within this factor of the starting ones. Low
    /// acceptance in a pseudo-marginal chain is often stickiness from an
    /// overestimated likelihood rather than too large a step, and unbounded
    /// shrinking then freezes the chain.
    #[serde(default = "default_max_factor")]
    pub max_factor: f64,
    /// Reset the relative scales to the spread of the second half of the
    /// pilot draws, keeping their geometric mean. Helps when posterior
    /// scales differ a lot between coordinates.
    #[serde(default = "default_shape")]
    pub shape: bool,
}

fn default_shape() -> bool {
    true
}

fn default_max_factor() -> f64 {
    4.0
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            batches: 10,
            batch_len: 200,
            target_low: 0.15,
            target_high: 0.4,
            max_factor: default_max_factor(),
            shape: default_shape(),
        }
    }
}

/// Adjusts `cfg.proposal_sd` by acceptance feedback over short batches,
/// optionally reshapes it from the pilot draws, and returns the tuned scales. Uses its own streams, so the recorded run that
/// follows is unaffected apart from the scales.
pub fn tune_proposal(target: &dyn Target, cfg: &McmcConfig, pilot: &PilotConfig) -> Result<Vec<f64>> {
    cfg.validate(target.dim())?;
    let mut state = initial_state(target, cfg)?;
    let base = Stream::new(cfg.seed).derive(label::PILOT);
    let mut sd = cfg.proposal_sd.clone();
    let mut trace = Vec::new();
    for b in 0..pilot.batches {
        let mut c = Counters {
            accepted: 0,
            infeasible: 0,
            failed: 0,
        };
        for t in 0..pilot.batch_len {
            step(target, cfg, &sd, &mut state, base.derive_path(&[b as u64, t as u64]), &mut c);
            if 2 * b >= pilot.batches {
                trace.push(state.y.clone());
            }
        }
        let rate = c.accepted as f64 / pilot.batch_len.max(1) as f64;
        let factor = if rate < pilot.target_low {
            0.7
        } else if rate > pilot.target_high {
            1.4
        } else {
            1.0
        };
        debug!("pilot batch {b}: acceptance {rate:.3}, scale x{factor}");
        for (s, s0) in sd.iter_mut().zip(&cfg.proposal_sd) {
            *s = (*s * factor).clamp(s0 / pilot.max_factor, s0 * pilot.max_factor);
        }
    }
    if pilot.shape && sd.len() > 1 && trace.len() > 1 {
        let spread: Vec<f64> = (0..sd.len())
            .map(|i| {
                let n = trace.len() as f64;
                let mean = trace.iter().map(|y| y[i]).sum::<f64>() / n;
                (trace.iter().map(|y| (y[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            })
            .collect();
        if spread.iter().all(|v| *v > 0.0 && v.is_finite()) {
            let log_gm = |v: &[f64]| v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64;
            let g = (log_gm(&sd) - log_gm(&spread)).exp();
            for ((s, v), s0) in sd.iter_mut().zip(&spread).zip(&cfg.proposal_sd) {
                *s = (g * v).clamp(s0 / pilot.max_factor, s0 * pilot.max_factor);
            }
            debug!("pilot spread {spread:?}, shaped scales {sd:?}");
        } else {
            debug!("pilot chain did not move in every coordinate; keeping scales {sd:?}");
        }
    }
    Ok(sd)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<(f64, f64)>,
    /// Quantiles at the smallest and largest requested probabilities.
    pub interval: (f64, f64),
    pub ess: f64,
}

/// Per-coordinate posterior summaries of a chain.
pub fn summarize_chain(chain: &Chain, probs: &[f64]) -> Result<Vec<ParamSummary>> {
    let Some(first) = chain.draws.first() else {
        return Err(Error::InvalidArgument("empty chain".into()));
    };
    if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument(format!("probabilities must lie in [0, 1], got {probs:?}")));
    }
    let lo_p = probs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_p = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((0..first.len())
        .map(|j| {
            let col: Vec<f64> = chain.draws.iter().map(|d| d[j]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let mut buf = col.clone();
            let quantiles = probs.iter().map(|&p| (p, quantile_in_place(&mut buf, p))).collect();
            let interval = (quantile_in_place(&mut buf, lo_p), quantile_in_place(&mut buf, hi_p));
            ParamSummary {
                mean,
                sd: var.sqrt(),
                quantiles,
                interval,
                ess: effective_sample_size(&col),
            }
        })
        .collect())
}

/// Autocorrelation ESS with Geyer's initial positive sequence truncation.
/// A constant series has ESS 1.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return 1.0;
    }
    let rho = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0);
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = if k == 0 { 1.0 } else { rho(2 * k) } + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    // τ = −1 + 2 Σ Γ_k with Γ_0 including ρ_0 = 1
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}
