//! Reference methods: Gaussian synthetic likelihood and rejection ABC with
//! linear regression adjustment.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::el::SummaryVector;
use crate::entropy::{covariance_logdet, sample_covariance};
use crate::error::{Error, Result};
use crate::models::summaries::quantile_in_place;
use crate::models::{GenerativeModel, Prior};
use crate::posterior::EvaluatorConfig;
use crate::rng::{label, Stream};
use crate::value::LogValue;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthLikValue {
    /// log N(s_obs; μ̂, Σ̂); log-zero when Σ̂ is singular.
    pub log_density: LogValue,
    pub mean: Vec<f64>,
    pub cov_logdet: LogValue,
}

/// Gaussian log density of `obs` under the sample mean and unbiased sample
/// covariance of `sims`.
pub fn synthetic_loglik_from_sims(sims: &[SummaryVector], obs: &SummaryVector) -> Result<SynthLikValue> {
    let r = obs.len();
    if sims.len() < r + 2 {
        return Err(Error::TooFewPoints {
            needed: r + 2,
            got: sims.len(),
        });
    }
    if let Some(bad) = sims.iter().find(|s| s.len() != r) {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: bad.len(),
        });
    }
    let (mean, cov) = sample_covariance(sims)?;
    let (logdet, chol) = match covariance_logdet(&cov) {
        Ok(v) => v,
        Err(Error::SingularCovariance) => {
            return Ok(SynthLikValue {
                log_density: LogValue::LogZero,
                mean,
                cov_logdet: LogValue::LogZero,
            })
        }
        Err(e) => return Err(e),
    };
    let diff = DVector::from_iterator(r, obs.as_slice().iter().zip(&mean).map(|(o, m)| o - m));
    let sol = chol.solve(&diff);
    let quad = diff.dot(&sol);
    let log_density = -0.5 * (r as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);
    Ok(SynthLikValue {
        log_density: LogValue::from_f64(log_density),
        mean,
        cov_logdet: LogValue::Finite(logdet),
    })
}

/// Synthetic log likelihood at `theta` from `cfg.m()` fresh replicates. The
/// replicates are drawn exactly as for the abcEL evaluation with the same
/// stream.
pub fn synthetic_loglik(theta: &[f64], cfg: &EvaluatorConfig, rng: &Stream) -> Result<SynthLikValue> {
    let sims = cfg.simulate_batch(theta, rng)?;
    synthetic_loglik_from_sims(&sims, cfg.obs_summary())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbcConfig {
    pub n_sims: usize,
    pub keep_fraction: f64,
    pub adjust: bool,
    /// Sampling prior; `None` uses the model's prior.
    pub prior: Option<Prior>,
}

impl AbcConfig {
    pub fn new(n_sims: usize, keep_fraction: f64, adjust: bool) -> Self {
        Self {
            n_sims,
            keep_fraction,
            adjust,
            prior: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbcSample {
    /// Accepted (and possibly adjusted) parameter draws, closest first.
    pub theta_draws: Vec<Vec<f64>>,
    /// Scaled distance of each accepted draw.
    pub distances: Vec<f64>,
    pub adjusted: bool,
    /// Largest accepted distance.
    pub tolerance: f64,
    /// Per-coordinate scale used to standardise the summaries.
    pub scales: Vec<f64>,
    /// Adjusted values moved back onto the prior support.
    pub n_clamped: usize,
}

/// Median absolute deviation of each column, falling back to the standard
/// deviation and then to 1 for columns without spread.
fn mad_scales(sims: &[Vec<f64>]) -> Vec<f64> {
    let r = sims[0].len();
    (0..r)
        .map(|j| {
            let mut col: Vec<f64> = sims.iter().map(|s| s[j]).collect();
            let med = quantile_in_place(&mut col, 0.5);
            let mut dev: Vec<f64> = col.iter().map(|v| (v - med).abs()).collect();
            let mad = quantile_in_place(&mut dev, 0.5);
            if mad > 0.0 && mad.is_finite() {
                return mad;
            }
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                warn!("summary {j} has zero MAD; scaling by its standard deviation");
                sd
            } else {
                warn!("summary {j} is constant across prior draws; left unscaled");
                1.0
            }
        })
        .collect()
}

/// Rejection ABC: draw θ from the prior, simulate one dataset each, keep the
/// ⌈keep_fraction·n_sims⌉ draws whose standardised summaries are closest to
/// `obs`, and optionally apply a linear regression adjustment.
pub fn rejection_abc(
    model: &dyn GenerativeModel,
    obs: &SummaryVector,
    cfg: &AbcConfig,
    rng: &Stream,
) -> Result<AbcSample> {
    if !(cfg.keep_fraction > 0.0 && cfg.keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep fraction must lie in (0, 1], got {}",
            cfg.keep_fraction
        )));
    }
    if cfg.n_sims == 0 {
        return Err(Error::InvalidArgument("need at least one simulation".into()));
    }
    if obs.len() != model.summary_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.summary_dim(),
            got: obs.len(),
        });
    }
    let prior = cfg.prior.as_ref().unwrap_or(model.prior());
    if prior.dim() != model.dim_theta() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_theta(),
            got: prior.dim(),
        });
    }
    let base = rng.derive(label::SIMULATION);
    let mut thetas = Vec::with_capacity(cfg.n_sims);
    let mut sims = Vec::with_capacity(cfg.n_sims);
    for i in 0..cfg.n_sims {
        let mut s = base.derive(i as u64);
        let theta = prior.sample(&mut s);
        sims.push(model.simulate_summary(&theta, &mut s)?.into_vec());
        thetas.push(theta);
    }
    let scales = mad_scales(&sims);
    let dist: Vec<f64> = sims
        .iter()
        .map(|s| {
            s.iter()
                .zip(obs.as_slice())
                .zip(&scales)
                .map(|((a, b), c)| ((a - b) / c).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let keep = ((cfg.keep_fraction * cfg.n_sims as f64).ceil() as usize).clamp(1, cfg.n_sims);
    let mut order: Vec<usize> = (0..cfg.n_sims).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order.truncate(keep);

    let mut theta_draws: Vec<Vec<f64>> = order.iter().map(|&i| thetas[i].clone()).collect();
    let distances: Vec<f64> = order.iter().map(|&i| dist[i]).collect();
    let mut n_clamped = 0;
    if cfg.adjust {
        let accepted: Vec<&[f64]> = order.iter().map(|&i| sims[i].as_slice()).collect();
        if let Some(fitted) = regression_shift(&accepted, obs.as_slice(), &theta_draws) {
            let bounds = prior.bounds();
            for (draw, shift) in theta_draws.iter_mut().zip(fitted) {
                for ((v, d), &(lo, hi)) in draw.iter_mut().zip(shift).zip(&bounds) {
                    let adj = *v - d;
                    let clamped = adj.clamp(lo, hi);
                    if clamped != adj {
                        n_clamped += 1;
                    }
                    *v = clamped;
                }
            }
            if n_clamped > 0 {
                warn!("{n_clamped} adjusted values fell outside the prior support and were clamped");
            }
        }
    }
    Ok(AbcSample {
        theta_draws,
        distances: distances.clone(),
        adjusted: cfg.adjust,
        tolerance: *distances.last().expect("at least one draw kept"),
        scales,
        n_clamped,
    })
}

/// For each accepted draw, the fitted (s − s_obs)ᵀβ of an OLS fit of θ on
/// s − s_obs with intercept, per θ coordinate. Summary columns that are
/// constant over the accepted set are dropped.
fn regression_shift(accepted: &[&[f64]], obs: &[f64], thetas: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = accepted.len();
    let r = obs.len();
    let cols: Vec<usize> = (0..r)
        .filter(|&j| {
            let first = accepted[0][j];
            let varies = accepted.iter().any(|s| s[j] != first);
            if !varies {
                warn!("summary {j} is constant over the accepted draws; dropped from the regression");
            }
            varies
        })
        .collect();
    if cols.is_empty() || n <= cols.len() + 1 {
        warn!("regression adjustment skipped: {n} accepted draws for {} predictors", cols.len());
        return None;
    }
    let p = cols.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, c| if c == 0 { 1.0 } else { accepted[i][cols[c - 1]] - obs[cols[c - 1]] });
    let svd = x.clone().svd(true, true);
    let d = thetas[0].len();
    let mut out = vec![vec![0.0; d]; n];
    for k in 0..d {
        let y = DVector::from_iterator(n, thetas.iter().map(|t| t[k]));
        let beta = match svd.solve(&y, 1e-12 * svd.singular_values.max()) {
            Ok(b) => b,
            Err(e) => {
                warn!("regression adjustment failed for parameter {k}: {e}");
                continue;
            }
        };
        for (i, row) in out.iter_mut().enumerate() {
            row[k] = (1..p).map(|c| x[(i, c)] * beta[c]).sum();
        }
    }
    Some(out)
}
