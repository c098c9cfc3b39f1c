//! The four experiment kinds.
//!
//! Stream layout, relative to `Stream::new(seed)`:
//!
//! - observed data for single-dataset runs (profile, sample): `OBSERVED`
//! - pilot tuning: `PILOT / OBSERVED` for its dataset, `PILOT / method` for the chain
//! - replicate `i`: `REPLICATE / i`, with `OBSERVED` below it for the data and
//!   `METHOD / method` for each inference method
//! - profile grid point `g`, repeat `j`: `GRID / g / j` (the evaluator's own layout)
//!
//! Chains are seeded with the key of their stream. Since every replicate's
//! streams depend only on its index, replicates can run in any order or in
//! parallel and still produce the same numbers.

use std::path::Path;

use anyhow::{bail, Context};
use elabc_core::baselines::{rejection_abc, AbcConfig};
use elabc_core::mcmc::{run_chain, summarize_chain, tune_proposal, AbcElTarget, Chain, SyntheticTarget, Target};
use elabc_core::posterior::{eval_log_posterior, profile_row, EvaluatorConfig, ProfileRow};
use elabc_core::rng::{label, label_of};
use elabc_core::{LogValue, Stream, SummaryVector};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{sibling, write_atomic, write_json, Cell, Csv};
use crate::spec::{GridSpec, Kind, Method, Resolved};

/// Central interval used by coverage and comparison runs.
pub const INTERVAL_PROBS: [f64; 2] = [0.025, 0.975];

const DEFAULT_GRID_LEVEL: f64 = 0.05;

#[derive(Serialize)]
#[serde(untagged)]
pub enum Report {
    Profile(ProfileReport),
    Sample(SampleReport),
    Coverage(CoverageReport),
    Compare(CompareReport),
}

impl Report {
    /// One line for the terminal.
    pub fn summary_line(&self) -> String {
        match self {
            Report::Profile(r) => {
                let covered = r.analytic_covered();
                match covered {
                    Some((k, n)) => format!(
                        "profile: {} grid points, analytic curve inside the band at {k}/{n}",
                        r.rows.len()
                    ),
                    None => format!("profile: {} grid points", r.rows.len()),
                }
            }
            Report::Sample(r) => format!(
                "sample: {} draws, acceptance {:.3}, means {:?}",
                r.n_draws,
                r.acceptance_rate,
                r.params.iter().map(|p| p.mean).collect::<Vec<_>>()
            ),
            Report::Coverage(r) => r
                .rows
                .iter()
                .map(|row| {
                    format!(
                        "coverage {}[{}]: {:.3} (se {:.3}), mean length {:.4}, {} replicates, {} failed",
                        row.summaries, row.parameter, row.coverage, row.coverage_se, row.mean_length, row.replicates, row.failed
                    )
                })
                .collect::<Vec<_>>()
                .join("; "),
            Report::Compare(r) => {
                let failed = r.entries.iter().filter(|e| e.error.is_some()).count();
                format!(
                    "compare: {} replicate(s) x {} method(s), {failed} failed",
                    r.replicates,
                    r.methods.len()
                )
            }
        }
    }
}

/// Runs the experiment and writes its outputs if `spec.out` is set.
pub fn run(spec: &Resolved) -> anyhow::Result<Report> {
    let report = match spec.kind {
        Kind::Profile => Report::Profile(run_profile(spec)?),
        Kind::Sample => Report::Sample(run_sample(spec)?),
        Kind::Coverage => Report::Coverage(run_coverage(spec)?),
        Kind::Compare => Report::Compare(run_compare(spec)?),
    };
    if let Some(out) = &spec.out {
        write_outputs(spec, &report, out)?;
    }
    Ok(report)
}

fn evaluator(spec: &Resolved, obs: SummaryVector) -> anyhow::Result<EvaluatorConfig> {
    Ok(EvaluatorConfig::new(spec.model().clone(), obs, spec.m)?.with_entropy(spec.entropy, spec.k)?)
}

fn truth(spec: &Resolved) -> anyhow::Result<&[f64]> {
    spec.truth.as_deref().context("model has no reference parameter")
}

fn observe(spec: &Resolved, stream: &Stream) -> anyhow::Result<SummaryVector> {
    Ok(spec.model().simulate_summary(truth(spec)?, &mut stream.clone())?)
}

fn method_stream(parent: &Stream, method: Method) -> Stream {
    parent.derive_path(&[label::METHOD, label_of(method.name())])
}

// ---------------------------------------------------------------- profile

#[derive(Clone, Debug, Serialize)]
pub struct ProfileOut {
    #[serde(flatten)]
    pub row: ProfileRow,
    /// Analytic log posterior, shifted so that its maximum over the grid
    /// equals the maximum of `mean_feasible`.
    pub analytic: Option<f64>,
    pub status: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileReport {
    pub observed: Vec<f64>,
    pub grid_param: usize,
    pub rows: Vec<ProfileOut>,
}

impl ProfileReport {
    /// Number of grid points whose analytic value lies inside [lower, upper],
    /// out of the points with an analytic value.
    pub fn analytic_covered(&self) -> Option<(usize, usize)> {
        let with: Vec<_> = self.rows.iter().filter_map(|r| r.analytic.map(|a| (a, &r.row))).collect();
        if with.is_empty() {
            return None;
        }
        let k = with
            .iter()
            .filter(|(a, r)| r.lower.to_f64() <= *a && *a <= r.upper.to_f64())
            .count();
        Some((k, with.len()))
    }

    /// max − min of the feasible-mean curve over the grid.
    pub fn mean_range(&self) -> f64 {
        let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.row.mean_feasible.finite()).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Values along the profiled coordinate.
pub fn grid_values(spec: &Resolved, obs: &SummaryVector) -> anyhow::Result<Vec<f64>> {
    let grid = spec.grid.as_ref().context("profile needs a grid")?;
    let (lo, hi, points) = match *grid {
        GridSpec::Range { lo, hi, points } => (lo, hi, points),
        GridSpec::Auto { points, level } => {
            let (lo, hi) = analytic_region(spec, obs, level.unwrap_or(DEFAULT_GRID_LEVEL))?;
            (lo, hi, points)
        }
    };
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

/// Smallest interval holding every point where the normalised analytic
/// posterior density exceeds `level`.
fn analytic_region(spec: &Resolved, obs: &SummaryVector, level: f64) -> anyhow::Result<(f64, f64)> {
    let model = spec.model();
    let (lo, hi) = model.prior().bounds()[0];
    if !(lo.is_finite() && hi.is_finite()) {
        bail!("automatic grids need a bounded prior; pass --grid lo:hi:points");
    }
    const FINE: usize = 20_000;
    let h = (hi - lo) / FINE as f64;
    let xs: Vec<f64> = (0..FINE).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let lp = xs
        .iter()
        .map(|&x| model.analytic_log_posterior(obs, &[x]))
        .collect::<Option<Vec<f64>>>()
        .with_context(|| format!("{} has no analytic posterior; pass --grid lo:hi:points", spec.model))?;
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        bail!("analytic posterior vanishes on the prior support");
    }
    let log_norm = max + lp.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + h.ln();
    let inside: Vec<f64> = xs
        .iter()
        .zip(&lp)
        .filter(|(_, v)| *v - log_norm > level.ln())
        .map(|(x, _)| *x)
        .collect();
    match (inside.first(), inside.last()) {
        (Some(&a), Some(&b)) if a < b => Ok((a, b)),
        _ => bail!("posterior density never exceeds {level}; pass --grid lo:hi:points"),
    }
}

pub fn run_profile(spec: &Resolved) -> anyhow::Result<ProfileReport> {
    let base = Stream::new(spec.seed);
    let obs = observe(spec, &base.derive(label::OBSERVED))?;
    let cfg = evaluator(spec, obs.clone())?;
    let values = grid_values(spec, &obs)?;
    let anchor: Vec<f64> = match &spec.truth {
        Some(t) => t.clone(),
        None => vec![0.0; spec.model().dim_theta()],
    };
    let thetas: Vec<Vec<f64>> = values
        .iter()
        .map(|&v| {
            let mut t = anchor.clone();
            t[spec.grid_param] = v;
            t
        })
        .collect();
    let eval_rng = base.derive(label::EVAL);
    // same stream layout as grid_profile, spread over the worker pool
    let rows = thetas
        .par_iter()
        .enumerate()
        .map(|(g, theta)| {
            let totals = (0..spec.repeats)
                .map(|j| {
                    let s = eval_rng.derive_path(&[label::GRID, g as u64, j as u64]);
                    eval_log_posterior(theta, &cfg, &s).map(|v| v.total.to_f64())
                })
                .collect::<elabc_core::Result<Vec<f64>>>()?;
            Ok(profile_row(theta.clone(), totals))
        })
        .collect::<anyhow::Result<Vec<ProfileRow>>>()?;

    let analytic: Vec<Option<f64>> = thetas
        .iter()
        .map(|t| spec.model().analytic_log_posterior(&obs, t).filter(|v| v.is_finite()))
        .collect();
    let mean_max = rows
        .iter()
        .filter_map(|r| r.mean_feasible.finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let analytic_max = analytic.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if mean_max.is_finite() && analytic_max.is_finite() {
        mean_max - analytic_max
    } else {
        0.0
    };
    let prior = spec.model().prior();
    let rows = rows
        .into_iter()
        .zip(analytic)
        .map(|(row, a)| {
            let status = if !prior.contains(&row.theta) {
                "outside_prior"
            } else if row.n_feasible == 0 {
                "infeasible"
            } else {
                "ok"
            };
            ProfileOut {
                analytic: a.map(|v| v + shift),
                status,
                row,
            }
        })
        .collect();
    Ok(ProfileReport {
        observed: obs.as_slice().to_vec(),
        grid_param: spec.grid_param,
        rows,
    })
}

// ---------------------------------------------------------------- sampling

#[derive(Clone, Debug, Serialize)]
pub struct ParamOut {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleReport {
    pub method: Method,
    pub observed: Vec<f64>,
    pub chain_seed: u64,
    pub proposal_sd: Vec<f64>,
    pub n_draws: usize,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub n_infeasible_proposals: usize,
    pub n_failed_evaluations: usize,
    pub params: Vec<ParamOut>,
    #[serde(skip)]
    pub chain: Chain,
}

fn target<'a>(method: Method, cfg: &'a EvaluatorConfig) -> Box<dyn Target + 'a> {
    match method {
        Method::Synthetic => Box::new(SyntheticTarget(cfg)),
        _ => Box::new(AbcElTarget(cfg)),
    }
}

/// Proposal scales for `method`, tuned once on a pilot dataset when pilot
/// tuning is enabled. A failed pilot falls back to the configured scales.
fn pilot_scales(spec: &Resolved, method: Method) -> anyhow::Result<Vec<f64>> {
    let Some(pilot) = &spec.pilot else {
        return Ok(spec.proposal_sd.clone());
    };
    let base = Stream::new(spec.seed).derive(label::PILOT);
    let obs = observe(spec, &base.derive(label::OBSERVED))?;
    let cfg = evaluator(spec, obs)?;
    let mcmc = spec.mcmc_config(method_stream(&base, method).key(), spec.proposal_sd.clone());
    let tuned = tune_proposal(target(method, &cfg).as_ref(), &mcmc, pilot);
    match tuned {
        Ok(sd) => {
            info!("{} pilot scales: {sd:?}", method.name());
            Ok(sd)
        }
        Err(e) => {
            warn!("{} pilot run failed ({e}); using the configured scales", method.name());
            Ok(spec.proposal_sd.clone())
        }
    }
}

fn param_outs(spec: &Resolved, chain: &Chain) -> anyhow::Result<Vec<ParamOut>> {
    Ok(summarize_chain(chain, &INTERVAL_PROBS)?
        .into_iter()
        .zip(&spec.param_names)
        .map(|(s, name)| ParamOut {
            name: name.clone(),
            mean: s.mean,
            sd: s.sd,
            lower: s.interval.0,
            upper: s.interval.1,
            ess: s.ess,
        })
        .collect())
}

pub fn run_sample(spec: &Resolved) -> anyhow::Result<SampleReport> {
    let method = spec.methods[0];
    let base = Stream::new(spec.seed);
    let obs = observe(spec, &base.derive(label::OBSERVED))?;
    let cfg = evaluator(spec, obs.clone())?;
    let sd = pilot_scales(spec, method)?;
    let chain_seed = method_stream(&base, method).key();
    let mcmc = spec.mcmc_config(chain_seed, sd.clone());
    let chain = run_chain(target(method, &cfg).as_ref(), &mcmc)?;
    Ok(SampleReport {
        method,
        observed: obs.as_slice().to_vec(),
        chain_seed,
        proposal_sd: sd,
        n_draws: chain.draws.len(),
        acceptance_rate: chain.acceptance_rate,
        burn_in_acceptance_rate: chain.burn_in_acceptance_rate,
        n_infeasible_proposals: chain.n_infeasible_proposals,
        n_failed_evaluations: chain.n_failed_evaluations,
        params: param_outs(spec, &chain)?,
        chain,
    })
}

// ---------------------------------------------------------------- coverage

#[derive(Clone, Debug, Serialize)]
pub struct ReplicateParam {
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
    pub contains: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    /// `None` when the chain failed; see `error`.
    pub params: Option<Vec<ReplicateParam>>,
    pub acceptance_rate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageRow {
    pub summaries: String,
    pub parameter: String,
    pub truth: f64,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_length: f64,
    pub length_se: f64,
    /// Successful replicates the averages are over.
    pub replicates: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    pub proposal_sd: Vec<f64>,
    pub rows: Vec<CoverageRow>,
    pub replicate_results: Vec<ReplicateResult>,
}

fn replicate_stream(spec: &Resolved, i: usize) -> Stream {
    Stream::new(spec.seed).derive_path(&[label::REPLICATE, i as u64])
}

fn coverage_replicate(spec: &Resolved, i: usize, sd: &[f64]) -> ReplicateResult {
    let attempt = || -> anyhow::Result<(Vec<ReplicateParam>, f64)> {
        let rs = replicate_stream(spec, i);
        let obs = observe(spec, &rs.derive(label::OBSERVED))?;
        let cfg = evaluator(spec, obs)?;
        let mcmc = spec.mcmc_config(method_stream(&rs, Method::Abcel).key(), sd.to_vec());
        let chain = run_chain(&AbcElTarget(&cfg), &mcmc)?;
        let truth = truth(spec)?;
        let params = param_outs(spec, &chain)?
            .into_iter()
            .zip(truth)
            .map(|(p, &t)| ReplicateParam {
                lower: p.lower,
                upper: p.upper,
                mean: p.mean,
                contains: p.lower <= t && t <= p.upper,
            })
            .collect();
        Ok((params, chain.acceptance_rate))
    };
    match attempt() {
        Ok((params, acc)) => ReplicateResult {
            replicate: i,
            params: Some(params),
            acceptance_rate: Some(acc),
            error: None,
        },
        Err(e) => {
            warn!("replicate {i} failed: {e:#}");
            ReplicateResult {
                replicate: i,
                params: None,
                acceptance_rate: None,
                error: Some(format!("{e:#}")),
            }
        }
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn run_coverage(spec: &Resolved) -> anyhow::Result<CoverageReport> {
    let truth = truth(spec)?.to_vec();
    let sd = pilot_scales(spec, Method::Abcel)?;
    let results: Vec<ReplicateResult> = (0..spec.replicates)
        .into_par_iter()
        .map(|i| coverage_replicate(spec, i, &sd))
        .collect();
    let ok: Vec<&Vec<ReplicateParam>> = results.iter().filter_map(|r| r.params.as_ref()).collect();
    let failed = results.len() - ok.len();
    let rows = spec
        .param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let hits: Vec<f64> = ok.iter().map(|p| if p[j].contains { 1.0 } else { 0.0 }).collect();
            let lengths: Vec<f64> = ok.iter().map(|p| p[j].upper - p[j].lower).collect();
            let n = hits.len() as f64;
            let coverage = if hits.is_empty() { f64::NAN } else { hits.iter().sum::<f64>() / n };
            let (mean_length, length_se) = mean_and_se(&lengths);
            CoverageRow {
                summaries: spec.summaries.clone(),
                parameter: name.clone(),
                truth: truth[j],
                coverage,
                coverage_se: (coverage * (1.0 - coverage) / n).sqrt(),
                mean_length,
                length_se,
                replicates: ok.len(),
                failed,
            }
        })
        .collect();
    Ok(CoverageReport {
        proposal_sd: sd,
        rows,
        replicate_results: results,
    })
}

// ---------------------------------------------------------------- compare

#[derive(Clone, Debug, Serialize)]
pub struct MethodEntry {
    pub replicate: usize,
    pub method: Method,
    pub params: Option<Vec<ParamOut>>,
    /// MCMC acceptance, or the ABC tolerance for rejection ABC.
    pub acceptance_rate: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
}

impl MethodEntry {
    pub fn contains_truth(&self, truth: &[f64]) -> Option<Vec<bool>> {
        self.params
            .as_ref()
            .map(|ps| ps.iter().zip(truth).map(|(p, &t)| p.lower <= t && t <= p.upper).collect())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub truth: Vec<f64>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub proposal_sd: Vec<(Method, Vec<f64>)>,
    pub entries: Vec<MethodEntry>,
}

impl CompareReport {
    pub fn entry(&self, replicate: usize, method: Method) -> Option<&MethodEntry> {
        self.entries.iter().find(|e| e.replicate == replicate && e.method == method)
    }
}

fn summarize_draws(spec: &Resolved, draws: &[Vec<f64>]) -> anyhow::Result<Vec<ParamOut>> {
    let chain = Chain {
        draws: draws.to_vec(),
        log_post_trace: vec![0.0; draws.len()],
        acceptance_rate: 0.0,
        burn_in_acceptance_rate: 0.0,
        n_infeasible_proposals: 0,
        n_failed_evaluations: 0,
        initial_state: Vec::new(),
    };
    param_outs(spec, &chain)
}

fn compare_method(spec: &Resolved, i: usize, method: Method, obs: &SummaryVector, sd: &[f64]) -> MethodEntry {
    let ms = method_stream(&replicate_stream(spec, i), method);
    let attempt = || -> anyhow::Result<(Vec<Vec<f64>>, f64)> {
        match method {
            Method::RejectionAbc => {
                let cfg = AbcConfig {
                    n_sims: spec.abc_n_sims,
                    keep_fraction: spec.abc_keep_fraction,
                    adjust: spec.abc_adjust,
                    prior: spec.abc_prior.clone(),
                };
                let out = rejection_abc(spec.model().as_ref(), obs, &cfg, &ms)?;
                Ok((out.theta_draws, out.tolerance))
            }
            _ => {
                let cfg = evaluator(spec, obs.clone())?;
                let mcmc = spec.mcmc_config(ms.key(), sd.to_vec());
                let chain = run_chain(target(method, &cfg).as_ref(), &mcmc)?;
                Ok((chain.draws, chain.acceptance_rate))
            }
        }
    };
    let result = attempt().and_then(|(draws, acc)| Ok((summarize_draws(spec, &draws)?, draws, acc)));
    match result {
        Ok((params, draws, acc)) => MethodEntry {
            replicate: i,
            method,
            params: Some(params),
            acceptance_rate: Some(acc),
            error: None,
            draws,
        },
        Err(e) => {
            warn!("replicate {i}, {}: {e:#}", method.name());
            MethodEntry {
                replicate: i,
                method,
                params: None,
                acceptance_rate: None,
                error: Some(format!("{e:#}")),
                draws: Vec::new(),
            }
        }
    }
}

pub fn run_compare(spec: &Resolved) -> anyhow::Result<CompareReport> {
    let truth = truth(spec)?.to_vec();
    let proposal_sd = spec
        .methods
        .iter()
        .filter(|m| **m != Method::RejectionAbc)
        .map(|&m| Ok((m, pilot_scales(spec, m)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let sd_for = |m: Method| {
        proposal_sd
            .iter()
            .find(|(k, _)| *k == m)
            .map(|(_, s)| s.clone())
            .unwrap_or_default()
    };
    let entries: Vec<MethodEntry> = (0..spec.replicates)
        .into_par_iter()
        .flat_map_iter(|i| {
            let obs = observe(spec, &replicate_stream(spec, i).derive(label::OBSERVED));
            spec.methods
                .iter()
                .map(|&m| match &obs {
                    Ok(obs) => compare_method(spec, i, m, obs, &sd_for(m)),
                    Err(e) => MethodEntry {
                        replicate: i,
                        method: m,
                        params: None,
                        acceptance_rate: None,
                        error: Some(format!("observed data: {e:#}")),
                        draws: Vec::new(),
                    },
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(CompareReport {
        truth,
        replicates: spec.replicates,
        methods: spec.methods.clone(),
        proposal_sd,
        entries,
    })
}

// ---------------------------------------------------------------- files

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a Resolved,
    result: &'a Report,
}

pub fn write_outputs(spec: &Resolved, report: &Report, out: &Path) -> anyhow::Result<()> {
    let csv = match report {
        Report::Profile(r) => profile_csv(spec, r),
        Report::Sample(r) => {
            let mut buf = Vec::new();
            r.chain.write_csv(&mut buf, &spec.param_names)?;
            String::from_utf8(buf)?
        }
        Report::Coverage(r) => {
            write_atomic(&sibling(out, "replicates.csv"), replicates_csv(spec, r).as_bytes())?;
            coverage_csv(r)
        }
        Report::Compare(r) => {
            write_atomic(&sibling(out, "draws.csv"), draws_csv(spec, r).as_bytes())?;
            compare_csv(spec, r)
        }
    };
    write_atomic(out, csv.as_bytes())?;
    write_json(&sibling(out, "json"), &Sidecar { spec, result: report })
}

fn profile_csv(spec: &Resolved, r: &ProfileReport) -> String {
    let name = spec.param_names[r.grid_param].as_str();
    let mut csv = Csv::new(&[
        name,
        "mean",
        "mean_feasible",
        "lower",
        "upper",
        "n_feasible",
        "repeats",
        "analytic",
        "status",
    ]);
    for o in &r.rows {
        csv.row(&[
            Cell::F(o.row.theta[r.grid_param]),
            Cell::L(o.row.mean),
            Cell::L(o.row.mean_feasible),
            Cell::L(o.row.lower),
            Cell::L(o.row.upper),
            Cell::U(o.row.n_feasible as u64),
            Cell::U(o.row.repeats as u64),
            Cell::L(o.analytic.map_or(LogValue::LogZero, LogValue::from_f64)),
            Cell::S(o.status),
        ]);
    }
    csv.into_string()
}

fn coverage_csv(r: &CoverageReport) -> String {
    let mut csv = Csv::new(&[
        "summaries",
        "parameter",
        "truth",
        "coverage",
        "coverage_se",
        "mean_length",
        "length_se",
        "replicates",
        "failed",
    ]);
    for row in &r.rows {
        csv.row(&[
            Cell::S(&row.summaries),
            Cell::S(&row.parameter),
            Cell::F(row.truth),
            Cell::F(row.coverage),
            Cell::F(row.coverage_se),
            Cell::F(row.mean_length),
            Cell::F(row.length_se),
            Cell::U(row.replicates as u64),
            Cell::U(row.failed as u64),
        ]);
    }
    csv.into_string()
}

fn replicates_csv(spec: &Resolved, r: &CoverageReport) -> String {
    let mut csv = Csv::new(&["replicate", "parameter", "mean", "lower", "upper", "contains", "acceptance", "error"]);
    for rep in &r.replicate_results {
        for (j, name) in spec.param_names.iter().enumerate() {
            let p = rep.params.as_ref().map(|ps| &ps[j]);
            csv.row(&[
                Cell::U(rep.replicate as u64),
                Cell::S(name),
                Cell::F(p.map_or(f64::NAN, |p| p.mean)),
                Cell::F(p.map_or(f64::NAN, |p| p.lower)),
                Cell::F(p.map_or(f64::NAN, |p| p.upper)),
                Cell::S(match p {
                    Some(p) if p.contains => "1",
                    Some(_) => "0",
                    None => "NA",
                }),
                Cell::F(rep.acceptance_rate.unwrap_or(f64::NAN)),
                Cell::S(rep.error.as_deref().unwrap_or("")),
            ]);
        }
    }
    csv.into_string()
}

fn compare_csv(spec: &Resolved, r: &CompareReport) -> String {
    let mut csv = Csv::new(&[
        "replicate",
        "method",
        "parameter",
        "truth",
        "mean",
        "sd",
        "lower",
        "upper",
        "contains",
        "acceptance",
        "error",
    ]);
    for e in &r.entries {
        for (j, name) in spec.param_names.iter().enumerate() {
            let p = e.params.as_ref().map(|ps| &ps[j]);
            csv.row(&[
                Cell::U(e.replicate as u64),
                Cell::S(e.method.name()),
                Cell::S(name),
                Cell::F(r.truth[j]),
                Cell::F(p.map_or(f64::NAN, |p| p.mean)),
                Cell::F(p.map_or(f64::NAN, |p| p.sd)),
                Cell::F(p.map_or(f64::NAN, |p| p.lower)),
                Cell::F(p.map_or(f64::NAN, |p| p.upper)),
                Cell::S(match p {
                    Some(p) if p.lower <= r.truth[j] && r.truth[j] <= p.upper => "1",
                    Some(_) => "0",
                    None => "NA",
                }),
                Cell::F(e.acceptance_rate.unwrap_or(f64::NAN)),
                Cell::S(e.error.as_deref().unwrap_or("")),
            ]);
        }
    }
    csv.into_string()
}

/// Long-format draws of replicate 0, one row per (method, draw, parameter).
fn draws_csv(spec: &Resolved, r: &CompareReport) -> String {
    let mut csv = Csv::new(&["method", "draw", "parameter", "value"]);
    for e in r.entries.iter().filter(|e| e.replicate == 0) {
        for (d, theta) in e.draws.iter().enumerate() {
            for (name, v) in spec.param_names.iter().zip(theta) {
                csv.row(&[Cell::S(e.method.name()), Cell::U(d as u64), Cell::S(name), Cell::F(*v)]);
            }
        }
    }
    csv.into_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::ExperimentSpec;

    fn quick(kind: Kind, model: &str) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(kind, model);
        s.mcmc.iterations = Some(300);
        s.mcmc.burn_in = Some(100);
        s.mcmc.pilot = Some(false);
        s.seed = 5;
        s
    }

    #[test]
    fn auto_grid_brackets_the_mode() {
        let mut s = quick(Kind::Profile, "normal_variance");
        s.repeats = Some(3);
        s.grid = Some(GridSpec::Auto {
            points: 7,
            level: None,
        });
        let r = s.resolve().unwrap();
        let obs = observe(&r, &Stream::new(5).derive(label::OBSERVED)).unwrap();
        let g = grid_values(&r, &obs).unwrap();
        assert_eq!(g.len(), 7);
        assert!(g[0] < obs[0] && obs[0] < g[6], "{g:?} around {}", obs[0]);
        assert!(g[0] > 0.0 && g[6] < 10.0);
    }

    #[test]
    fn profile_flags_rows_outside_prior() {
        let mut s = quick(Kind::Profile, "normal_variance");
        s.repeats = Some(4);
        s.grid = Some(GridSpec::Range {
            lo: -1.0,
            hi: 5.0,
            points: 4,
        });
        let r = run_profile(&s.resolve().unwrap()).unwrap();
        assert_eq!(r.rows[0].status, "outside_prior");
        assert_eq!(r.rows[0].row.mean, LogValue::LogZero);
        assert!(r.rows.iter().any(|o| o.status == "ok"));
    }

    #[test]
    fn coverage_matches_indicators() {
        let mut s = quick(Kind::Coverage, "normal_location");
        s.replicates = Some(6);
        let spec = s.resolve().unwrap();
        let r = run_coverage(&spec).unwrap();
        let hits = r
            .replicate_results
            .iter()
            .filter_map(|x| x.params.as_ref())
            .filter(|p| p[0].contains)
            .count();
        assert_eq!(r.rows[0].coverage, hits as f64 / r.rows[0].replicates as f64);
        assert_eq!(r.rows[0].replicates + r.rows[0].failed, 6);
    }

    #[test]
    fn replicate_independent_of_batch() {
        let mut s = quick(Kind::Coverage, "normal_location");
        s.replicates = Some(3);
        let spec = s.resolve().unwrap();
        let all = run_coverage(&spec).unwrap();
        let sd = spec.proposal_sd.clone();
        let alone = coverage_replicate(&spec, 2, &sd);
        let p = |r: &ReplicateResult| r.params.as_ref().map(|v| (v[0].lower, v[0].upper));
        assert_eq!(p(&alone), p(&all.replicate_results[2]));
    }

    #[test]
    fn failed_method_is_isolated() {
        let mut s = quick(Kind::Compare, "normal_location");
        s.methods = Some(vec![Method::Abcel, Method::RejectionAbc]);
        s.abc.n_sims = Some(2000);
        s.abc.keep_fraction = Some(0.05);
        // m = 3 with four summaries makes the EL evaluator invalid; ABC is unaffected
        s.summaries = Some("moments4".into());
        s.m = Some(3);
        let r = run_compare(&s.resolve().unwrap()).unwrap();
        assert!(r.entry(0, Method::Abcel).unwrap().error.is_some());
        assert!(r.entry(0, Method::RejectionAbc).unwrap().params.is_some());
    }
}
