use std::sync::Arc;

use elabc_core::baselines::{rejection_abc, synthetic_loglik_from_sims, AbcConfig};
use elabc_core::mcmc::{
    run_chain, summarize_chain, AbcElTarget, FnTarget, Init, McmcConfig, SyntheticTarget,
};
use elabc_core::models::{Dataset, GenerativeModel, NormalLocation, Prior, PriorComponent};
use elabc_core::posterior::EvaluatorConfig;
use elabc_core::rng::label;
use elabc_core::{Stream, SummaryVector};
use statrs::distribution::{ContinuousCDF, Normal};

fn observed_normal(n: usize, seed: u64) -> (NormalLocation, Vec<f64>, SummaryVector) {
    let model = NormalLocation::with_summaries(n, "mean").unwrap();
    let data = model.simulate(&[0.0], &mut Stream::new(seed).derive(label::OBSERVED)).unwrap();
    let x = data.as_series().unwrap().to_vec();
    let obs = model.summarize(&Dataset::Series(x.clone())).unwrap();
    (model, x, obs)
}

#[test]
fn metropolis_recovers_analytic_quantiles() {
    let (mu, sd) = (0.7, 0.3);
    let target = FnTarget {
        prior: Prior(vec![PriorComponent::Normal { mean: 0.0, variance: 100.0 }]),
        f: move |t: &[f64]| -0.5 * ((t[0] - mu) / sd).powi(2),
    };
    let cfg = McmcConfig::new(100_000, 5_000, vec![2.4 * sd], 11);
    let chain = run_chain(&target, &cfg).unwrap();
    let probs = [0.1, 0.25, 0.5, 0.75, 0.9];
    let summary = &summarize_chain(&chain, &probs).unwrap()[0];
    let exact = Normal::new(mu, sd).unwrap();
    for &(p, q) in &summary.quantiles {
        let truth = exact.inverse_cdf(p);
        let density = (-0.5 * ((truth - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let se = (p * (1.0 - p) / summary.ess).sqrt() / density;
        assert!((q - truth).abs() < 3.0 * se, "p = {p}: {q} vs {truth} (se {se})");
    }
}

#[test]
fn abc_matches_exact_posterior_mean() {
    let (model, x, obs) = observed_normal(100, 21);
    let out = rejection_abc(&model, &obs, &AbcConfig::new(100_000, 0.01, true), &Stream::new(22)).unwrap();
    assert_eq!(out.theta_draws.len(), 1000);
    let exact_mean = x.iter().sum::<f64>() / 101.0;
    let exact_sd = (1.0f64 / 101.0).sqrt();
    let mean = out.theta_draws.iter().map(|t| t[0]).sum::<f64>() / 1000.0;
    let se = exact_sd / 1000f64.sqrt();
    assert!((mean - exact_mean).abs() < 3.0 * se, "{mean} vs {exact_mean}");
}

#[test]
fn abc_concentrates_as_tolerance_shrinks() {
    let (model, _, obs) = observed_normal(100, 31);
    let sd_for = |f: f64| {
        let out = rejection_abc(&model, &obs, &AbcConfig::new(20_000, f, false), &Stream::new(32)).unwrap();
        let n = out.theta_draws.len() as f64;
        let mean = out.theta_draws.iter().map(|t| t[0]).sum::<f64>() / n;
        (out.theta_draws.iter().map(|t| (t[0] - mean).powi(2)).sum::<f64>() / n).sqrt()
    };
    let (wide, narrow) = (sd_for(0.1), sd_for(0.01));
    assert!(narrow < wide, "{narrow} vs {wide}");
}

#[test]
fn synthetic_loglik_ignores_replicate_order() {
    let (model, _, obs) = observed_normal(100, 41);
    let model: Arc<dyn GenerativeModel> = Arc::new(model);
    let cfg = EvaluatorConfig::new(model, obs.clone(), 30).unwrap();
    let mut sims = cfg.simulate_batch(&[0.05], &Stream::new(5)).unwrap();
    let a = synthetic_loglik_from_sims(&sims, &obs).unwrap();
    sims.reverse();
    sims.swap(3, 17);
    let b = synthetic_loglik_from_sims(&sims, &obs).unwrap();
    assert!((a.log_density.to_f64() - b.log_density.to_f64()).abs() < 1e-12);
}

#[test]
fn synthetic_and_abcel_posterior_means_agree() {
    let (model, _, obs) = observed_normal(100, 51);
    let model: Arc<dyn GenerativeModel> = Arc::new(model);
    let cfg = EvaluatorConfig::new(model, obs, 25).unwrap();
    let mut mcmc = McmcConfig::new(20_000, 2_000, vec![0.15], 52);
    mcmc.init = Init::Fixed(vec![0.0]);
    let el = run_chain(&AbcElTarget(&cfg), &mcmc).unwrap();
    let sl = run_chain(&SyntheticTarget(&cfg), &mcmc).unwrap();
    let a = &summarize_chain(&el, &[0.025, 0.975]).unwrap()[0];
    let b = &summarize_chain(&sl, &[0.025, 0.975]).unwrap()[0];
    let se = (a.sd.powi(2) / a.ess + b.sd.powi(2) / b.ess).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
    assert!(el.acceptance_rate > 0.05 && sl.acceptance_rate > 0.05);
}
