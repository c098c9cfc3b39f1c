use rand_distr::{Distribution, StandardNormal};

use super::normal::series;
use super::summaries::{g4_summary, quantiles_in_place};
use super::{check_theta, Dataset, GenerativeModel, Prior, PriorComponent};
use crate::el::SummaryVector;
use crate::entropy::EntropyMode;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub(crate) const SUMMARY_SET: &str = "abs_quartiles_g4";
pub(crate) const DEFAULT_N: usize = 1000;
const BURN_IN: usize = 100;

/// ARCH(1): X_j = σ_j ε_j with σ_j² = α₀ + α₁ X_{j−1}².
#[derive(Clone, Debug)]
pub struct Arch1 {
    n: usize,
    prior: Prior,
    truth: [f64; 2],
}

impl Arch1 {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            prior: Prior(vec![
                PriorComponent::Uniform { lo: 0.0, hi: 5.0 },
                PriorComponent::Uniform { lo: 0.0, hi: 1.0 },
            ]),
            truth: [3.0, 0.75],
        }
    }
}

impl GenerativeModel for Arch1 {
    fn name(&self) -> &str {
        "arch1"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["alpha0".into(), "alpha1".into()]
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn summary_dim(&self) -> usize {
        4
    }

    fn summary_set(&self) -> &str {
        SUMMARY_SET
    }

    fn theta_truth(&self) -> Option<&[f64]> {
        Some(&self.truth)
    }

    /// Starts from X₀ = sqrt(α₀/(1−α₁))·ε and discards a short burn-in.
    fn simulate(&self, theta: &[f64], rng: &mut Stream) -> Result<Dataset> {
        check_theta(self, theta)?;
        let (a0, a1) = (theta[0], theta[1]);
        if !(a0 > 0.0) || !(0.0..1.0).contains(&a1) {
            return Err(Error::Simulation {
                model: self.name().into(),
                reason: format!("need alpha0 > 0 and 0 <= alpha1 < 1, got ({a0}, {a1})"),
            });
        }
        let mut eps = || -> f64 { StandardNormal.sample(&mut *rng) };
        let mut prev = (a0 / (1.0 - a1)).sqrt() * eps();
        for _ in 0..BURN_IN {
            prev = (a0 + a1 * prev * prev).sqrt() * eps();
        }
        let x = (0..self.n)
            .map(|_| {
                prev = (a0 + a1 * prev * prev).sqrt() * eps();
                prev
            })
            .collect();
        Ok(Dataset::Series(x))
    }

    fn summarize(&self, data: &Dataset) -> Result<SummaryVector> {
        let x = series(data, self.name())?;
        let mut abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let mut s = quantiles_in_place(&mut abs, &[0.25, 0.5, 0.75]);
        s.push(g4_summary(x));
        SummaryVector::new(s)
    }

    fn default_entropy(&self) -> EntropyMode {
        EntropyMode::WeightedKl
    }
}
