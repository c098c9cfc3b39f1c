use statrs::distribution::{ContinuousCDF, Normal};

use super::normal::series;
use super::summaries::{quantiles_in_place, raw_moment_summary};
use super::{check_theta, standard_normals, Dataset, GenerativeModel, Prior, PriorComponent};
use crate::el::SummaryVector;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub(crate) const SUMMARY_SET: &str = "mean_quartiles";
pub(crate) const DEFAULT_N: usize = 1000;

/// Fixed skewness-damping constant of the g-and-k family.
pub const GK_C: f64 = 0.8;

/// The g-and-k transform of a standard normal deviate z.
pub fn gk_transform(z: f64, a: f64, b: f64, g: f64, k: f64) -> f64 {
    // (1 − e^{−gz})/(1 + e^{−gz}) = tanh(gz/2)
    let skew = 1.0 + GK_C * (0.5 * g * z).tanh();
    a + b * skew * (1.0 + z * z).powf(k) * z
}

/// Q(p; A, B, g, k).
pub fn gk_quantile(p: f64, a: f64, b: f64, g: f64, k: f64) -> f64 {
    let z = Normal::standard().inverse_cdf(p);
    gk_transform(z, a, b, g, k)
}

/// n i.i.d. g-and-k draws summarised by the mean and the three quartiles.
#[derive(Clone, Debug)]
pub struct GAndK {
    n: usize,
    prior: Prior,
    truth: [f64; 4],
}

impl GAndK {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            prior: Prior(vec![PriorComponent::Uniform { lo: 0.0, hi: 10.0 }; 4]),
            truth: [3.0, 1.0, 2.0, 0.5],
        }
    }

    /// Narrower prior used to make rejection sampling affordable; it still
    /// contains the bulk of the posterior under the full prior.
    pub fn restricted_prior() -> Prior {
        Prior(vec![
            PriorComponent::Uniform { lo: 2.0, hi: 4.0 },
            PriorComponent::Uniform { lo: 0.0, hi: 2.0 },
            PriorComponent::Uniform { lo: 0.0, hi: 4.0 },
            PriorComponent::Uniform { lo: 0.0, hi: 1.0 },
        ])
    }
}

impl GenerativeModel for GAndK {
    fn name(&self) -> &str {
        "gk"
    }

    fn param_names(&self) -> Vec<String> {
        ["A", "B", "g", "k"].map(String::from).to_vec()
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

    /// Pushing z ~ N(0, 1) through the transform is the same law as pushing
    /// U(0, 1) through Q, without the inverse normal CDF.
    fn simulate(&self, theta: &[f64], rng: &mut Stream) -> Result<Dataset> {
        check_theta(self, theta)?;
        let [a, b, g, k] = [theta[0], theta[1], theta[2], theta[3]];
        if !(b > 0.0) || !(k > -0.5) {
            return Err(Error::Simulation {
                model: self.name().into(),
                reason: format!("need B > 0 and k > -0.5, got B = {b}, k = {k}"),
            });
        }
        let mut x = standard_normals(rng, self.n);
        x.iter_mut().for_each(|z| *z = gk_transform(*z, a, b, g, k));
        Ok(Dataset::Series(x))
    }

    fn summarize(&self, data: &Dataset) -> Result<SummaryVector> {
        let x = series(data, self.name())?;
        let mut buf = x.to_vec();
        let q = quantiles_in_place(&mut buf, &[0.25, 0.5, 0.75]);
        SummaryVector::new(vec![raw_moment_summary(x, 1), q[0], q[1], q[2]])
    }
}
