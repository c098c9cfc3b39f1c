use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::summaries::{quantile_in_place, raw_moment_summary};
use super::{check_theta, standard_normals, Dataset, GenerativeModel, Prior, PriorComponent};
use crate::el::SummaryVector;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub(crate) const DEFAULT_N: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Atom {
    Moment(u32),
    Quantile(u8),
}

const MEDIAN: Atom = Atom::Quantile(2);
const Q1: Atom = Atom::Quantile(1);
const Q3: Atom = Atom::Quantile(3);

/// Named constraint sets for the normal location model: raw moments
/// (a)-(d) and quartiles (e) median, (f) Q1, (g) Q3.
pub(crate) const LOCATION_SETS: [(&str, &[Atom]); 7] = [
    ("mean", &[Atom::Moment(1)]),
    ("median", &[MEDIAN]),
    ("moments2", &[Atom::Moment(1), Atom::Moment(2)]),
    ("moments3", &[Atom::Moment(1), Atom::Moment(2), Atom::Moment(3)]),
    ("quartiles", &[MEDIAN, Q1, Q3]),
    ("mean_median", &[Atom::Moment(1), MEDIAN]),
    ("moments4", &[Atom::Moment(1), Atom::Moment(2), Atom::Moment(3), Atom::Moment(4)]),
];

fn atom_from_letter(c: &str) -> Option<Atom> {
    Some(match c {
        "a" => Atom::Moment(1),
        "b" => Atom::Moment(2),
        "c" => Atom::Moment(3),
        "d" => Atom::Moment(4),
        "e" => MEDIAN,
        "f" => Q1,
        "g" => Q3,
        _ => return None,
    })
}

/// n draws from N(μ, 1) with a N(0, 1) prior on μ.
#[derive(Clone, Debug)]
pub struct NormalLocation {
    n: usize,
    set: String,
    atoms: Vec<Atom>,
    prior: Prior,
    truth: [f64; 1],
}

impl NormalLocation {
    /// `summaries` is a named set (`mean`, `moments4`, ...) or a comma list of
    /// the letters a-g.
    pub fn with_summaries(n: usize, summaries: &str) -> Result<Self> {
        let atoms = if let Some((_, atoms)) = LOCATION_SETS.iter().find(|(name, _)| *name == summaries) {
            atoms.to_vec()
        } else {
            summaries
                .split(',')
                .map(|s| atom_from_letter(s.trim()))
                .collect::<Option<Vec<_>>>()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::UnknownSummarySet {
                    model: "normal_location".into(),
                    name: summaries.into(),
                    valid: LOCATION_SETS
                        .iter()
                        .map(|(n, _)| *n)
                        .collect::<Vec<_>>()
                        .join(", ")
                        + ", or a comma list of a-g",
                })?
        };
        if n < 2 {
            return Err(Error::InvalidArgument(format!("sample size must be at least 2, got {n}")));
        }
        Ok(Self {
            n,
            set: summaries.to_string(),
            atoms,
            prior: Prior(vec![PriorComponent::Normal {
                mean: 0.0,
                variance: 1.0,
            }]),
            truth: [0.0],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Exact posterior N(Σx/(n+1), 1/(n+1)) of μ given the full sample.
    pub fn exact_posterior(data: &[f64]) -> (f64, f64) {
        let n = data.len() as f64;
        (data.iter().sum::<f64>() / (n + 1.0), 1.0 / (n + 1.0))
    }
}

impl GenerativeModel for NormalLocation {
    fn name(&self) -> &str {
        "normal_location"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn summary_dim(&self) -> usize {
        self.atoms.len()
    }

    fn summary_set(&self) -> &str {
        &self.set
    }

    fn theta_truth(&self) -> Option<&[f64]> {
        Some(&self.truth)
    }

    fn simulate(&self, theta: &[f64], rng: &mut Stream) -> Result<Dataset> {
        check_theta(self, theta)?;
        let mut x = standard_normals(rng, self.n);
        x.iter_mut().for_each(|v| *v += theta[0]);
        Ok(Dataset::Series(x))
    }

    fn summarize(&self, data: &Dataset) -> Result<SummaryVector> {
        let x = series(data, self.name())?;
        let mut sorted: Option<Vec<f64>> = None;
        let values = self
            .atoms
            .iter()
            .map(|atom| match *atom {
                Atom::Moment(g) => raw_moment_summary(x, g),
                Atom::Quantile(q) => {
                    let buf = sorted.get_or_insert_with(|| x.to_vec());
                    quantile_in_place(buf, f64::from(q) * 0.25)
                }
            })
            .collect();
        SummaryVector::new(values)
    }
}

pub(crate) fn series<'a>(data: &'a Dataset, model: &str) -> Result<&'a [f64]> {
    data.as_series().ok_or_else(|| Error::Simulation {
        model: model.into(),
        reason: "expected a real-valued series".into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceSummary {
    /// Mean of squares.
    G1,
    /// Sample maximum.
    G2,
}

impl VarianceSummary {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "g1" => Some(VarianceSummary::G1),
            "g2" => Some(VarianceSummary::G2),
            _ => None,
        }
    }
}

/// n draws from N(0, θ) with a U(0, 10) prior on the variance θ, summarised
/// by a single statistic whose exact sampling density is known.
#[derive(Clone, Debug)]
pub struct NormalVariance {
    n: usize,
    which: VarianceSummary,
    prior: Prior,
    truth: [f64; 1],
}

impl NormalVariance {
    pub fn new(n: usize, which: VarianceSummary) -> Self {
        Self {
            n,
            which,
            prior: Prior(vec![PriorComponent::Uniform { lo: 0.0, hi: 10.0 }]),
            truth: [4.0],
        }
    }

    pub fn which(&self) -> VarianceSummary {
        self.which
    }

    /// log density of the summary value `g` when the variance is `theta`.
    ///
    /// g₁ = θ χ²_n / n; g₂ is the maximum of n N(0, θ) draws with density
    /// n φ(g/√θ) Φ(g/√θ)^{n−1} / √θ.
    pub fn summary_log_density(&self, g: f64, theta: f64) -> f64 {
        if !(theta > 0.0) {
            return f64::NEG_INFINITY;
        }
        let n = self.n as f64;
        match self.which {
            VarianceSummary::G1 => {
                if !(g > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let x = n * g / theta;
                (n / theta).ln() + (0.5 * n - 1.0) * x.ln() - 0.5 * x - 0.5 * n * 2f64.ln() - ln_gamma(0.5 * n)
            }
            VarianceSummary::G2 => {
                let sd = theta.sqrt();
                let z = g / sd;
                let log_phi = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
                n.ln() + log_phi - sd.ln() + (n - 1.0) * log_normal_cdf(z)
            }
        }
    }

    /// Unnormalised analytic log posterior under the U(0, 10) prior.
    pub fn analytic_log_posterior(&self, g_obs: f64, theta: f64) -> f64 {
        let prior = self.prior.log_density(&[theta]).to_f64();
        if prior == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        prior + self.summary_log_density(g_obs, theta)
    }
}

/// log Φ(z), accurate in both tails.
pub(crate) fn log_normal_cdf(z: f64) -> f64 {
    let upper = 0.5 * erfc(z / std::f64::consts::SQRT_2);
    if z > 0.0 {
        (-upper).ln_1p()
    } else {
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    }
}

impl GenerativeModel for NormalVariance {
    fn name(&self) -> &str {
        "normal_variance"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["variance".into()]
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn summary_dim(&self) -> usize {
        1
    }

    fn summary_set(&self) -> &str {
        match self.which {
            VarianceSummary::G1 => "g1",
            VarianceSummary::G2 => "g2",
        }
    }

    fn theta_truth(&self) -> Option<&[f64]> {
        Some(&self.truth)
    }

    fn simulate(&self, theta: &[f64], rng: &mut Stream) -> Result<Dataset> {
        check_theta(self, theta)?;
        if !(theta[0] > 0.0) {
            return Err(Error::Simulation {
                model: self.name().into(),
                reason: format!("variance must be positive, got {}", theta[0]),
            });
        }
        let sd = theta[0].sqrt();
        let mut x = standard_normals(rng, self.n);
        x.iter_mut().for_each(|v| *v *= sd);
        Ok(Dataset::Series(x))
    }

    fn summarize(&self, data: &Dataset) -> Result<SummaryVector> {
        let x = series(data, self.name())?;
        let g = match self.which {
            VarianceSummary::G1 => raw_moment_summary(x, 2),
            VarianceSummary::G2 => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        SummaryVector::new(vec![g])
    }

    fn analytic_log_posterior(&self, obs: &SummaryVector, theta: &[f64]) -> Option<f64> {
        Some(NormalVariance::analytic_log_posterior(self, obs[0], theta[0]))
    }
}
