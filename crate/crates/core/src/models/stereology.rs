use rand_distr::{Distribution, Poisson};

use super::normal::series;
use super::summaries::{quantile_in_place, raw_moment_summary};
use super::{check_theta, Dataset, GenerativeModel, Prior, PriorComponent};
use crate::el::SummaryVector;
use crate::entropy::EntropyMode;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub(crate) const SUMMARY_SET: &str = "count_mean_median_prop6";

/// Detection threshold for inclusion diameters (µm).
pub const V0: f64 = 5.0;
/// Centring constant of the count summary, the size of the reference sample.
const COUNT_CENTRE: f64 = 112.0;
const SMALL_CUTOFF: f64 = 6.0;

/// P(V ≤ v | V > v0) for the generalised Pareto excess law.
pub fn gpd_cdf(v: f64, v0: f64, sigma: f64, xi: f64) -> f64 {
    if v <= v0 {
        return 0.0;
    }
    let y = (v - v0) / sigma;
    if xi.abs() < 1e-12 {
        return -(-y).exp_m1();
    }
    let base = 1.0 + xi * y;
    if base <= 0.0 {
        return 1.0;
    }
    1.0 - base.powf(-1.0 / xi)
}

/// Inverse of [`gpd_cdf`] at u ∈ [0, 1).
pub fn gpd_quantile(u: f64, v0: f64, sigma: f64, xi: f64) -> f64 {
    let tail = -(-u).ln_1p();
    if xi.abs() < 1e-12 {
        v0 + sigma * tail
    } else {
        v0 + sigma * (xi * tail).exp_m1() / xi
    }
}

/// Elliptical inclusion model observed through a planar slice.
///
/// A Poisson(λ) number of inclusions have their centres within half a
/// largest diameter of the slicing plane. Each has largest diameter
/// V ~ GPD(v0, σ, ξ) above v0, the other two diameters V·U₁ and V·U₂, and a
/// uniformly random orientation. The plane sits at offset t ~ U(−V/2, V/2)
/// from the centre, so the chance of a cut is proportional to the extent of
/// the inclusion normal to the plane. A cut yields an ellipse whose largest
/// diameter is recorded when it exceeds v0.
#[derive(Clone, Debug)]
pub struct Stereology {
    prior: Prior,
    truth: [f64; 3],
}

impl Default for Stereology {
    fn default() -> Self {
        Self::new()
    }
}

impl Stereology {
    pub fn new() -> Self {
        Self {
            prior: Prior(vec![
                PriorComponent::Uniform { lo: 1.0, hi: 200.0 },
                PriorComponent::Uniform { lo: 0.0, hi: 10.0 },
                PriorComponent::Uniform { lo: -5.0, hi: 5.0 },
            ]),
            truth: [150.0, 2.0, 0.1],
        }
    }
}

/// Largest diameter of the section of a randomly oriented ellipsoid, or
/// `None` when the plane misses it.
fn section_diameter(semi: [f64; 3], rng: &mut Stream, offset_u: f64) -> Option<f64> {
    // uniform rotation from a uniform unit quaternion
    let (u1, u2, u3) = (rng.uniform_open(), rng.uniform_open(), rng.uniform_open());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (x, y, z, w) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    let rot = [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ];
    // ellipsoid {p : pᵀ R diag(1/s²) Rᵀ p ≤ 1}; its half-extent along z is
    // h with h² = Σ R_{3k}² s_k²
    let h2: f64 = (0..3).map(|k| rot[2][k] * rot[2][k] * semi[k] * semi[k]).sum();
    let t = (offset_u - 0.5) * 2.0 * semi[0];
    if t * t >= h2 {
        return None;
    }
    let kappa = 1.0 - t * t / h2;
    let d: [f64; 3] = semi.map(|s| 1.0 / (s * s));
    let m = |i: usize, j: usize| (0..3).map(|k| rot[i][k] * rot[j][k] * d[k]).sum::<f64>();
    let (p, q, r) = (m(0, 0), m(0, 1), m(1, 1));
    let lam_min = 0.5 * (p + r) - (0.25 * (p - r) * (p - r) + q * q).sqrt();
    Some(2.0 * (kappa / lam_min).sqrt())
}

impl GenerativeModel for Stereology {
    fn name(&self) -> &str {
        "stereology"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["lambda".into(), "sigma".into(), "xi".into()]
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

    fn simulate(&self, theta: &[f64], rng: &mut Stream) -> Result<Dataset> {
        check_theta(self, theta)?;
        let (lambda, sigma, xi) = (theta[0], theta[1], theta[2]);
        if !(lambda > 0.0) || !(sigma > 0.0) {
            return Err(Error::Simulation {
                model: self.name().into(),
                reason: format!("need lambda > 0 and sigma > 0, got ({lambda}, {sigma})"),
            });
        }
        let count = Poisson::new(lambda)
            .map_err(|e| Error::Simulation {
                model: self.name().into(),
                reason: e.to_string(),
            })?
            .sample(rng) as usize;
        let mut out = Vec::new();
        for _ in 0..count {
            let v = gpd_quantile(rng.uniform_open(), V0, sigma, xi);
            let semi = [0.5 * v, 0.5 * v * rng.uniform_open(), 0.5 * v * rng.uniform_open()];
            let offset = rng.uniform_open();
            if let Some(d) = section_diameter(semi, rng, offset) {
                if d > V0 && d.is_finite() {
                    out.push(d);
                }
            }
        }
        Ok(Dataset::Series(out))
    }

    fn summarize(&self, data: &Dataset) -> Result<SummaryVector> {
        let x = series(data, self.name())?;
        let l = x.len() as f64;
        let count = (l - COUNT_CENTRE) / 100.0;
        if x.is_empty() {
            return SummaryVector::new(vec![count, 0.0, 0.0, 0.0]);
        }
        let mut buf = x.to_vec();
        let median = quantile_in_place(&mut buf, 0.5);
        let small = x.iter().filter(|&&d| d <= SMALL_CUTOFF).count() as f64 / l;
        SummaryVector::new(vec![count, raw_moment_summary(x, 1), median, small])
    }

    fn default_entropy(&self) -> EntropyMode {
        EntropyMode::WeightedKl
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gpd_limits_and_inverse() {
        assert_eq!(gpd_cdf(V0, V0, 2.0, 0.3), 0.0);
        for u in [0.1f64, 0.5, 0.9] {
            let expo = V0 - 2.0 * (1.0 - u).ln();
            assert!((gpd_quantile(u, V0, 2.0, 0.0) - expo).abs() < 1e-12);
            assert!((gpd_quantile(u, V0, 2.0, 1e-9) - expo).abs() < 1e-7);
            for xi in [-0.5, 0.0, 0.2, 3.0] {
                assert!((gpd_cdf(gpd_quantile(u, V0, 2.0, xi), V0, 2.0, xi) - u).abs() < 1e-12);
            }
        }
        // bounded support for negative shape
        assert_eq!(gpd_cdf(V0 + 2.0 / 0.5 + 1.0, V0, 2.0, -0.5), 1.0);
    }

    #[test]
    fn sphere_sections_follow_the_chord_law() {
        // for a sphere of diameter D cut at offset t the section diameter is
        // 2·sqrt(D²/4 − t²)
        let mut s = Stream::new(1);
        for offset in [0.1, 0.5, 0.77] {
            let d = section_diameter([3.0, 3.0, 3.0], &mut s, offset).unwrap();
            let t = (offset - 0.5) * 6.0;
            assert!((d - 2.0 * (9.0 - t * t).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn count_scales_with_lambda() {
        let m = Stereology::new();
        let mut s = Stream::new(9);
        let mean_count = |lambda: f64, s: &mut Stream| {
            (0..400)
                .map(|_| m.simulate(&[lambda, 2.0, 0.1], s).unwrap().as_series().unwrap().len() as f64)
                .sum::<f64>()
                / 400.0
        };
        let a = mean_count(50.0, &mut s);
        let b = mean_count(100.0, &mut s);
        assert!(a > 1.0);
        assert!((b / a - 2.0).abs() < 0.15, "{a} {b}");
    }

    #[test]
    fn empty_dataset_summaries() {
        let m = Stereology::new();
        let s = m.summarize(&Dataset::Series(vec![])).unwrap();
        assert_eq!(s.as_slice(), &[-1.12, 0.0, 0.0, 0.0]);
        let s = m.summarize(&Dataset::Series(vec![5.5, 7.0, 6.0])).unwrap();
        assert_eq!(s.as_slice(), &[-1.09, 6.166666666666667, 6.0, 2.0 / 3.0]);
    }
}
