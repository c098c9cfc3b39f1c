//! Differential entropy of the summary-generating density, estimated from the
//! simulated summaries.
//!
//! Two estimators are provided: the weighted Kozachenko-Leonenko k-nearest
//! neighbour estimator, and the closed form for a multivariate normal with
//! the sample covariance plugged in.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::el::SummaryVector;
use crate::error::{Error, Result};

/// Above this many points neighbours are found with a k-d tree.
pub const BRUTE_FORCE_LIMIT: usize = 512;


#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    WeightedKl,
    Gaussian,
}

/// Which entropy term an evaluator adds. `None` drops the term entirely.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    WeightedKl,
    Gaussian,
    None,
}

impl FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" | "weighted_kl" => Ok(EntropyMode::WeightedKl),
            "gaussian" => Ok(EntropyMode::Gaussian),
            "none" => Ok(EntropyMode::None),
            other => Err(Error::InvalidArgument(format!(
                "unknown entropy mode {other:?}; expected kl, gaussian or none"
            ))),
        }
    }
}

impl fmt::Display for EntropyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntropyMode::WeightedKl => "kl",
            EntropyMode::Gaussian => "gaussian",
            EntropyMode::None => "none",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub method: EntropyMethod,
    /// Neighbour count, 0 for the Gaussian form.
    pub k: usize,
}

/// ψ(x) for x > 0, by upward recurrence to x ≥ 10 and the asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("digamma needs x > 0, got {x}")));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    // Bernoulli terms B_2k / (2k x^2k), k = 1..7
    let series = x2
        * (1.0 / 12.0
            - x2 * (1.0 / 120.0
                - x2 * (1.0 / 252.0
                    - x2 * (1.0 / 240.0
                        - x2 * (1.0 / 132.0 - x2 * (691.0 / 32760.0 - x2 / 12.0))))));
    Ok(acc + x.ln() - 0.5 / x - series)
}

/// Default neighbour count: ⌈√m⌉ clamped to [3, m − 1].
pub fn default_k(m: usize) -> usize {
    let k = (m as f64).sqrt().ceil() as usize;
    k.max(3).min(m.saturating_sub(1)).max(1)
}

fn check_points(points: &[SummaryVector]) -> Result<usize> {
    let r = points
        .first()
        .map(SummaryVector::len)
        .ok_or(Error::TooFewPoints { needed: 1, got: 0 })?;
    for p in points {
        if p.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: p.len(),
            });
        }
    }
    Ok(r)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row `i` holds the distances from point `i` to its 1st..k-th nearest other
/// point, nondecreasing.
pub fn knn_distances(points: &[SummaryVector], k: usize) -> Result<Vec<Vec<f64>>> {
    if points.len() <= BRUTE_FORCE_LIMIT {
        knn_distances_brute(points, k)
    } else {
        knn_distances_tree(points, k)
    }
}

fn check_knn(points: &[SummaryVector], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.len() < k + 1 {
        return Err(Error::TooFewPoints {
            needed: k + 1,
            got: points.len(),
        });
    }
    check_points(points)?;
    Ok(())
}

/// Exhaustive neighbour search.
pub fn knn_distances_brute(points: &[SummaryVector], k: usize) -> Result<Vec<Vec<f64>>> {
    check_knn(points, k)?;
    let m = points.len();
    let mut out = Vec::with_capacity(m);
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(m - 1);
    for (i, p) in points.iter().enumerate() {
        buf.clear();
        buf.extend(
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| (sq_dist(p.as_slice(), q.as_slice()), j)),
        );
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < buf.len() {
            buf.select_nth_unstable_by(k - 1, cmp);
        }
        buf[..k].sort_unstable_by(cmp);
        if buf[0].0 == 0.0 {
            return Err(Error::DuplicatePoints(i.min(buf[0].1), i.max(buf[0].1)));
        }
        out.push(buf[..k].iter().map(|(d2, _)| d2.sqrt()).collect());
    }
    Ok(out)
}

/// Neighbour search with a k-d tree. Distances are bit-identical to
/// [`knn_distances_brute`].
pub fn knn_distances_tree(points: &[SummaryVector], k: usize) -> Result<Vec<Vec<f64>>> {
    check_knn(points, k)?;
    let tree = KdTree::build(points);
    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let nn = tree.nearest(i, k);
        if nn[0].0 == 0.0 {
            return Err(Error::DuplicatePoints(i.min(nn[0].1), i.max(nn[0].1)));
        }
        out.push(nn.iter().map(|(d2, _)| d2.sqrt()).collect());
    }
    Ok(out)
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

struct KdTree<'a> {
    points: &'a [SummaryVector],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    fn build(points: &'a [SummaryVector]) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.len());
        tree
    }

    fn coord(&self, i: usize, d: usize) -> f64 {
        self.points[i].as_slice()[d]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let r = self.points[0].len();
        let dim = (0..r)
            .max_by(|&a, &b| {
                let spread = |d: usize| {
                    let (lo, hi) = self.order[start..end].iter().fold(
                        (f64::INFINITY, f64::NEG_INFINITY),
                        |(lo, hi), &i| (lo.min(self.coord(i, d)), hi.max(self.coord(i, d))),
                    );
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a].as_slice()[dim].total_cmp(&points[b].as_slice()[dim])
        });
        let value = self.coord(self.order[mid], dim);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// k nearest (squared distance, index) pairs to point `query`, excluding itself.
    fn nearest(&self, query: usize, k: usize) -> Vec<(f64, usize)> {
        let q = self.points[query].as_slice();
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, q, k, &mut heap);
        let mut v: Vec<(f64, usize)> = heap.into_iter().map(|Candidate(d, i)| (d, i)).collect();
        v.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v
    }

    fn search(&self, node: usize, query: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == query {
                        continue;
                    }
                    let c = Candidate(sq_dist(q, self.points[i].as_slice()), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, q, k, heap);
                let worst = heap.peek().map_or(f64::INFINITY, |c| c.0);
                if heap.len() < k || diff * diff <= worst {
                    self.search(far, query, q, k, heap);
                }
            }
        }
    }
}

/// Neighbour-order weights for the weighted Kozachenko-Leonenko estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NuWeights {
    pub k: usize,
    pub r: usize,
    /// `nu[j - 1]` is the weight on the j-th neighbour.
    pub nu: Vec<f64>,
}

/// Neighbour orders that may carry weight: {⌊jk/r⌋ : j = 1..r} ∪ {k}, zero removed.
pub fn nu_support(k: usize, r: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (1..=r).map(|j| j * k / r).chain(std::iter::once(k)).filter(|&j| j >= 1).collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Γ(j + 2l/r) / Γ(j)
fn gamma_ratio(j: usize, l: usize, r: usize) -> f64 {
    let j = j as f64;
    (ln_gamma(j + 2.0 * l as f64 / r as f64) - ln_gamma(j)).exp()
}

/// Minimum Euclidean-likelihood weights: the minimiser of Σ (c ν_j − 1)² on
/// the support subject to Σ ν_j = 1 and the ⌊r/4⌋ bias-cancelling moment
/// conditions. Given Σ ν_j = 1 the objective differs from Σ ν_j² by a
/// constant, so the solution is the minimum-norm point ν = Aᵀ(AAᵀ)⁻¹e₁.
pub fn solve_nu(k: usize, r: usize) -> Result<NuWeights> {
    if k == 0 || r == 0 {
        return Err(Error::InvalidArgument(format!("solve_nu needs k, r >= 1 (k = {k}, r = {r})")));
    }
    let support = nu_support(k, r);
    let n_gamma = r / 4;
    let c = 1 + n_gamma;
    let infeasible = Error::NuInfeasible {
        k,
        r,
        constraints: c,
        support: support.len(),
    };
    if c > support.len() {
        return Err(infeasible);
    }
    let a = DMatrix::from_fn(c, support.len(), |row, col| {
        if row == 0 {
            1.0
        } else {
            gamma_ratio(support[col], row, r)
        }
    });
    let gram = &a * a.transpose();
    let mut rhs = DVector::zeros(c);
    rhs[0] = 1.0;
    let y = gram.clone().cholesky().ok_or_else(|| infeasible.clone())?.solve(&rhs);
    let nu_s = a.transpose() * y;
    // Reject numerically rank-deficient systems.
    let back = &a * &nu_s - &rhs;
    let scale = a.amax().max(1.0);
    if back.amax() > 1e-8 * scale || nu_s.iter().any(|v| !v.is_finite()) {
        return Err(infeasible);
    }
    let mut nu = vec![0.0; k];
    for (&j, v) in support.iter().zip(nu_s.iter()) {
        nu[j - 1] = *v;
    }
    Ok(NuWeights { k, r, nu })
}

/// Weighted Kozachenko-Leonenko estimate
/// (1/m) Σ_i Σ_j ν_j log[(m − 1) V_r ρ_{(j),i}^r e^{−ψ(j)}], V_r = π^{r/2}/Γ(1 + r/2).
pub fn kl_entropy(points: &[SummaryVector], k: usize, nu: &NuWeights) -> Result<EntropyEstimate> {
    let r = check_points(points)?;
    if nu.k != k || nu.r != r {
        return Err(Error::InvalidArgument(format!(
            "neighbour weights were built for (k = {}, r = {}), not (k = {k}, r = {r})",
            nu.k, nu.r
        )));
    }
    let dists = knn_distances(points, k)?;
    let m = points.len() as f64;
    let rf = r as f64;
    let log_ball = (m - 1.0).ln() + 0.5 * rf * PI.ln() - ln_gamma(1.0 + 0.5 * rf);
    let mut constant = 0.0;
    for (j, &w) in nu.nu.iter().enumerate() {
        if w != 0.0 {
            constant += w * (log_ball - digamma((j + 1) as f64)?);
        }
    }
    let mut acc = 0.0;
    for row in &dists {
        for (j, &w) in nu.nu.iter().enumerate() {
            if w != 0.0 {
                acc += w * row[j].ln();
            }
        }
    }
    Ok(EntropyEstimate {
        value: constant + rf * acc / m,
        method: EntropyMethod::WeightedKl,
        k,
    })
}

/// Unbiased sample covariance, row-major `r x r`.
pub fn sample_covariance(points: &[SummaryVector]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let r = check_points(points)?;
    let m = points.len();
    if m < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: m });
    }
    let mut mean = vec![0.0; r];
    for p in points {
        for (a, v) in mean.iter_mut().zip(p.as_slice()) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    let mut cov = DMatrix::zeros(r, r);
    for p in points {
        let p = p.as_slice();
        for a in 0..r {
            let da = p[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..r {
        for b in 0..=a {
            let v = cov[(a, b)] / (m - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((mean, cov))
}

/// log det of a covariance matrix via Cholesky, rejecting numerically
/// singular matrices.
pub fn covariance_logdet(cov: &DMatrix<f64>) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let max_var = cov.diagonal().amax();
    if !(max_var > 0.0) || !max_var.is_finite() {
        return Err(Error::SingularCovariance);
    }
    let ch = cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let l = ch.l_dirty();
    let mut logdet = 0.0;
    for i in 0..cov.nrows() {
        let d = l[(i, i)];
        // pivot relative to the variance of that coordinate
        if !(d * d > 1e-12 * cov[(i, i)].max(f64::MIN_POSITIVE)) || cov[(i, i)] <= 1e-300 {
            return Err(Error::SingularCovariance);
        }
        logdet += 2.0 * d.ln();
    }
    Ok((logdet, ch))
}

/// ½ log((2πe)^r det Σ̂) with Σ̂ the unbiased sample covariance.
pub fn gaussian_entropy(points: &[SummaryVector]) -> Result<EntropyEstimate> {
    let r = check_points(points)?;
    if points.len() < r + 2 {
        return Err(Error::TooFewPoints {
            needed: r + 2,
            got: points.len(),
        });
    }
    let (_, cov) = sample_covariance(points)?;
    let (logdet, _) = covariance_logdet(&cov)?;
    Ok(EntropyEstimate {
        value: 0.5 * (r as f64 * (2.0 * PI * std::f64::consts::E).ln() + logdet),
        method: EntropyMethod::Gaussian,
        k: 0,
    })
}
