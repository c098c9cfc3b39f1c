//! Simplex-constrained empirical likelihood.
//!
//! Given constraint vectors `h_i = g(X_i) - g(X_o)`, the weights maximising
//! `prod m w_i` over the simplex subject to `sum w_i h_i = 0` have the form
//! `w_i = 1 / (m (1 + lambda' h_i))`, where `lambda` solves
//! `sum h_i / (1 + lambda' h_i) = 0`. The multiplier is found by damped Newton
//! on the convex dual
//!
//! ```text
//! F(lambda) = -sum_i log*(1 + lambda' h_i)
//! ```
//!
//! with `log*` the logarithm extended quadratically below `1/m`, which makes
//! `F` finite everywhere. When the origin lies outside the convex hull of the
//! `h_i`, `F` is unbounded below along some ray and the iterates run off to
//! infinity; that is how infeasibility is detected.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::value::LogValue;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Multiplier norm (on column-normalised constraints) past which the dual is
/// treated as divergent.
const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryVector(Vec<f64>);

impl SummaryVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("summary vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("summary vector"));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SummaryVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Row-major `m x r` matrix of constraint vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMatrix {
    data: Vec<f64>,
    m: usize,
    r: usize,
}

impl ConstraintMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: m });
        }
        let r = rows[0].len();
        if r == 0 {
            return Err(Error::InvalidArgument("constraint dimension is zero".into()));
        }
        let mut data = Vec::with_capacity(m * r);
        for row in rows {
            if row.len() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("constraint matrix"));
        }
        Ok(Self { data, m, r })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.r)
    }
}

/// `h_i = sims[i] - obs`.
pub fn compute_constraints(
    sims: &[SummaryVector],
    obs: &SummaryVector,
) -> Result<ConstraintMatrix> {
    if sims.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: sims.len(),
        });
    }
    let r = obs.len();
    let mut data = Vec::with_capacity(sims.len() * r);
    for s in sims {
        if s.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: s.len(),
            });
        }
        data.extend(s.as_slice().iter().zip(obs.as_slice()).map(|(a, b)| a - b));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("constraint matrix"));
    }
    Ok(ConstraintMatrix {
        data,
        m: sims.len(),
        r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElSolution {
    pub weights: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mean_log_weight: LogValue,
    pub feasible: bool,
    pub iterations: usize,
    pub residual_norm: f64,
}

impl ElSolution {
    pub fn mean_log_weight(&self) -> LogValue {
        self.mean_log_weight
    }
}

/// `(1/m) sum log w_i` for a feasible solution, log-zero otherwise.
pub fn mean_log_weight(sol: &ElSolution) -> LogValue {
    if !sol.feasible || sol.weights.iter().any(|&w| w <= 0.0) {
        return LogValue::LogZero;
    }
    let m = sol.weights.len() as f64;
    LogValue::from_f64(sol.weights.iter().map(|w| w.ln()).sum::<f64>() / m)
}

#[derive(Clone, Copy, Debug)]
struct PseudoLog {
    eps: f64,
    log_eps: f64,
}

impl PseudoLog {
    fn new(m: usize) -> Self {
        let eps = 1.0 / m as f64;
        Self {
            eps,
            log_eps: eps.ln(),
        }
    }

    /// (value, first derivative, second derivative)
    #[inline]
    fn eval(&self, z: f64) -> (f64, f64, f64) {
        if z >= self.eps {
            (z.ln(), 1.0 / z, -1.0 / (z * z))
        } else {
            let t = z / self.eps;
            (
                self.log_eps - 1.5 + 2.0 * t - 0.5 * t * t,
                (2.0 - t) / self.eps,
                -1.0 / (self.eps * self.eps),
            )
        }
    }
}

/// Solves the empirical likelihood problem for the rows of `h`.
///
/// Returns `feasible = false` with zero weights when the origin is not in the
/// interior of the convex hull of the rows.
pub fn solve_el(h: &ConstraintMatrix, tol: f64, max_iter: usize) -> Result<ElSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let (m, r) = (h.m, h.r);
    let mf = m as f64;

    // Column scaling leaves the weights unchanged and keeps lambda O(1).
    let scale: Vec<f64> = (0..r)
        .map(|k| {
            let s = h.rows().map(|row| row[k].abs()).fold(0.0, f64::max);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let hs: Vec<f64> = h
        .data
        .chunks_exact(r)
        .flat_map(|row| row.iter().zip(&scale).map(|(v, s)| v / s))
        .collect();
    let rows = || hs.chunks_exact(r);

    let plog = PseudoLog::new(m);
    let objective = |lam: &DVector<f64>| -> f64 {
        -rows()
            .map(|row| plog.eval(1.0 + dot(lam.as_slice(), row)).0)
            .sum::<f64>()
    };

    let mut lambda = DVector::<f64>::zeros(r);
    let mut grad = DVector::<f64>::zeros(r);
    let mut hess = DMatrix::<f64>::zeros(r, r);
    let mut residual = f64::INFINITY;
    let mut polish = 0;

    for iter in 0..max_iter {
        grad.fill(0.0);
        hess.fill(0.0);
        let mut value = 0.0;
        let mut in_log_region = true;
        for row in rows() {
            let z = 1.0 + dot(lambda.as_slice(), row);
            let (f, d1, d2) = plog.eval(z);
            if z < plog.eps {
                in_log_region = false;
            }
            value -= f;
            for a in 0..r {
                grad[a] -= d1 * row[a];
                for b in 0..=a {
                    hess[(a, b)] -= d2 * row[a] * row[b];
                }
            }
        }
        for a in 0..r {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        // In the log region grad = -m * sum w_i h_i.
        residual = grad.amax() / mf;
        // Σw = 1 - λ'(Σ w h), so keep polishing while λ'residual is visible.
        if in_log_region && residual <= tol {
            let lam1: f64 = lambda.iter().map(|l| l.abs()).sum();
            if residual * (1.0 + lam1) <= 1e-13 || polish >= 3 {
                return Ok(finish(h, &scale, &lambda, iter));
            }
            polish += 1;
        }

        let step = newton_direction(&hess, &grad);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        // Inside the quadratic-convergence region objective changes are below
        // rounding and Armijo cannot be evaluated; take the full step.
        if -slope < 1e-12 && in_log_region {
            accepted = Some(&lambda + &step);
        }
        while accepted.is_none() && t > 1e-18 {
            let cand = &lambda + &step * t;
            let fc = objective(&cand);
            if fc <= value + 1e-4 * t * slope {
                accepted = Some(cand);
            } else {
                t *= 0.5;
            }
        }
        match accepted {
            Some(next) => lambda = next,
            None => {
                // No descent left at working precision.
                if in_log_region && residual <= tol.max(1e-12) * 1e3 {
                    return Ok(finish(h, &scale, &lambda, iter));
                }
                return if diverging(&lambda, h, &scale) {
                    Ok(infeasible(h, &scale, &lambda, iter, residual))
                } else {
                    Err(Error::NonConvergence {
                        iterations: iter,
                        residual,
                    })
                };
            }
        }
        if lambda.norm() > DIVERGENCE_NORM {
            return Ok(infeasible(h, &scale, &lambda, iter + 1, residual));
        }
    }
    if diverging(&lambda, h, &scale) {
        return Ok(infeasible(h, &scale, &lambda, max_iter, residual));
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Solves with the default tolerance and iteration budget.
pub fn solve_el_default(h: &ConstraintMatrix) -> Result<ElSolution> {
    solve_el(h, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let r = grad.len();
    let trace = hess.trace().abs().max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..20 {
        let mut a = hess.clone();
        for i in 0..r {
            a[(i, i)] += ridge;
        }
        if let Some(ch) = a.cholesky() {
            let d = -ch.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        ridge = if ridge == 0.0 { 1e-12 * trace } else { ridge * 100.0 };
    }
    -grad
}

/// Weights would be wildly unequal: some `1 + lambda' h_i` exceeds the smallest
/// by many orders of magnitude, i.e. mass is concentrating on a face of the hull.
fn diverging(lambda: &DVector<f64>, h: &ConstraintMatrix, scale: &[f64]) -> bool {
    if lambda.norm() > 1e6 {
        return true;
    }
    let lam: Vec<f64> = lambda.iter().zip(scale).map(|(l, s)| l / s).collect();
    let zs = h.rows().map(|row| 1.0 + dot(&lam, row));
    let (lo, hi) = zs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
        (lo.min(z), hi.max(z))
    });
    lo <= 0.0 || hi / lo > 1e10
}

fn unscale(lambda: &DVector<f64>, scale: &[f64]) -> Vec<f64> {
    lambda.iter().zip(scale).map(|(l, s)| l / s).collect()
}

fn finish(h: &ConstraintMatrix, scale: &[f64], lambda: &DVector<f64>, iterations: usize) -> ElSolution {
    let m = h.m as f64;
    let lam = unscale(lambda, scale);
    let weights: Vec<f64> = h.rows().map(|row| 1.0 / (m * (1.0 + dot(&lam, row)))).collect();
    let mut resid = vec![0.0; h.r];
    for (w, row) in weights.iter().zip(h.rows()) {
        for (acc, v) in resid.iter_mut().zip(row) {
            *acc += w * v;
        }
    }
    let residual_norm = resid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut sol = ElSolution {
        weights,
        lambda: lam,
        mean_log_weight: LogValue::LogZero,
        feasible: true,
        iterations,
        residual_norm,
    };
    if sol.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return infeasible(h, scale, lambda, iterations, residual_norm);
    }
    sol.mean_log_weight = mean_log_weight(&sol);
    sol
}

fn infeasible(
    h: &ConstraintMatrix,
    scale: &[f64],
    lambda: &DVector<f64>,
    iterations: usize,
    residual: f64,
) -> ElSolution {
    ElSolution {
        weights: vec![0.0; h.m],
        lambda: unscale(lambda, scale),
        mean_log_weight: LogValue::LogZero,
        feasible: false,
        iterations,
        residual_norm: residual,
    }
}
