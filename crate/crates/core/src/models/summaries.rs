//! Generic summary statistics of a real-valued sample.

/// (1/n) Σ x_j^γ
pub fn raw_moment_summary(x: &[f64], gamma: u32) -> f64 {
    let n = x.len() as f64;
    match gamma {
        1 => x.iter().sum::<f64>() / n,
        2 => x.iter().map(|v| v * v).sum::<f64>() / n,
        _ => x.iter().map(|v| v.powi(gamma as i32)).sum::<f64>() / n,
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (position (n − 1)p, the "type 7" convention).
pub fn quantile_summary(x: &[f64], p: f64) -> f64 {
    let mut buf = x.to_vec();
    quantile_in_place(&mut buf, p)
}

/// As [`quantile_summary`] but reorders `buf` instead of copying.
pub fn quantile_in_place(buf: &mut [f64], p: f64) -> f64 {
    let n = buf.len();
    assert!(n > 0, "quantile of an empty sample");
    let p = p.clamp(0.0, 1.0);
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, &mut lo_val, rest) = buf.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || rest.is_empty() {
        return lo_val;
    }
    let hi_val = rest.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

/// Several quantiles of the same sample; `buf` is reordered.
pub fn quantiles_in_place(buf: &mut [f64], ps: &[f64]) -> Vec<f64> {
    ps.iter().map(|&p| quantile_in_place(buf, p)).collect()
}

/// (1/n) Σ 1{x_j ≥ γ}
pub fn upcrossing_summary(x: &[f64], gamma: f64) -> f64 {
    x.iter().filter(|&&v| v >= gamma).count() as f64 / x.len() as f64
}

/// Lag-one concordance of the centred squares: with Y_j = x_j² − mean(x²),
/// (1/n) Σ_{j≥2} [1{Y_j Y_{j−1} ≥ 0} − 1{Y_j Y_{j−1} < 0}].
pub fn g4_summary(x: &[f64]) -> f64 {
    let n = x.len();
    assert!(n >= 2, "g4 needs at least two observations");
    let mean_sq = raw_moment_summary(x, 2);
    let mut prev = x[0] * x[0] - mean_sq;
    let mut acc = 0i64;
    for v in &x[1..] {
        let y = v * v - mean_sq;
        acc += if y * prev >= 0.0 { 1 } else { -1 };
        prev = y;
    }
    acc as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        assert_eq!(raw_moment_summary(&[1.0, 2.0, 3.0], 1), 2.0);
        assert!((raw_moment_summary(&[1.0, 2.0, 3.0], 2) - 14.0 / 3.0).abs() < 1e-15);
        assert!((raw_moment_summary(&[1.0, 2.0, 3.0], 3) - 12.0).abs() < 1e-15);
    }

    #[test]
    fn quantiles() {
        assert_eq!(quantile_summary(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        let x = [3.0, -1.0, 7.0, 2.0];
        assert_eq!(quantile_summary(&x, 0.0), -1.0);
        assert_eq!(quantile_summary(&x, 1.0), 7.0);
        assert_eq!(quantile_summary(&[10.0, 20.0, 30.0, 40.0, 50.0], 0.25), 20.0);
        assert_eq!(quantile_summary(&[5.0], 0.3), 5.0);
        let mut buf = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantiles_in_place(&mut buf, &[0.25, 0.5, 0.75]), vec![1.75, 2.5, 3.25]);
    }

    #[test]
    fn upcrossings() {
        assert_eq!(upcrossing_summary(&[0.0, 0.0, 0.0], -1.0), 1.0);
        assert_eq!(upcrossing_summary(&[0.0, 0.0, 0.0], 1.0), 0.0);
        assert_eq!(upcrossing_summary(&[1.0, 2.0, 3.0, 4.0], 2.5), 0.5);
        assert_eq!(upcrossing_summary(&[1.0, 2.0], 2.0), 0.5);
    }

    #[test]
    fn g4_edge_cases() {
        assert_eq!(g4_summary(&[2.0, -2.0, 2.0, 2.0, -2.0]), 4.0 / 5.0);
        assert_eq!(g4_summary(&[1.0, 2.0, 1.0, 2.0]), -0.75);
    }
}
