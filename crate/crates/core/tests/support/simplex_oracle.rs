//! Brute-force reference for the empirical likelihood optimum.
//!
//! Nothing here touches the dual: a strictly positive feasible point is built
//! from barycentric representations, and `sum log w_i` is maximised over the
//! feasible polytope by compass search (a grid that is refined around the
//! incumbent until the mesh is below 1e-11) in an orthonormal basis of the
//! null space of the constraints.

#![allow(dead_code)]

/// Origin strictly inside the convex hull of the rows, decided geometrically.
/// Supports r = 1 (sign test) and r = 2 (angular gaps).
pub fn origin_inside(rows: &[Vec<f64>]) -> bool {
    match rows[0].len() {
        1 => {
            let lo = rows.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[0]).fold(f64::NEG_INFINITY, f64::max);
            lo < 0.0 && 0.0 < hi
        }
        2 => {
            let mut angles: Vec<f64> = rows.iter().map(|r| r[1].atan2(r[0])).collect();
            angles.sort_by(f64::total_cmp);
            let n = angles.len();
            let mut max_gap = angles[0] + 2.0 * std::f64::consts::PI - angles[n - 1];
            for w in angles.windows(2) {
                max_gap = max_gap.max(w[1] - w[0]);
            }
            max_gap < std::f64::consts::PI
        }
        _ => panic!("oracle supports r <= 2"),
    }
}

/// Solve a small dense system by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn subsets(m: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, size, &mut Vec::new(), &mut out);
    out
}

/// Convex weights (length m) reproducing `target` from the rows, if any
/// simplex of r + 1 rows contains it.
fn convex_representation(rows: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let m = rows.len();
    let r = rows[0].len();
    for s in subsets(m, r + 1) {
        // [rows^T; 1] c = [target; 1]
        let mut a = vec![vec![0.0; r + 1]; r + 1];
        for (col, &i) in s.iter().enumerate() {
            for k in 0..r {
                a[k][col] = rows[i][k];
            }
            a[r][col] = 1.0;
        }
        let mut b = target.to_vec();
        b.push(1.0);
        if let Some(c) = solve_dense(a, b) {
            if c.iter().all(|&v| v >= -1e-12) {
                let mut w = vec![0.0; m];
                for (&i, v) in s.iter().zip(c) {
                    w[i] = v.max(0.0);
                }
                return Some(w);
            }
        }
    }
    None
}

/// A feasible weight vector with every entry strictly positive.
fn interior_point(rows: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = rows.len();
    let mut acc = vec![0.0; m];
    for i in 0..m {
        let mut eps = 1.0;
        let mut found = None;
        for _ in 0..60 {
            let target: Vec<f64> = rows[i].iter().map(|v| -eps * v).collect();
            if let Some(c) = convex_representation(rows, &target) {
                found = Some(c);
                break;
            }
            eps *= 0.5;
        }
        let c = found?;
        // origin = (eps h_i + (-eps h_i)) / (1 + eps)
        for j in 0..m {
            acc[j] += (c[j] + if j == i { eps } else { 0.0 }) / (1.0 + eps);
        }
    }
    acc.iter_mut().for_each(|v| *v /= m as f64);
    Some(acc)
}

/// Orthonormal basis of {z : 1'z = 0, H'z = 0} by Gram-Schmidt.
fn null_space(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows.len();
    let r = rows[0].len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut constraint_dirs: Vec<Vec<f64>> = vec![vec![1.0; m]];
    for k in 0..r {
        constraint_dirs.push(rows.iter().map(|row| row[k]).collect());
    }
    let orthonormalise = |v: &mut Vec<f64>, against: &[Vec<f64>]| -> f64 {
        for _ in 0..2 {
            for b in against {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-10 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        n
    };
    let mut row_space: Vec<Vec<f64>> = Vec::new();
    for mut v in constraint_dirs {
        if orthonormalise(&mut v, &row_space) > 1e-10 {
            row_space.push(v);
        }
    }
    for i in 0..m {
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        let mut all = row_space.clone();
        all.extend(basis.iter().cloned());
        if orthonormalise(&mut v, &all) > 1e-8 {
            basis.push(v);
        }
    }
    basis
}

fn objective(w0: &[f64], basis: &[Vec<f64>], z: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..w0.len() {
        let w = w0[i] + basis.iter().zip(z).map(|(b, zk)| b[i] * zk).sum::<f64>();
        if w <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += w.ln();
    }
    total
}

/// Result of the brute-force search: `None` when infeasible, otherwise
/// `(mean log weight, weights)`.
pub fn brute_force_el(rows: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    if !origin_inside(rows) {
        return None;
    }
    let m = rows.len();
    let w0 = interior_point(rows)?;
    let basis = null_space(rows);
    let d = basis.len();
    let mut z = vec![0.0; d];
    let mut best = objective(&w0, &basis, &z);
    let mut step = 0.25;
    while step > 1e-11 {
        let mut improved = false;
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut cand = z.clone();
                cand[k] += sign * step;
                let f = objective(&w0, &basis, &cand);
                if f > best {
                    best = f;
                    z = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let w: Vec<f64> = (0..m)
        .map(|i| w0[i] + basis.iter().zip(&z).map(|(b, zk)| b[i] * zk).sum::<f64>())
        .collect();
    Some((best / m as f64, w))
}
