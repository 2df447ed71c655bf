//! Small dense solvers for the surrogate regressions.

/// Solves `a x = b` for square `a` (row-major, `n x n`) by Gaussian
/// elimination with partial pivoting. `None` when a pivot falls below
/// `1e-12` times the largest absolute entry.
pub fn solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if n == 0 {
        return Some(Vec::new());
    }
    if scale == 0.0 {
        return None;
    }
    let tol = 1e-12 * scale;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col].abs() <= tol {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            b.swap(pivot, col);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[row * n + k] -= f * a[col * n + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    Some(x)
}

/// Solves the normal equations `(X^T W X + alpha I) beta = X^T W y` from
/// their accumulated forms. A singular system is retried with a ridge of
/// `1e-8` times the mean diagonal, then with growing ridges, so a solution
/// is always returned.
pub fn solve_normal_equations(mut gram: Vec<f64>, rhs: Vec<f64>, alpha: f64) -> Vec<f64> {
    let n = rhs.len();
    for i in 0..n {
        gram[i * n + i] += alpha;
    }
    if let Some(x) = solve(gram.clone(), rhs.clone()) {
        return x;
    }
    let mean_diag = ((0..n).map(|i| gram[i * n + i].abs()).sum::<f64>() / n.max(1) as f64).max(1e-300);
    let mut ridge = 1e-8 * mean_diag;
    loop {
        let mut g = gram.clone();
        for i in 0..n {
            g[i * n + i] += ridge;
        }
        if let Some(x) = solve(g, rhs.clone()) {
            return x;
        }
        ridge *= 10.0;
        if !ridge.is_finite() {
            return vec![0.0; n];
        }
    }
}

/// Weighted ridge regression with an unpenalized intercept. Returns
/// `(coefficients, intercept)`.
pub fn weighted_ridge(rows: &[Vec<f64>], y: &[f64], weights: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let p = rows.first().map_or(0, Vec::len);
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return (vec![0.0; p], 0.0);
    }
    let mut x_mean = vec![0.0; p];
    let mut y_mean = 0.0;
    for ((r, &yi), &w) in rows.iter().zip(y).zip(weights) {
        for (m, v) in x_mean.iter_mut().zip(r) {
            *m += w * v;
        }
        y_mean += w * yi;
    }
    x_mean.iter_mut().for_each(|m| *m /= wsum);
    y_mean /= wsum;

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut centered = vec![0.0; p];
    for ((r, &yi), &w) in rows.iter().zip(y).zip(weights) {
        for ((c, v), m) in centered.iter_mut().zip(r).zip(&x_mean) {
            *c = v - m;
        }
        let yc = yi - y_mean;
        for i in 0..p {
            let wi = w * centered[i];
            rhs[i] += wi * yc;
            for j in 0..p {
                gram[i * p + j] += wi * centered[j];
            }
        }
    }
    let beta = solve_normal_equations(gram, rhs, alpha);
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    (beta, intercept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_none_but_normal_equations_still_solve() {
        assert!(solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0]).is_none());
        let x = solve_normal_equations(vec![1.0, 1.0, 1.0, 1.0], vec![2.0, 2.0], 0.0);
        assert!(x.iter().all(|v| v.is_finite()));
        assert!((x[0] + x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn ridge_without_penalty_recovers_plane() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 5) as f64, (i / 5) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let (beta, b0) = weighted_ridge(&rows, &y, &[1.0; 20], 0.0);
        assert!((beta[0] - 2.0).abs() < 1e-10 && (beta[1] + 0.5).abs() < 1e-10 && (b0 - 1.5).abs() < 1e-10);
    }
}
