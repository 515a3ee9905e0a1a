//! Small dense kernels on flat row-major buffers.
//!
//! The Vecchia code factorizes one (m+1)x(m+1) block per observation, so these
//! work in place on caller-owned scratch space instead of allocating.

/// Lower Cholesky factor in place; only the lower triangle of `a` is read and
/// the strict upper triangle is left untouched. On failure returns the pivot
/// index and the offending Schur complement.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<(), (usize, f64)> {
    debug_assert!(a.len() >= n * n);
    for j in 0..n {
        let row_j = j * n;
        let mut d = a[row_j + j];
        for k in 0..j {
            d -= a[row_j + k] * a[row_j + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err((j, d));
        }
        let d = d.sqrt();
        a[row_j + j] = d;
        let inv = 1.0 / d;
        for i in j + 1..n {
            let row_i = i * n;
            let mut s = a[row_i + j];
            for k in 0..j {
                s -= a[row_i + k] * a[row_j + k];
            }
            a[row_i + j] = s * inv;
        }
    }
    Ok(())
}

/// Solves `L x = b` for the leading `n` rows of a lower factor with stride `ld`.
pub fn solve_lower(l: &[f64], ld: usize, n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * ld..i * ld + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
        b[i] = (b[i] - s) / l[i * ld + i];
    }
}

/// Solves `L^T x = b` for the leading `n` rows of a lower factor with stride `ld`.
pub fn solve_lower_transpose(l: &[f64], ld: usize, n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let xi = b[i] / l[i * ld + i];
        b[i] = xi;
        for k in 0..i {
            b[k] -= l[i * ld + k] * xi;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise (cascade) summation; the result depends only on the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Outcome of a rank-revealing least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// Columns judged linearly dependent; their coefficients are zero.
    pub dropped: Vec<usize>,
}

/// Minimizes `||A x - b||` by Householder QR with column pivoting.
///
/// `a` is column-major `rows x cols`. The first `fixed` columns are factored
/// in order and never pivoted away. A column is dropped when its
/// remaining norm falls below `rcond` times the largest initial column norm.
pub fn pivoted_least_squares(
    a: &[f64],
    rows: usize,
    cols: usize,
    b: &[f64],
    fixed: usize,
    rcond: f64,
) -> LeastSquares {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    let mut a = a.to_vec();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..cols).collect();
    let col_norm = |a: &[f64], c: usize, from: usize| -> f64 {
        a[c * rows + from..(c + 1) * rows].iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let max_norm = (0..cols).map(|c| col_norm(&a, c, 0)).fold(0.0, f64::max);
    let tol = rcond * max_norm;

    let steps = rows.min(cols);
    let mut rank = 0;
    for k in 0..steps {
        // choose pivot among the remaining columns
        let mut best = k;
        if k >= fixed {
            let mut best_norm = -1.0;
            for c in k..cols {
                let nrm = col_norm(&a, c, k);
                if nrm > best_norm {
                    best_norm = nrm;
                    best = c;
                }
            }
        }
        if best != k {
            for r in 0..rows {
                a.swap(k * rows + r, best * rows + r);
            }
            perm.swap(k, best);
        }
        let norm = col_norm(&a, k, k);
        if norm <= tol {
            break;
        }
        // Householder reflector for column k
        let alpha = if a[k * rows + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k * rows + k..(k + 1) * rows].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in k..cols {
                let col = &mut a[c * rows + k..(c + 1) * rows];
                let s = 2.0 * dot(&v, col) / vnorm2;
                for (x, vi) in col.iter_mut().zip(&v) {
                    *x -= s * vi;
                }
            }
            let s = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
            for (x, vi) in rhs[k..].iter_mut().zip(&v) {
                *x -= s * vi;
            }
        }
        rank = k + 1;
    }

    let mut x_perm = vec![0.0; cols];
    for k in (0..rank).rev() {
        let mut s = rhs[k];
        for j in k + 1..rank {
            s -= a[j * rows + k] * x_perm[j];
        }
        x_perm[k] = s / a[k * rows + k];
    }
    let mut coefficients = vec![0.0; cols];
    for k in 0..cols {
        coefficients[perm[k]] = x_perm[k];
    }
    let mut dropped: Vec<usize> = perm[rank..].to_vec();
    dropped.sort_unstable();
    LeastSquares {
        coefficients,
        rank,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_and_solves() {
        // A = [[4, 2, 0.4], [2, 5, 1], [0.4, 1, 3]]
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let mut l = a;
        cholesky_in_place(&mut l, 3).unwrap();
        // reconstruct
        for i in 0..3 {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-14);
            }
        }
        let b = [1.0, -2.0, 0.5];
        let mut x = b;
        solve_lower(&l, 3, 3, &mut x);
        solve_lower_transpose(&l, 3, 3, &mut x);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let mut a = [1.0, 0.0, 1.0, 1.0];
        assert_eq!(cholesky_in_place(&mut a, 2), Err((1, 0.0)));
    }

    #[test]
    fn least_squares_exact_and_rank_deficient() {
        // columns: 1, x, 2x (dependent)
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let rows = xs.len();
        let mut a = Vec::new();
        a.extend(xs.iter().map(|_| 1.0));
        a.extend(xs.iter().copied());
        a.extend(xs.iter().map(|x| 2.0 * x));
        let b: Vec<f64> = xs.iter().map(|x| 1.5 - 0.5 * x).collect();
        let ls = pivoted_least_squares(&a, rows, 3, &b, 1, 1e-10);
        assert_eq!(ls.rank, 2);
        assert_eq!(ls.dropped.len(), 1);
        let fit: Vec<f64> = xs
            .iter()
            .map(|x| ls.coefficients[0] + ls.coefficients[1] * x + ls.coefficients[2] * 2.0 * x)
            .collect();
        for (f, y) in fit.iter().zip(&b) {
            assert!((f - y).abs() < 1e-12);
        }
        assert!((ls.coefficients[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_for_exact_values() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }
}
