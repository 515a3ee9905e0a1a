use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::condsets::CondSets;
use super::VecchiaLayout;
use crate::covariance::{KernelParams, Matern};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, pairwise_sum, solve_lower_transpose};
use crate::points::{squared_distance, PointSet};

/// Columns handled per parallel task; fixed so that sums do not depend on the thread count.
pub(super) const COLUMN_CHUNK: usize = 256;

/// Upper-triangular sparse factor in compressed-column form.
///
/// Column `j` stores its conditioning rows in ascending order followed by the
/// diagonal entry, so `Sigma^{-1} ~ U U^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseU {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseU {
    pub fn n(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    #[inline]
    pub fn diag(&self, j: usize) -> f64 {
        self.values[self.col_ptr[j + 1] - 1]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut d = DMatrix::zeros(n, n);
        for j in 0..n {
            let (rows, vals) = self.column(j);
            for (&r, &v) in rows.iter().zip(vals) {
                d[(r, j)] = v;
            }
        }
        d
    }

    /// `U^T x`.
    pub fn transpose_mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|j| {
                let (rows, vals) = self.column(j);
                rows.iter().zip(vals).map(|(&r, v)| v * x[r]).sum()
            })
            .collect()
    }

    /// Solves `U^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut x = vec![0.0; n];
        for j in 0..n {
            let (rows, vals) = self.column(j);
            let k = rows.len() - 1;
            let s: f64 = rows[..k].iter().zip(&vals[..k]).map(|(&r, v)| v * x[r]).sum();
            x[j] = (b[j] - s) / vals[k];
        }
        x
    }
}

/// Fills the lower triangle of the covariance (with nugget on the diagonal) of
/// `set ++ [i]` into `kb` (row-major, stride `b`). Returns `b`.
#[inline]
pub(super) fn fill_cov_block(
    scaled: &PointSet,
    set: &[usize],
    i: usize,
    matern: &Matern,
    tau2: f64,
    kb: &mut [f64],
) -> Result<usize> {
    let b = set.len() + 1;
    let var = matern.sigma2() + tau2;
    let at = |r: usize| if r + 1 == b { i } else { set[r] };
    for r in 0..b {
        let pr = scaled.row(at(r));
        for s in 0..r {
            let u = squared_distance(pr, scaled.row(at(s))).sqrt();
            let c = matern.cov(u);
            if !c.is_finite() {
                return Err(Error::Bessel { nu: matern.nu(), x: u });
            }
            kb[r * b + s] = c;
        }
        kb[r * b + r] = var;
    }
    Ok(b)
}

/// Maps a failed block factorization onto the column-level error.
pub(super) fn factor_error(column: usize, b: usize, pivot: usize, value: f64) -> Error {
    if pivot + 1 == b {
        Error::ConditionalVariance { column, value }
    } else {
        Error::NotPositiveDefinite { column }
    }
}

/// Computes `U` for ordered points and their conditioning sets.
pub fn compute_u(ordered: &PointSet, cond: &CondSets, params: &KernelParams) -> Result<SparseU> {
    params.validate()?;
    if ordered.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: ordered.dim(),
        });
    }
    let n = ordered.len();
    if cond.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: cond.len(),
        });
    }
    let inv: Vec<f64> = params.ranges.iter().map(|r| 1.0 / r).collect();
    let scaled = ordered.scaled(&inv);
    let matern = Matern::new(params.sigma2, params.nu);
    let bmax = cond.max_size() + 1;

    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(COLUMN_CHUNK))
        .into_par_iter()
        .map_init(
            || vec![0.0; bmax * bmax],
            |kb, c| -> Result<Vec<f64>> {
                let mut out = Vec::new();
                for i in c * COLUMN_CHUNK..((c + 1) * COLUMN_CHUNK).min(n) {
                    let set = cond.get(i);
                    let b = fill_cov_block(&scaled, set, i, &matern, params.tau2, kb)?;
                    cholesky_in_place(&mut kb[..b * b], b).map_err(|(p, d)| factor_error(i, b, p, d))?;
                    // last row of L^{-1}: solve L^T w = e_b
                    let start = out.len();
                    out.resize(start + b, 0.0);
                    out[start + b - 1] = 1.0;
                    solve_lower_transpose(kb, b, b, &mut out[start..]);
                }
                Ok(out)
            },
        )
        .collect::<Result<_>>()?;

    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::with_capacity(cond.nnz() + n);
    col_ptr.push(0);
    for (i, set) in cond.iter().enumerate() {
        row_idx.extend_from_slice(set);
        row_idx.push(i);
        col_ptr.push(row_idx.len());
    }
    let values: Vec<f64> = chunks.into_iter().flatten().collect();
    debug_assert_eq!(values.len(), row_idx.len());
    Ok(SparseU {
        col_ptr,
        row_idx,
        values,
    })
}

/// `-(n/2) log 2 pi + sum_j log U_jj - |U^T (z - mu)|^2 / 2`, with `z` in factor order.
pub fn vecchia_loglik(u: &SparseU, z: &[f64], mu: f64) -> Result<f64> {
    let n = u.n();
    if z.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: z.len(),
        });
    }
    let terms: Vec<f64> = (0..n)
        .map(|j| {
            let (rows, vals) = u.column(j);
            let y: f64 = rows.iter().zip(vals).map(|(&r, v)| v * (z[r] - mu)).sum();
            u.diag(j).ln() - 0.5 * y * y
        })
        .collect();
    let ll = pairwise_sum(&terms) - 0.5 * n as f64 * (2.0 * PI).ln();
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::NonFinite("Vecchia log-likelihood".into()))
    }
}

/// Draws `z = mu + U^{-T} eps`, whose covariance is the Vecchia-implied `(U U^T)^{-1}`.
pub fn simulate_vecchia<R: Rng + ?Sized>(u: &SparseU, mu: f64, rng: &mut R) -> Vec<f64> {
    let eps: Vec<f64> = (0..u.n()).map(|_| rng.sample(StandardNormal)).collect();
    u.solve_transpose(&eps).into_iter().map(|x| x + mu).collect()
}

/// Ordering, conditioning sets and the factor they produce.
#[derive(Debug, Clone)]
pub struct VecchiaFactor {
    pub order: Vec<usize>,
    pub cond_sets: CondSets,
    pub u: SparseU,
}

impl VecchiaFactor {
    /// `points` in their original order; the layout supplies the permutation.
    pub fn new(points: &PointSet, layout: &VecchiaLayout, params: &KernelParams) -> Result<Self> {
        let u = compute_u(&layout.ordered_points(points), &layout.cond_sets, params)?;
        Ok(VecchiaFactor {
            order: layout.order.clone(),
            cond_sets: layout.cond_sets.clone(),
            u,
        })
    }

    /// Log-likelihood of responses given in original order.
    pub fn loglik(&self, z: &[f64], mu: f64) -> Result<f64> {
        if z.len() != self.order.len() {
            return Err(Error::LengthMismatch {
                expected: self.order.len(),
                got: z.len(),
            });
        }
        let zo: Vec<f64> = self.order.iter().map(|&i| z[i]).collect();
        vecchia_loglik(&self.u, &zo, mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::cov_block;

    fn params() -> KernelParams {
        KernelParams {
            sigma2: 1.4,
            ranges: vec![0.7],
            nu: 0.9,
            tau2: 0.3,
            mu: 0.5,
        }
    }

    #[test]
    fn single_point() {
        let pts = PointSet::new(1, vec![2.0]);
        let u = compute_u(&pts, &CondSets::from_sets(&[vec![]]), &params()).unwrap();
        assert!((u.diag(0) - 1.7f64.powf(-0.5)).abs() < 1e-15);
        let ll = vecchia_loglik(&u, &[0.5], 0.5).unwrap();
        assert!((ll + 0.5 * (2.0 * PI * 1.7).ln()).abs() < 1e-14);
    }

    #[test]
    fn two_points_recover_the_precision() {
        let pts = PointSet::new(1, vec![0.0, 0.4]);
        let u = compute_u(&pts, &CondSets::from_sets(&[vec![], vec![0]]), &params()).unwrap();
        let d = u.to_dense();
        let prec = cov_block(&pts, &pts, &params(), true).unwrap().try_inverse().unwrap();
        assert!((&d * d.transpose() - prec).amax() < 1e-12);
        assert_eq!(u.nnz(), 3);
    }

    #[test]
    fn duplicated_points_without_nugget_fail_by_column() {
        let mut p = params();
        p.tau2 = 0.0;
        let pts = PointSet::new(1, vec![0.0, 1.0, 0.0]);
        let err = compute_u(&pts, &CondSets::from_sets(&[vec![], vec![0], vec![0, 1]]), &p).unwrap_err();
        assert!(matches!(err, Error::ConditionalVariance { column: 2, .. }), "{err:?}");
    }

    #[test]
    fn transpose_solve_inverts_transpose_mul() {
        let pts = PointSet::new(1, vec![0.0, 0.4, 1.1, -0.3]);
        let sets = CondSets::from_sets(&[vec![], vec![0], vec![0, 1], vec![0, 2]]);
        let u = compute_u(&pts, &sets, &params()).unwrap();
        let x = [0.3, -1.0, 2.0, 0.7];
        let back = u.solve_transpose(&u.transpose_mul(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
