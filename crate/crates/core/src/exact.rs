//! Dense Gaussian-process likelihood and kriging, used as the reference
//! implementation for everything Vecchia-based at small sizes.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::covariance::{cov_block, KernelParams};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::predict::{Predictions, PredictiveDistribution};

/// Largest problem the dense oracle accepts unless told otherwise.
pub const DEFAULT_ORACLE_CAP: usize = 3000;

pub(crate) fn factor(cov: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = cov.nrows();
    Cholesky::new(cov).ok_or_else(|| {
        Error::Factorization(format!(
            "{n}x{n} covariance is not positive definite (invalid parameters or repeated inputs without nugget)"
        ))
    })
}

/// `log N(resid; 0, L L^T)`.
pub(crate) fn gaussian_loglik(chol: &Cholesky<f64, Dyn>, resid: &DVector<f64>) -> f64 {
    let n = resid.len() as f64;
    let half_logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let y = chol.l().solve_lower_triangular(resid).expect("triangular factor is nonsingular");
    -half_logdet - 0.5 * y.norm_squared() - 0.5 * n * (2.0 * PI).ln()
}

/// A fully factorized Gaussian process on a small point set.
#[derive(Debug, Clone)]
pub struct DenseGP {
    points: PointSet,
    params: KernelParams,
    chol: Cholesky<f64, Dyn>,
    resid: DVector<f64>,
    alpha: DVector<f64>,
}

impl DenseGP {
    pub fn new(points: &PointSet, z: &[f64], params: &KernelParams) -> Result<Self> {
        Self::with_cap(points, z, params, DEFAULT_ORACLE_CAP)
    }

    pub fn with_cap(points: &PointSet, z: &[f64], params: &KernelParams, cap: usize) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyDataset("dense GP needs at least one point".into()));
        }
        if n > cap {
            return Err(Error::InvalidParams(format!("{n} points exceed the dense oracle cap of {cap}")));
        }
        if z.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: z.len() });
        }
        let chol = factor(cov_block(points, points, params, true)?)?;
        let resid = DVector::from_iterator(n, z.iter().map(|v| v - params.mu));
        let alpha = chol.solve(&resid);
        Ok(DenseGP {
            points: points.clone(),
            params: params.clone(),
            chol,
            resid,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn loglik(&self) -> f64 {
        gaussian_loglik(&self.chol, &self.resid)
    }

    /// Kriging predictions at `test`, indexed by position in `test`.
    pub fn predict(&self, test: &PointSet, include_nugget: bool) -> Result<Predictions> {
        let k = cov_block(&self.points, test, &self.params, false)?;
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k)
            .expect("triangular factor is nonsingular");
        let mut out = Vec::with_capacity(test.len());
        let mut clamped = 0;
        for t in 0..test.len() {
            let mean = self.params.mu + k.column(t).dot(&self.alpha);
            let mut var = self.params.sigma2 - v.column(t).norm_squared();
            if var < 0.0 {
                clamped += 1;
                log::debug!("clamped predictive variance {var:e} at test point {t}");
                var = 0.0;
            }
            if include_nugget {
                var += self.params.tau2;
            }
            out.push(PredictiveDistribution {
                mean,
                variance: var,
                test_ref: t,
            });
        }
        Ok(Predictions {
            points: out,
            clamped,
            failed: Vec::new(),
        })
    }
}

/// Exact log-likelihood of `z` at `points`.
pub fn exact_loglik(points: &PointSet, z: &[f64], params: &KernelParams) -> Result<f64> {
    Ok(DenseGP::new(points, z, params)?.loglik())
}

/// Exact kriging at `test` conditioned on every training point.
pub fn exact_predict(
    points: &PointSet,
    z: &[f64],
    params: &KernelParams,
    test: &PointSet,
    include_nugget: bool,
) -> Result<Predictions> {
    DenseGP::new(points, z, params)?.predict(test, include_nugget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(tau2: f64) -> KernelParams {
        KernelParams {
            sigma2: 0.8,
            ranges: vec![1.0, 2.0],
            nu: 1.3,
            tau2,
            mu: 1.5,
        }
    }

    #[test]
    fn univariate() {
        let p = KernelParams {
            sigma2: 0.75,
            ranges: vec![1.0],
            nu: 0.5,
            tau2: 0.25,
            mu: 2.0,
        };
        let ll = exact_loglik(&PointSet::new(1, vec![0.0]), &[2.0], &p).unwrap();
        assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn distant_points_are_independent() {
        let p = params(0.2);
        let pts = PointSet::new(2, vec![0.0, 0.0, 1e6, -1e6]);
        let z = [2.0, 0.1];
        let ll = exact_loglik(&pts, &z, &p).unwrap();
        let uni = |v: f64| -0.5 * (2.0 * PI * 1.0).ln() - 0.5 * (v - 1.5f64).powi(2);
        assert!((ll - uni(2.0) - uni(0.1)).abs() < 1e-10);
    }

    #[test]
    fn interpolation_and_prior_reversion() {
        let p = params(0.0);
        let pts = PointSet::new(2, vec![0.0, 0.0, 1.0, 0.5, -0.7, 2.0]);
        let z = [0.3, 2.2, 1.0];
        let gp = DenseGP::new(&pts, &z, &p).unwrap();
        let at = gp.predict(&PointSet::new(2, vec![1.0, 0.5, 1e5, 1e5]), false).unwrap().points;
        assert!((at[0].mean - 2.2).abs() < 1e-10);
        assert!(at[0].variance.abs() < 1e-10);
        assert!((at[1].mean - 1.5).abs() < 1e-12);
        assert!((at[1].variance - 0.8).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_gives_equal_weights() {
        let p = params(0.1);
        let pts = PointSet::new(2, vec![-1.0, 0.0, 1.0, 0.0]);
        let mid = PointSet::new(2, vec![0.0, 0.0]);
        let a = exact_predict(&pts, &[1.0, 0.0], &p, &mid, true).unwrap().points[0];
        let b = exact_predict(&pts, &[0.0, 1.0], &p, &mid, true).unwrap().points[0];
        assert!((a.mean - b.mean).abs() < 1e-14);
        assert!(a.variance <= p.total_variance() && a.variance >= 0.0);
    }

    #[test]
    fn loglik_is_permutation_invariant() {
        let p = params(0.3);
        let pts = PointSet::new(2, vec![0.0, 0.0, 1.0, 0.5, -0.7, 2.0, 0.2, 0.2]);
        let z = [0.3, 2.2, 1.0, -0.4];
        let perm = [2, 0, 3, 1];
        let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        let a = exact_loglik(&pts, &z, &p).unwrap();
        let b = exact_loglik(&pts.select(&perm), &zp, &p).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn duplicates_without_nugget_fail() {
        let pts = PointSet::new(2, vec![0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            exact_loglik(&pts, &[1.0, 1.0], &params(0.0)),
            Err(Error::Factorization(_))
        ));
    }
}
