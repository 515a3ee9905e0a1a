//! Nearest-neighbor conditional prediction.
//!
//! Each test point conditions on its `m` nearest training points in the metric
//! scaled by the fitted ranges, and the Gaussian conditional on that block is
//! computed exactly. Test points never condition on one another.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{KernelParams, Matern};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, dot, solve_lower};
use crate::points::{squared_distance, PointSet};
use crate::vecchia::kdtree::{nearest_exhaustive, KdTree, Neighbors};
use crate::vecchia::EXHAUSTIVE_BELOW;

/// Gaussian predictive distribution at one test point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
    /// Index of the test point this prediction belongs to.
    pub test_ref: usize,
}

impl PredictiveDistribution {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Predictions for a batch of test points.
#[derive(Debug, Clone, Default)]
pub struct Predictions {
    pub points: Vec<PredictiveDistribution>,
    /// Variances that came out slightly negative and were set to zero.
    pub clamped: usize,
    /// Test points whose conditioning block could not be factorized.
    pub failed: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictOptions {
    pub m: usize,
    /// Add the nugget to the predictive variance (scores against noisy observations).
    pub include_nugget: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            m: 100,
            include_nugget: true,
        }
    }
}

const CHUNK: usize = 64;

enum Outcome {
    Ok(PredictiveDistribution, bool),
    Failed(usize),
}

/// m-nearest-neighbor kriging of `test` from training points `train` with responses `z`.
pub fn predict_points(
    train: &PointSet,
    z: &[f64],
    params: &KernelParams,
    test: &PointSet,
    options: PredictOptions,
) -> Result<Predictions> {
    params.validate()?;
    let n = train.len();
    if n == 0 {
        return Err(Error::EmptyDataset("no training points to predict from".into()));
    }
    if z.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: z.len() });
    }
    for d in [train.dim(), test.dim()] {
        if d != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                got: d,
            });
        }
    }
    if options.m == 0 {
        return Err(Error::InvalidParams("prediction needs m >= 1".into()));
    }
    let m = if options.m > n {
        log::warn!("m = {} exceeds the {n} training points; using all of them", options.m);
        n
    } else {
        options.m
    };
    let inv: Vec<f64> = params.ranges.iter().map(|r| 1.0 / r).collect();
    let strain = train.scaled(&inv);
    let stest = test.scaled(&inv);
    let tree = (n >= EXHAUSTIVE_BELOW).then(|| KdTree::new(&strain));
    let matern = Matern::new(params.sigma2, params.nu);
    let var0 = params.sigma2 + params.tau2;
    let t = test.len();

    let outcomes: Vec<Vec<Outcome>> = (0..t.div_ceil(CHUNK))
        .into_par_iter()
        .map_init(
            || (Neighbors::new(m), vec![0.0; m * m], vec![0.0; m], vec![0.0; m]),
            |(nb, kb, k, a), c| {
                (c * CHUNK..((c + 1) * CHUNK).min(t))
                    .map(|ti| {
                        let q = stest.row(ti);
                        nb.reset(m);
                        match &tree {
                            Some(tr) => tr.nearest(q, n, nb),
                            None => nearest_exhaustive(&strain, q, n, nb),
                        }
                        let idx: Vec<usize> = nb.indices().collect();
                        for (r, &i) in idx.iter().enumerate() {
                            let pr = strain.row(i);
                            for (s, &j) in idx[..r].iter().enumerate() {
                                kb[r * m + s] = matern.cov(squared_distance(pr, strain.row(j)).sqrt());
                            }
                            kb[r * m + r] = var0;
                            k[r] = matern.cov(squared_distance(pr, q).sqrt());
                            a[r] = z[i] - params.mu;
                        }
                        if cholesky_in_place(kb, m).is_err() {
                            return Outcome::Failed(ti);
                        }
                        solve_lower(kb, m, m, k);
                        solve_lower(kb, m, m, a);
                        let mean = params.mu + dot(k, a);
                        let mut variance = params.sigma2 - dot(k, k);
                        let clamped = variance < 0.0;
                        if clamped {
                            variance = 0.0;
                        }
                        if options.include_nugget {
                            variance += params.tau2;
                        }
                        if !(mean.is_finite() && variance.is_finite()) {
                            return Outcome::Failed(ti);
                        }
                        Outcome::Ok(
                            PredictiveDistribution {
                                mean,
                                variance,
                                test_ref: ti,
                            },
                            clamped,
                        )
                    })
                    .collect()
            },
        )
        .collect();

    let mut out = Predictions::default();
    for o in outcomes.into_iter().flatten() {
        match o {
            Outcome::Ok(p, clamped) => {
                out.clamped += usize::from(clamped);
                out.points.push(p);
            }
            Outcome::Failed(i) => out.failed.push(i),
        }
    }
    if !out.failed.is_empty() {
        log::warn!("{} test point(s) skipped: conditioning block not positive definite", out.failed.len());
    }
    Ok(out)
}
