use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::predict::PredictiveDistribution;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Continuous ranked probability score of `N(mean, sd^2)` against `obs`.
pub fn crps_gaussian(mean: f64, sd: f64, obs: f64) -> Result<f64> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidParams(format!("CRPS needs a positive standard deviation, got {sd}")));
    }
    let z = (obs - mean) / sd;
    Ok(sd * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - FRAC_1_SQRT_PI))
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub q3ae: f64,
    pub mdae: f64,
    pub mae: f64,
    /// Missing when the test responses have zero spread.
    pub r2: Option<f64>,
    pub crps: f64,
    pub n_test: usize,
}

/// Scores predictions against observations; `preds[i]` pairs with `obs[i]`.
pub fn evaluate(preds: &[PredictiveDistribution], obs: &[f64]) -> Result<MetricsReport> {
    if preds.len() != obs.len() {
        return Err(Error::LengthMismatch {
            expected: obs.len(),
            got: preds.len(),
        });
    }
    let n = obs.len();
    if n == 0 {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let nf = n as f64;
    let errors: Vec<f64> = preds.iter().zip(obs).map(|(p, y)| y - p.mean).collect();
    let sse: f64 = errors.iter().map(|e| e * e).sum();
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mean_obs = obs.iter().sum::<f64>() / nf;
    let sst: f64 = obs.iter().map(|y| (y - mean_obs).powi(2)).sum();
    let mut crps = 0.0;
    for (p, y) in preds.iter().zip(obs) {
        crps += if p.variance > 0.0 {
            crps_gaussian(p.mean, p.sd(), *y)?
        } else {
            // a point mass scores its absolute error
            (y - p.mean).abs()
        };
    }
    Ok(MetricsReport {
        rmse: (sse / nf).sqrt(),
        q3ae: quantile_sorted(&abs, 0.75),
        mdae: quantile_sorted(&abs, 0.5),
        mae: abs.iter().sum::<f64>() / nf,
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
        crps: crps / nf,
        n_test: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn preds(means: &[f64], var: f64) -> Vec<PredictiveDistribution> {
        means
            .iter()
            .enumerate()
            .map(|(i, &m)| PredictiveDistribution {
                mean: m,
                variance: var,
                test_ref: i,
            })
            .collect()
    }

    #[test]
    fn crps_reference_points() {
        let c = crps_gaussian(0.0, 1.0, 0.0).unwrap();
        assert!((c - (2f64.sqrt() - 1.0) / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((c - 0.233695).abs() < 1e-6);
        let far = crps_gaussian(0.0, 1.0, 8.0).unwrap();
        assert!(((far - (8.0 - FRAC_1_SQRT_PI)) / far).abs() < 1e-3);
        assert!(crps_gaussian(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn metric_examples() {
        let r = evaluate(&preds(&[1.0, 2.0, 3.0], 1.0), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.rmse, r.mae, r.mdae, r.q3ae, r.r2), (0.0, 0.0, 0.0, 0.0, Some(1.0)));
        let r = evaluate(&preds(&[0.0, 0.0], 1.0), &[1.0, -1.0]).unwrap();
        assert_eq!((r.rmse, r.mae, r.mdae), (1.0, 1.0, 1.0));
        let r = evaluate(&preds(&[0.0; 4], 1.0), &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.q3ae, 2.25);
        assert_eq!(r.mdae, 1.5);
        let r = evaluate(&preds(&[1.0, 2.0], 1.0), &[5.0, 5.0]).unwrap();
        assert_eq!(r.r2, None);
    }

    proptest! {
        #[test]
        fn homogeneous(m in -5.0f64..5.0, s in 0.05f64..5.0, y in -5.0f64..5.0, c in 0.1f64..10.0) {
            let a = crps_gaussian(c * m, c * s, c * y).unwrap();
            let b = c * crps_gaussian(m, s, y).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn minimized_at_the_observation(s in 0.1f64..3.0, y in -3.0f64..3.0) {
            let best = crps_gaussian(y, s, y).unwrap();
            for k in 1..=40 {
                let d = k as f64 * 0.05;
                prop_assert!(crps_gaussian(y + d, s, y).unwrap() > best);
                prop_assert!(crps_gaussian(y - d, s, y).unwrap() > best);
            }
        }

        #[test]
        fn orderings_and_permutation_invariance(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.01f64..4.0), 1..50),
            rot in 0usize..50,
        ) {
            let p: Vec<PredictiveDistribution> = pairs.iter().enumerate()
                .map(|(i, &(m, _, v))| PredictiveDistribution { mean: m, variance: v, test_ref: i }).collect();
            let y: Vec<f64> = pairs.iter().map(|t| t.1).collect();
            let r = evaluate(&p, &y).unwrap();
            prop_assert!(r.mdae <= r.q3ae);
            prop_assert!(r.mae <= r.rmse + 1e-12);
            if let Some(r2) = r.r2 { prop_assert!(r2 <= 1.0); }
            let k = rot % p.len();
            let mut p2 = p.clone();
            p2.rotate_left(k);
            let mut y2 = y.clone();
            y2.rotate_left(k);
            let r2 = evaluate(&p2, &y2).unwrap();
            prop_assert!((r.rmse - r2.rmse).abs() < 1e-12);
            prop_assert!((r.crps - r2.crps).abs() < 1e-12);
            prop_assert_eq!(r.mdae, r2.mdae);
            prop_assert_eq!(r.q3ae, r2.q3ae);
        }
    }
}
