//! Maximum-likelihood fitting of the Matérn model under the Vecchia likelihood.

use serde::{Deserialize, Serialize};

use crate::covariance::{nu_to_logit, KernelParams, ParamLayout, UnconstrainedParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::predict::{predict_points, PredictOptions, Predictions};
use crate::scoring::{fisher_scoring, Evaluation, ScoringObjective, ScoringOptions, StopReason, TraceEntry};
use crate::vecchia::{vecchia_score, CondSets, OrderingKind, ScoreLevel, VecchiaConfig, VecchiaFactor, VecchiaLayout};

/// Fewest observations `init_params` accepts.
pub const MIN_TRAIN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub gradient_tol: f64,
    /// Maximum step halvings per iteration.
    pub step_control: usize,
    pub vecchia: VecchiaConfig,
    /// Seeds the ordering when it is random.
    pub seed: u64,
    /// Hold the smoothness at this value instead of estimating it.
    pub fix_nu: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 40,
            convergence_tol: 1e-4,
            gradient_tol: 1e-4,
            step_control: 10,
            vecchia: VecchiaConfig::default(),
            seed: 0,
            fix_nu: None,
        }
    }
}

impl FitConfig {
    pub fn scoring_options(&self) -> ScoringOptions {
        ScoringOptions {
            max_iterations: self.max_iterations,
            convergence_tol: self.convergence_tol,
            gradient_tol: self.gradient_tol,
            step_control: self.step_control,
            ..ScoringOptions::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.scoring_options().validate()?;
        self.vecchia.validate(dim)?;
        if let Some(nu) = self.fix_nu {
            if !(nu > crate::covariance::NU_MIN && nu < crate::covariance::NU_MAX) {
                return Err(Error::InvalidParams(format!("fixed nu = {nu} is outside the open smoothness interval")));
            }
        }
        Ok(())
    }
}

/// How the Vecchia structure behind a fit was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMeta {
    pub n: usize,
    pub m: usize,
    pub ordering: OrderingKind,
    pub seed: u64,
    /// Weights the final conditioning sets were built with.
    pub scaling: Vec<f64>,
    /// Whether the sets were rebuilt from fitted ranges partway through.
    pub rescaled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub params: KernelParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub trace: Vec<TraceEntry>,
    pub factor_meta: FactorMeta,
}

/// Moment-based starting values.
pub fn init_params(points: &PointSet, z: &[f64]) -> Result<KernelParams> {
    let n = z.len();
    if points.len() != n {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            got: n,
        });
    }
    if n < MIN_TRAIN {
        return Err(Error::Degenerate(format!("{n} observations; need at least {MIN_TRAIN}")));
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Degenerate("response has zero variance".into()));
    }
    let ranges = points
        .column_sd()
        .into_iter()
        .enumerate()
        .map(|(k, sd)| {
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                log::warn!("input dimension {k} is constant and carries no information; starting range 1.0");
                1.0
            }
        })
        .collect();
    Ok(KernelParams {
        sigma2: 0.9 * var,
        ranges,
        nu: 0.5,
        tau2: 0.1 * var,
        mu: mean,
    })
}

/// Generalized-least-squares mean `(1^T U U^T z) / (1^T U U^T 1)` under a
/// Vecchia factor; `z` is in the original point order.
pub fn profile_mean(factor: &VecchiaFactor, z: &[f64]) -> Result<f64> {
    let n = factor.order.len();
    if z.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: z.len() });
    }
    let zo: Vec<f64> = factor.order.iter().map(|&i| z[i]).collect();
    let a = factor.u.transpose_mul(&vec![1.0; n]);
    let b = factor.u.transpose_mul(&zo);
    let num: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    Ok(num / den)
}

struct VecchiaObjective<'a> {
    ordered: &'a PointSet,
    cond: &'a CondSets,
    z: &'a [f64],
    /// Centre for the mean polynomials; the profiled mean does not depend on it.
    shift: f64,
    layout: ParamLayout,
    fixed_nu: Option<f64>,
}

impl VecchiaObjective<'_> {
    fn full(&self, theta: &[f64]) -> UnconstrainedParams {
        let mut v = theta.to_vec();
        if let Some(nu) = self.fixed_nu {
            v.insert(self.layout.nu(), nu_to_logit(nu));
        }
        UnconstrainedParams(v)
    }

    fn reduce(&self, full: &[f64]) -> Vec<f64> {
        let mut v = full.to_vec();
        if self.fixed_nu.is_some() {
            v.remove(self.layout.nu());
        }
        v
    }
}

impl ScoringObjective for VecchiaObjective<'_> {
    type Extra = f64;

    fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation<f64>> {
        let params = self.full(theta).to_params(self.shift);
        let s = vecchia_score(self.ordered, self.cond, self.z, &params, ScoreLevel::Fisher, true)?;
        let np = self.layout.len();
        let (grad, fisher) = match self.fixed_nu {
            None => (s.grad, s.fisher),
            Some(_) => {
                let keep: Vec<usize> = (0..np).filter(|&i| i != self.layout.nu()).collect();
                let g = keep.iter().map(|&i| s.grad[i]).collect();
                let f = keep
                    .iter()
                    .flat_map(|&i| keep.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| s.fisher[i * np + j])
                    .collect();
                (g, f)
            }
        };
        Ok(Evaluation {
            loglik: s.loglik,
            grad,
            fisher,
            extra: s.mu,
        })
    }
}

/// Fits the model to `train` from moment-based starting values.
pub fn fit(train: &Dataset, config: &FitConfig) -> Result<FittedModel> {
    fit_points(&train.points(), &train.values(), config)
}

/// Fits the model to responses `z` at `points`.
pub fn fit_points(points: &PointSet, z: &[f64], config: &FitConfig) -> Result<FittedModel> {
    let mut start = init_params(points, z)?;
    if let Some(nu) = config.fix_nu {
        start.nu = nu;
    }
    fit_from(points, z, &start, config)
}

/// Fits the model starting from `start`.
pub fn fit_from(points: &PointSet, z: &[f64], start: &KernelParams, config: &FitConfig) -> Result<FittedModel> {
    if points.is_empty() {
        return Err(Error::EmptyDataset("no training data".into()));
    }
    if z.len() != points.len() {
        return Err(Error::LengthMismatch {
            expected: points.len(),
            got: z.len(),
        });
    }
    if points.as_slice().iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("training data contain non-finite values".into()));
    }
    config.validate(points.dim())?;
    if start.dim() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            got: start.dim(),
        });
    }
    let mut start = start.clone();
    if let Some(nu) = config.fix_nu {
        start.nu = nu;
    }
    let layout = ParamLayout { q: points.dim() };
    let shift = start.mu;
    let mut theta = UnconstrainedParams::from_params(&start)?;
    let scaling = config.vecchia.scaling_for(points);
    let options = config.scoring_options();

    let run = |scaling: &[f64], theta: &UnconstrainedParams| {
        let vl = VecchiaLayout::build(points, config.vecchia.m_fit, scaling, config.vecchia.ordering, config.seed);
        let ordered = vl.ordered_points(points);
        let zo = vl.ordered_values(z);
        let mut obj = VecchiaObjective {
            ordered: &ordered,
            cond: &vl.cond_sets,
            z: &zo,
            shift,
            layout,
            fixed_nu: config.fix_nu,
        };
        let t0 = obj.reduce(theta.as_slice());
        let out = fisher_scoring(&mut obj, &t0, &options)?;
        Ok::<_, Error>((obj.full(&out.theta), out))
    };

    let (full, mut out) = run(&scaling, &theta)?;
    theta = full;
    let mut final_scaling = scaling;
    let mut rescaled = false;
    if config.vecchia.rescale_once {
        let fitted = theta.to_params(out.evaluation.extra);
        final_scaling = fitted.ranges.iter().map(|r| 1.0 / r).collect();
        log::info!("rebuilding conditioning sets from the fitted ranges");
        let (full, second) = run(&final_scaling, &theta)?;
        theta = full;
        let mut trace = out.trace;
        trace.extend(second.trace);
        out = crate::scoring::ScoringOutcome {
            iterations: out.iterations + second.iterations,
            trace,
            ..second
        };
        rescaled = true;
    }

    let params = theta.to_params(out.evaluation.extra);
    log::info!(
        "fit finished after {} iterations ({:?}): loglik {:.6}",
        out.iterations,
        out.stop,
        out.evaluation.loglik
    );
    Ok(FittedModel {
        params,
        loglik: out.evaluation.loglik,
        iterations: out.iterations,
        converged: out.stop.converged(),
        stop: out.stop,
        trace: out.trace,
        factor_meta: FactorMeta {
            n: points.len(),
            m: config.vecchia.m_fit,
            ordering: config.vecchia.ordering,
            seed: config.seed,
            scaling: final_scaling,
            rescaled,
        },
    })
}

/// m-nearest-neighbor predictions at `test` under a fitted model.
pub fn predict(
    model: &FittedModel,
    train: &PointSet,
    z: &[f64],
    test: &PointSet,
    m: usize,
    include_nugget: bool,
) -> Result<Predictions> {
    predict_points(train, z, &model.params, test, PredictOptions { m, include_nugget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{simulate_exact, uniform_points};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        uniform_points(n, 2, &mut rng)
    }

    #[test]
    fn init_from_moments() {
        let pts = grid(20);
        let z: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let p = init_params(&pts, &z).unwrap();
        let var = 80.0 / 19.0;
        assert!((p.sigma2 - 0.9 * var).abs() < 1e-12);
        assert!((p.tau2 - 0.1 * var).abs() < 1e-12);
        assert_eq!(p.nu, 0.5);
        assert_eq!(p.mu, 0.0);
        assert_eq!(p.ranges, pts.column_sd());

        assert!(matches!(init_params(&pts, &[1.5; 20]), Err(Error::Degenerate(_))));
        assert!(matches!(init_params(&grid(5), &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constant_dimension_gets_unit_range() {
        let mut rows = Vec::new();
        for i in 0..12 {
            rows.extend([i as f64, 4.0]);
        }
        let z: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let p = init_params(&PointSet::new(2, rows), &z).unwrap();
        assert_eq!(p.ranges[1], 1.0);
    }

    #[test]
    fn profiled_mean_limits() {
        let pts = grid(40);
        let params = KernelParams {
            sigma2: 1e-9,
            ranges: vec![0.3, 0.3],
            nu: 0.5,
            tau2: 1.0,
            mu: 0.0,
        };
        let vl = VecchiaLayout::build(&pts, 10, &[1.0, 1.0], OrderingKind::Maximin, 0);
        let f = VecchiaFactor::new(&pts, &vl, &params).unwrap();
        let z: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).cos() * 3.0).collect();
        let mean = z.iter().sum::<f64>() / 40.0;
        assert!((profile_mean(&f, &z).unwrap() - mean).abs() < 1e-6);
        assert!((profile_mean(&f, &[2.5; 40]).unwrap() - 2.5).abs() < 1e-12);

        let one = PointSet::new(2, vec![0.1, 0.2]);
        let vl = VecchiaLayout::build(&one, 10, &[1.0, 1.0], OrderingKind::Maximin, 0);
        let f = VecchiaFactor::new(&one, &vl, &params).unwrap();
        assert!((profile_mean(&f, &[7.0]).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn fit_climbs_and_is_reproducible() {
        let truth = KernelParams {
            sigma2: 1.0,
            ranges: vec![0.2, 0.4],
            nu: 0.5,
            tau2: 0.1,
            mu: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = uniform_points(300, 2, &mut rng);
        let z = simulate_exact(&pts, &truth, &mut rng).unwrap();
        let cfg = FitConfig::default();
        let a = fit_points(&pts, &z, &cfg).unwrap();
        assert!(a.loglik >= a.trace[0].loglik);
        for w in a.trace.windows(2) {
            assert!(w[1].loglik >= w[0].loglik);
        }
        let b = fit_points(&pts, &z, &cfg).unwrap();
        assert_eq!(a, b);

        let again = fit_from(&pts, &z, &a.params, &cfg).unwrap();
        assert!((again.loglik - a.loglik).abs() < cfg.convergence_tol.max(1e-3));
    }

    #[test]
    fn fixed_smoothness_is_held() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = uniform_points(150, 2, &mut rng);
        let z: Vec<f64> = pts.rows().map(|r| (6.0 * r[0]).sin() + r[1]).collect();
        let cfg = FitConfig {
            fix_nu: Some(1.5),
            ..Default::default()
        };
        let m = fit_points(&pts, &z, &cfg).unwrap();
        assert!((m.params.nu - 1.5).abs() < 1e-12);
    }
}
