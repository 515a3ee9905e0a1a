//! Damped Fisher scoring with step halving, shared by the Vecchia estimator and
//! the local baseline fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, solve_lower, solve_lower_transpose};

/// Log-likelihood, gradient and expected information (row-major) at one point.
#[derive(Debug, Clone)]
pub struct Evaluation<E> {
    pub loglik: f64,
    pub grad: Vec<f64>,
    pub fisher: Vec<f64>,
    /// Whatever else the objective wants to hand back with the accepted point.
    pub extra: E,
}

pub trait ScoringObjective {
    type Extra: Clone;
    fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation<Self::Extra>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step gains less than this much log-likelihood.
    pub convergence_tol: f64,
    /// Stop once `sqrt(g^T F^-1 g)` falls below this.
    pub gradient_tol: f64,
    /// Maximum number of step halvings per iteration.
    pub step_control: usize,
    /// Largest allowed change of any single unconstrained coordinate per step.
    pub max_step: f64,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        ScoringOptions {
            max_iterations: 40,
            convergence_tol: 1e-4,
            gradient_tol: 1e-4,
            step_control: 10,
            max_step: 2.0,
        }
    }
}

impl ScoringOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams("max_iterations must be at least 1".into()));
        }
        for (name, v) in [
            ("convergence_tol", self.convergence_tol),
            ("gradient_tol", self.gradient_tol),
            ("max_step", self.max_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LoglikTolerance,
    GradientTolerance,
    /// No halving of the scoring step increased the log-likelihood.
    NoImprovement,
    MaxIterations,
}

impl StopReason {
    pub fn converged(self) -> bool {
        !matches!(self, StopReason::MaxIterations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub loglik: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone)]
pub struct ScoringOutcome<E> {
    pub theta: Vec<f64>,
    pub evaluation: Evaluation<E>,
    /// Accepted steps.
    pub iterations: usize,
    pub stop: StopReason,
    /// Starting point first, then one entry per accepted step.
    pub trace: Vec<TraceEntry>,
}

const LAMBDA_START: f64 = 1e-4;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e12;

/// Cholesky of `F + lambda * diag(F)`, raising `lambda` until it factors.
fn damped_factor(fisher: &[f64], p: usize, lambda: &mut f64) -> Option<Vec<f64>> {
    let scale: Vec<f64> = (0..p).map(|i| fisher[i * p + i].abs().max(1e-12)).collect();
    loop {
        let mut a = fisher.to_vec();
        for i in 0..p {
            a[i * p + i] += *lambda * scale[i];
        }
        if cholesky_in_place(&mut a, p).is_ok() {
            return Some(a);
        }
        if *lambda >= LAMBDA_MAX {
            return None;
        }
        *lambda = (*lambda * 10.0).max(LAMBDA_START);
    }
}

fn solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    solve_lower(l, p, p, &mut x);
    solve_lower_transpose(l, p, p, &mut x);
    x
}

/// Maximizes `objective` from `theta0`.
///
/// Each iteration solves `(F + lambda diag F) d = g`, caps the largest
/// coordinate of `d` at `max_step`, and halves the step until the
/// log-likelihood does not decrease. `lambda` shrinks tenfold after an accepted
/// step and grows tenfold with every halving.
pub fn fisher_scoring<O: ScoringObjective>(
    objective: &mut O,
    theta0: &[f64],
    options: &ScoringOptions,
) -> Result<ScoringOutcome<O::Extra>> {
    options.validate()?;
    let p = theta0.len();
    let mut theta = theta0.to_vec();
    let mut cur = objective.evaluate(&theta)?;
    if !cur.loglik.is_finite() {
        return Err(Error::NonFinite("log-likelihood at the starting point".into()));
    }
    let mut trace = vec![TraceEntry {
        loglik: cur.loglik,
        step_norm: 0.0,
    }];
    let mut lambda = LAMBDA_START;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    while iterations < options.max_iterations {
        let optimizer_error = |detail: String, trace: &[TraceEntry]| Error::Optimizer {
            iteration: iterations + 1,
            detail,
            trace: trace.iter().map(|t| t.loglik).collect(),
        };
        if cur.grad.iter().chain(&cur.fisher).any(|v| !v.is_finite()) {
            return Err(optimizer_error("non-finite gradient or information".into(), &trace));
        }
        // the undamped system measures distance to stationarity when it is definite
        let mut probe = 0.0;
        let scaled_norm = match damped_factor(&cur.fisher, p, &mut probe) {
            Some(l) if probe == 0.0 => {
                let x = solve(&l, p, &cur.grad);
                x.iter().zip(&cur.grad).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
            }
            _ => f64::INFINITY,
        };
        if scaled_norm < options.gradient_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let l = damped_factor(&cur.fisher, p, &mut lambda)
            .ok_or_else(|| optimizer_error(format!("information not invertible at damping {lambda:e}"), &trace))?;
        let mut step = solve(&l, p, &cur.grad);
        let largest = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !largest.is_finite() {
            return Err(optimizer_error("non-finite scoring step".into(), &trace));
        }
        if largest > options.max_step {
            let s = options.max_step / largest;
            step.iter_mut().for_each(|v| *v *= s);
        }

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=options.step_control {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, d)| a + t * d).collect();
            match objective.evaluate(&cand) {
                Ok(e) if e.loglik.is_finite() && e.loglik >= cur.loglik => {
                    accepted = Some((cand, e));
                    break;
                }
                Ok(_) => {}
                Err(e) => log::debug!("candidate rejected: {e}"),
            }
            t *= 0.5;
            lambda = (lambda * 10.0).min(LAMBDA_MAX);
        }
        let Some((cand, e)) = accepted else {
            stop = StopReason::NoImprovement;
            break;
        };
        iterations += 1;
        lambda = (lambda / 10.0).max(LAMBDA_MIN);
        let gain = e.loglik - cur.loglik;
        let step_norm = t * step.iter().map(|v| v * v).sum::<f64>().sqrt();
        log::debug!("iteration {iterations}: loglik {:.6} (+{gain:.3e}), step {step_norm:.3e}", e.loglik);
        theta = cand;
        cur = e;
        trace.push(TraceEntry {
            loglik: cur.loglik,
            step_norm,
        });
        if gain < options.convergence_tol {
            stop = StopReason::LoglikTolerance;
            break;
        }
    }

    Ok(ScoringOutcome {
        theta,
        evaluation: cur,
        iterations,
        stop,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Gaussian log-likelihood in `(mean, log variance)` for a fixed sample.
    struct Normal {
        xs: Vec<f64>,
        calls: usize,
    }

    impl ScoringObjective for Normal {
        type Extra = ();
        fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation<()>> {
            self.calls += 1;
            let (m, lv) = (theta[0], theta[1]);
            let v = lv.exp();
            let n = self.xs.len() as f64;
            let ss: f64 = self.xs.iter().map(|x| (x - m).powi(2)).sum();
            let sx: f64 = self.xs.iter().map(|x| x - m).sum();
            Ok(Evaluation {
                loglik: -0.5 * n * lv - 0.5 * ss / v,
                grad: vec![sx / v, -0.5 * n + 0.5 * ss / v],
                fisher: vec![n / v, 0.0, 0.0, 0.5 * n],
                extra: (),
            })
        }
    }

    #[test]
    fn finds_the_normal_mle() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let mut obj = Normal { xs, calls: 0 };
        let out = fisher_scoring(&mut obj, &[10.0, 3.0], &ScoringOptions::default()).unwrap();
        assert!(out.stop.converged());
        assert!((out.theta[0] - mean).abs() < 1e-4);
        assert!((out.theta[1].exp() - var).abs() < 1e-3 * var);
        for w in out.trace.windows(2) {
            assert!(w[1].loglik >= w[0].loglik);
        }
    }

    #[test]
    fn stops_at_iteration_cap() {
        let mut obj = Normal {
            xs: vec![0.0, 1.0, 5.0],
            calls: 0,
        };
        let opts = ScoringOptions {
            max_iterations: 1,
            ..Default::default()
        };
        let out = fisher_scoring(&mut obj, &[100.0, 8.0], &opts).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.stop, StopReason::MaxIterations);
        assert!(!out.stop.converged());
        assert_eq!(out.trace.len(), 2);
    }

    #[test]
    fn rejects_bad_options() {
        let mut obj = Normal { xs: vec![1.0], calls: 0 };
        let opts = ScoringOptions {
            convergence_tol: 0.0,
            ..Default::default()
        };
        assert!(fisher_scoring(&mut obj, &[0.0, 0.0], &opts).is_err());
        assert_eq!(obj.calls, 0);
    }
}
