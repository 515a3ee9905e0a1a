//! Matérn-ARD and exponential-ARD covariances and their parameter derivatives.
//!
//! The Matérn correlation is `2^{1-nu} / Gamma(nu) * u^nu * K_nu(u)` with
//! `u = ||R^{-1}(a - b)||` and no `sqrt(2 nu)` factor inside the argument.
//! The nugget is never part of the kernel itself; it enters only on the
//! diagonal of covariance matrices, i.e. for the same observation.

mod bessel;
mod params;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::points::PointSet;

pub use bessel::{BesselK, BesselTriple};
pub use params::{logit_to_nu, nu_to_logit, KernelParams, ParamLayout, UnconstrainedParams, NU_MAX, NU_MIN};

/// Below this scaled distance the correlation is taken to be exactly one.
pub const ZERO_DISTANCE: f64 = 1e-12;

/// Step in the logit of `nu` used for the smoothness derivative.
pub const NU_FD_STEP: f64 = 1e-5;

/// Matérn covariance at a fixed variance and smoothness, as a function of scaled distance.
#[derive(Debug, Clone)]
pub struct Matern {
    sigma2: f64,
    nu: f64,
    log_norm: f64,
    bessel: BesselK,
}

impl Matern {
    pub fn new(sigma2: f64, nu: f64) -> Self {
        let log_norm = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu);
        Matern {
            sigma2,
            nu,
            log_norm,
            bessel: BesselK::new(nu),
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Correlation at scaled distance `u`.
    #[inline]
    pub fn correlation(&self, u: f64) -> f64 {
        if u < ZERO_DISTANCE {
            return 1.0;
        }
        let t = self.bessel.eval(u);
        let r = (self.log_norm + self.nu * u.ln() - t.scale).exp() * t.k_nu;
        r.min(1.0)
    }

    /// Correlation and `-rho'(u) / u`, which is finite for every `u > 0`.
    ///
    /// The second value turns into the range derivative: with `s_k = (a_k - b_k) / r_k`,
    /// `d rho / d log r_k = slope * s_k^2`.
    #[inline]
    pub fn correlation_and_slope(&self, u: f64) -> (f64, f64) {
        if u < ZERO_DISTANCE {
            return (1.0, 0.0);
        }
        let t = self.bessel.eval(u);
        let lu = u.ln();
        let base = self.log_norm - t.scale;
        let rho = ((base + self.nu * lu).exp() * t.k_nu).min(1.0);
        let slope = (base + (self.nu - 1.0) * lu).exp() * t.k_nu_minus;
        (rho, slope)
    }

    #[inline]
    pub fn cov(&self, u: f64) -> f64 {
        self.sigma2 * self.correlation(u)
    }
}

/// `||(a - b) / ranges||`.
pub fn scaled_distance(a: &[f64], b: &[f64], ranges: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if ranges.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: ranges.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .zip(ranges)
        .map(|((x, y), r)| ((x - y) / r).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn checked(value: f64, nu: f64, u: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Bessel { nu, x: u })
    }
}

/// Matérn-ARD covariance between two inputs, without the nugget.
pub fn matern_ard(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    params.validate()?;
    let u = scaled_distance(a, b, &params.ranges)?;
    let m = Matern::new(params.sigma2, params.nu);
    checked(m.cov(u), params.nu, u)
}

/// Exponential ARD covariance `sigma2 * exp(-||diffs / ranges||)`.
///
/// The moving-window baseline passes (latitude, longitude) differences for the
/// spatial variant and appends the time difference for the spatio-temporal one.
pub fn exp_ard(sigma2: f64, diffs: &[f64], ranges: &[f64]) -> f64 {
    debug_assert_eq!(diffs.len(), ranges.len());
    let u: f64 = diffs.iter().zip(ranges).map(|(d, r)| (d / r).powi(2)).sum::<f64>().sqrt();
    sigma2 * (-u).exp()
}

/// Dense covariance between two point sets. With `nugget_on_diagonal`, `tau2`
/// is added to entry `(i, i)`; callers pass the same set twice in that case.
pub fn cov_block(a: &PointSet, b: &PointSet, params: &KernelParams, nugget_on_diagonal: bool) -> Result<DMatrix<f64>> {
    params.validate()?;
    if a.dim() != params.dim() || b.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: if a.dim() != params.dim() { a.dim() } else { b.dim() },
        });
    }
    let inv: Vec<f64> = params.ranges.iter().map(|r| 1.0 / r).collect();
    let sa = a.scaled(&inv);
    let sb = b.scaled(&inv);
    let m = Matern::new(params.sigma2, params.nu);
    let same = nugget_on_diagonal && a.len() == b.len();
    let mut out = DMatrix::zeros(a.len(), b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            let u = crate::points::squared_distance(sa.row(i), sb.row(j)).sqrt();
            let mut c = checked(m.cov(u), params.nu, u)?;
            if same && i == j {
                c += params.tau2;
            }
            out[(i, j)] = c;
        }
    }
    Ok(out)
}

/// Covariance and its derivatives with respect to the unconstrained parameters,
/// reusing Bessel set-up across many evaluations at fixed parameters.
#[derive(Debug, Clone)]
pub struct KernelDerivatives {
    center: Matern,
    plus: Matern,
    minus: Matern,
    tau2: f64,
    q: usize,
}

impl KernelDerivatives {
    pub fn new(params: &KernelParams) -> Self {
        let t = nu_to_logit(params.nu);
        KernelDerivatives {
            center: Matern::new(params.sigma2, params.nu),
            plus: Matern::new(params.sigma2, logit_to_nu(t + NU_FD_STEP)),
            minus: Matern::new(params.sigma2, logit_to_nu(t - NU_FD_STEP)),
            tau2: params.tau2,
            q: params.ranges.len(),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout { q: self.q }
    }

    pub fn matern(&self) -> &Matern {
        &self.center
    }

    /// Evaluates at two points already divided by the ranges. Writes the
    /// `q + 3` partials into `grad` and returns the covariance (with the nugget when `same`).
    #[inline]
    pub fn eval_scaled(&self, sa: &[f64], sb: &[f64], same: bool, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.q + 3);
        let u2 = crate::points::squared_distance(sa, sb);
        let u = u2.sqrt();
        let s2 = self.center.sigma2;
        let (rho, slope) = self.center.correlation_and_slope(u);
        let c = s2 * rho;
        grad[0] = c;
        for k in 0..self.q {
            let d = sa[k] - sb[k];
            grad[1 + k] = s2 * slope * d * d;
        }
        grad[self.q + 1] = if u < ZERO_DISTANCE {
            0.0
        } else {
            (self.plus.cov(u) - self.minus.cov(u)) / (2.0 * NU_FD_STEP)
        };
        if same {
            grad[self.q + 2] = self.tau2;
            c + self.tau2
        } else {
            grad[self.q + 2] = 0.0;
            c
        }
    }
}

/// Partials of the covariance between `a` and `b` with respect to
/// `[log sigma2, log r_1 .. log r_q, logit nu, log tau2]`.
///
/// `same_observation` marks the diagonal (one observation paired with itself),
/// the only case in which the nugget contributes.
pub fn kernel_gradient(a: &[f64], b: &[f64], params: &KernelParams, same_observation: bool) -> Result<Vec<f64>> {
    params.validate()?;
    let u = scaled_distance(a, b, &params.ranges)?;
    let sa: Vec<f64> = a.iter().zip(&params.ranges).map(|(x, r)| x / r).collect();
    let sb: Vec<f64> = b.iter().zip(&params.ranges).map(|(x, r)| x / r).collect();
    let kd = KernelDerivatives::new(params);
    let mut grad = vec![0.0; params.n_unconstrained()];
    let c = kd.eval_scaled(&sa, &sb, same_observation, &mut grad);
    checked(c, params.nu, u)?;
    for g in &grad {
        checked(*g, params.nu, u)?;
    }
    Ok(grad)
}
