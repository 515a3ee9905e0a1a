use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on the Matérn smoothness.
pub const NU_MIN: f64 = 0.05;
/// Upper bound on the Matérn smoothness.
pub const NU_MAX: f64 = 3.5;

/// Matérn-ARD covariance parameters with nugget and constant mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma2: f64,
    pub ranges: Vec<f64>,
    pub nu: f64,
    pub tau2: f64,
    pub mu: f64,
}

impl KernelParams {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.ranges.is_empty() {
            return Err(Error::InvalidParams("at least one range is required".into()));
        }
        if let Some((k, r)) = self
            .ranges
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r > 0.0 && r.is_finite()))
        {
            return Err(Error::InvalidParams(format!("range {k} must be positive, got {r}")));
        }
        if !(NU_MIN..=NU_MAX).contains(&self.nu) {
            return Err(Error::InvalidParams(format!(
                "nu must lie in [{NU_MIN}, {NU_MAX}], got {}",
                self.nu
            )));
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return Err(Error::InvalidParams(format!("tau2 must be non-negative, got {}", self.tau2)));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidParams(format!("mu must be finite, got {}", self.mu)));
        }
        Ok(())
    }

    /// Number of unconstrained covariance parameters: `sigma2`, the ranges, `nu`, `tau2`.
    pub fn n_unconstrained(&self) -> usize {
        self.ranges.len() + 3
    }

    /// Marginal variance of one noisy observation.
    pub fn total_variance(&self) -> f64 {
        self.sigma2 + self.tau2
    }
}

/// `[log sigma2, log r_1 .. log r_q, logit nu, log tau2]`, with `nu` mapped
/// from `[NU_MIN, NU_MAX]` onto the real line. The mean is not included.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedParams(pub Vec<f64>);

impl UnconstrainedParams {
    /// Fails on a zero nugget or a smoothness on the boundary, which have no finite image.
    pub fn from_params(p: &KernelParams) -> Result<Self> {
        p.validate()?;
        if p.tau2 == 0.0 {
            return Err(Error::InvalidParams("tau2 = 0 has no log-scale representation".into()));
        }
        if p.nu <= NU_MIN || p.nu >= NU_MAX {
            return Err(Error::InvalidParams(format!("nu = {} lies on its bound", p.nu)));
        }
        let mut v = Vec::with_capacity(p.n_unconstrained());
        v.push(p.sigma2.ln());
        v.extend(p.ranges.iter().map(|r| r.ln()));
        v.push(nu_to_logit(p.nu));
        v.push(p.tau2.ln());
        Ok(UnconstrainedParams(v))
    }

    pub fn to_params(&self, mu: f64) -> KernelParams {
        let v = &self.0;
        let q = v.len() - 3;
        KernelParams {
            sigma2: v[0].exp(),
            ranges: v[1..=q].iter().map(|x| x.exp()).collect(),
            nu: logit_to_nu(v[q + 1]),
            tau2: v[q + 2].exp(),
            mu,
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn nu_to_logit(nu: f64) -> f64 {
    let f = (nu - NU_MIN) / (NU_MAX - NU_MIN);
    (f / (1.0 - f)).ln()
}

pub fn logit_to_nu(t: f64) -> f64 {
    // written to stay accurate for large |t|
    let f = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    NU_MIN + (NU_MAX - NU_MIN) * f
}

/// Index helpers for the unconstrained vector of a `q`-dimensional model.
#[derive(Debug, Clone, Copy)]
pub struct ParamLayout {
    pub q: usize,
}

impl ParamLayout {
    pub const SIGMA2: usize = 0;

    pub fn range(self, k: usize) -> usize {
        1 + k
    }
    pub fn nu(self) -> usize {
        self.q + 1
    }
    pub fn tau2(self) -> usize {
        self.q + 2
    }
    pub fn len(self) -> usize {
        self.q + 3
    }
    pub fn is_empty(self) -> bool {
        false
    }

    pub fn names(self, labels: &[&str]) -> Vec<String> {
        let mut out = vec!["log_sigma2".to_string()];
        for k in 0..self.q {
            let l = labels.get(k).copied().unwrap_or("?");
            out.push(format!("log_range_{l}"));
        }
        out.push("logit_nu".into());
        out.push("log_tau2".into());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> KernelParams {
        KernelParams {
            sigma2: 2.0,
            ranges: vec![1.5, 0.2, 30.0],
            nu: 0.8,
            tau2: 0.1,
            mu: -3.0,
        }
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.nu = 3.6;
        assert!(p.validate().is_err());
        let mut p = params();
        p.ranges[1] = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.tau2 = 0.0;
        assert!(p.validate().is_ok());
        assert!(UnconstrainedParams::from_params(&p).is_err());
    }

    #[test]
    fn layout() {
        let l = ParamLayout { q: 3 };
        assert_eq!((l.range(0), l.nu(), l.tau2(), l.len()), (1, 4, 5, 6));
        assert_eq!(l.names(&["a", "b", "c"])[2], "log_range_b");
    }

    proptest! {
        #[test]
        fn round_trip(
            s in 1e-4f64..1e4,
            r in proptest::collection::vec(1e-3f64..1e3, 1..8),
            nu in 0.0501f64..3.499,
            t in 1e-6f64..1e2,
            mu in -50.0f64..50.0,
        ) {
            let p = KernelParams { sigma2: s, ranges: r, nu, tau2: t, mu };
            let back = UnconstrainedParams::from_params(&p).unwrap().to_params(mu);
            let close = |a: f64, b: f64| ((a - b) / b).abs() < 1e-12;
            prop_assert!(close(back.sigma2, p.sigma2));
            prop_assert!(close(back.tau2, p.tau2));
            prop_assert!(close(back.nu, p.nu));
            for (a, b) in back.ranges.iter().zip(&p.ranges) {
                prop_assert!(close(*a, *b));
            }
            prop_assert_eq!(back.mu, mu);
        }
    }
}
