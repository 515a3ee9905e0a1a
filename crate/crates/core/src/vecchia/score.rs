//! Vecchia log-likelihood with its gradient and expected information.
//!
//! For column `i` let `B = c(i) ++ [i]`, `K_B = L L^T`, and `w = L^{-T} e_b` (the
//! column of `U`). With `r = z - mu`, the column contributes
//! `log w_b - e^2 / 2` where `e = w^T r_B`, and for a parameter with block
//! derivative `A`,
//!
//! ```text
//! d/dtheta = (e^2 - 1) / 2 * w^T A w + e * w^T A a,   a = [K_cc^{-1} r_c; 0]
//! ```
//!
//! Its expected information is `y_j^T y_k + s_j s_k / 2` with `s = w^T A w` and
//! `y = L_c^{-1} (A w)_c`. All of these are low-degree polynomials in `mu`, so a
//! single pass yields the profiled mean and everything evaluated at it.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::condsets::CondSets;
use super::factor::{factor_error, fill_cov_block, COLUMN_CHUNK};
use crate::covariance::{KernelDerivatives, KernelParams, Matern};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, dot, solve_lower, solve_lower_transpose};
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ScoreLevel {
    Loglik,
    Gradient,
    Fisher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VecchiaScore {
    pub loglik: f64,
    /// Mean at which everything is evaluated (profiled or as given).
    pub mu: f64,
    /// Partials over `[log sigma2, log r_1 .. log r_q, logit nu, log tau2]`; empty at `ScoreLevel::Loglik`.
    pub grad: Vec<f64>,
    pub grad_mu: f64,
    /// Row-major expected information for the same parameters; empty unless `ScoreLevel::Fisher`.
    pub fisher: Vec<f64>,
    /// Expected information for `mu`, `1^T U U^T 1`.
    pub mu_information: f64,
}

#[derive(Debug, Clone)]
struct Acc {
    log_diag: f64,
    ezz: f64,
    ez1: f64,
    e11: f64,
    // three polynomial coefficients per parameter
    grad: Vec<f64>,
    fisher: Vec<f64>,
}

impl Acc {
    fn new(np: usize, level: ScoreLevel) -> Self {
        Acc {
            log_diag: 0.0,
            ezz: 0.0,
            ez1: 0.0,
            e11: 0.0,
            grad: if level >= ScoreLevel::Gradient { vec![0.0; 3 * np] } else { Vec::new() },
            fisher: if level >= ScoreLevel::Fisher { vec![0.0; np * np] } else { Vec::new() },
        }
    }

    fn merge(mut self, other: &Acc) -> Acc {
        self.log_diag += other.log_diag;
        self.ezz += other.ezz;
        self.ez1 += other.ez1;
        self.e11 += other.e11;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += b;
        }
        for (a, b) in self.fisher.iter_mut().zip(&other.fisher) {
            *a += b;
        }
        self
    }
}

fn reduce(accs: &[Acc]) -> Acc {
    match accs.len() {
        1 => accs[0].clone(),
        n => reduce(&accs[..n / 2]).merge(&reduce(&accs[n / 2..])),
    }
}

struct Workspace {
    kb: Vec<f64>,
    amat: Vec<f64>,
    w: Vec<f64>,
    zb: Vec<f64>,
    az: Vec<f64>,
    a1: Vec<f64>,
    v: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    gtmp: Vec<f64>,
}

impl Workspace {
    fn new(bmax: usize, np: usize) -> Self {
        Workspace {
            kb: vec![0.0; bmax * bmax],
            amat: vec![0.0; np * bmax * bmax],
            w: vec![0.0; bmax],
            zb: vec![0.0; bmax],
            az: vec![0.0; bmax],
            a1: vec![0.0; bmax],
            v: vec![0.0; bmax],
            y: vec![0.0; np * bmax],
            s: vec![0.0; np],
            gtmp: vec![0.0; np],
        }
    }
}

struct Column<'a> {
    scaled: &'a PointSet,
    cond: &'a CondSets,
    zc: &'a [f64],
    matern: &'a Matern,
    kd: Option<&'a KernelDerivatives>,
    tau2: f64,
    np: usize,
    level: ScoreLevel,
}

impl Column<'_> {
    fn fill_with_derivatives(&self, i: usize, ws: &mut Workspace) -> Result<usize> {
        let kd = self.kd.expect("derivative evaluator");
        let set = self.cond.get(i);
        let b = set.len() + 1;
        let bb = b * b;
        let at = |r: usize| if r + 1 == b { i } else { set[r] };
        let s2 = self.matern.sigma2();
        for r in 0..b {
            let pr = self.scaled.row(at(r));
            for s in 0..r {
                let c = kd.eval_scaled(pr, self.scaled.row(at(s)), false, &mut ws.gtmp);
                if !c.is_finite() || ws.gtmp.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Bessel {
                        nu: self.matern.nu(),
                        x: crate::points::squared_distance(pr, self.scaled.row(at(s))).sqrt(),
                    });
                }
                ws.kb[r * b + s] = c;
                for p in 0..self.np {
                    ws.amat[p * bb + r * b + s] = ws.gtmp[p];
                    ws.amat[p * bb + s * b + r] = ws.gtmp[p];
                }
            }
            ws.kb[r * b + r] = s2 + self.tau2;
            for p in 0..self.np {
                ws.amat[p * bb + r * b + r] = 0.0;
            }
            ws.amat[r * b + r] = s2;
            ws.amat[(self.np - 1) * bb + r * b + r] = self.tau2;
        }
        Ok(b)
    }

    fn process(&self, i: usize, ws: &mut Workspace, acc: &mut Acc) -> Result<()> {
        let b = if self.level == ScoreLevel::Loglik {
            fill_cov_block(self.scaled, self.cond.get(i), i, self.matern, self.tau2, &mut ws.kb)?
        } else {
            self.fill_with_derivatives(i, ws)?
        };
        let c = b - 1;
        let bb = b * b;
        cholesky_in_place(&mut ws.kb[..bb], b).map_err(|(p, d)| factor_error(i, b, p, d))?;
        let kb = &ws.kb[..bb];

        let w = &mut ws.w[..b];
        w.fill(0.0);
        w[c] = 1.0;
        solve_lower_transpose(kb, b, b, w);
        let set = self.cond.get(i);
        for (r, &j) in set.iter().enumerate() {
            ws.zb[r] = self.zc[j];
        }
        ws.zb[c] = self.zc[i];
        let ez = dot(w, &ws.zb[..b]);
        let e1: f64 = w.iter().sum();
        acc.log_diag -= kb[c * b + c].ln();
        acc.ezz += ez * ez;
        acc.ez1 += ez * e1;
        acc.e11 += e1 * e1;
        if self.level == ScoreLevel::Loglik {
            return Ok(());
        }

        let az = &mut ws.az[..c];
        az.copy_from_slice(&ws.zb[..c]);
        solve_lower(kb, b, c, az);
        solve_lower_transpose(kb, b, c, az);
        let a1 = &mut ws.a1[..c];
        a1.fill(1.0);
        solve_lower(kb, b, c, a1);
        solve_lower_transpose(kb, b, c, a1);

        let w = &ws.w[..b];
        for p in 0..self.np {
            let a = &ws.amat[p * bb..(p + 1) * bb];
            let v = &mut ws.v[..b];
            for (r, vr) in v.iter_mut().enumerate() {
                *vr = dot(&a[r * b..(r + 1) * b], w);
            }
            let s = dot(w, v);
            let tz = dot(&v[..c], &ws.az[..c]);
            let t1 = dot(&v[..c], &ws.a1[..c]);
            let g = &mut acc.grad[3 * p..3 * p + 3];
            g[0] += 0.5 * (ez * ez - 1.0) * s + ez * tz;
            g[1] += -ez * e1 * s - (e1 * tz + ez * t1);
            g[2] += 0.5 * e1 * e1 * s + e1 * t1;
            if self.level == ScoreLevel::Fisher {
                ws.s[p] = s;
                let y = &mut ws.y[p * b..p * b + c];
                y.copy_from_slice(&v[..c]);
                solve_lower(kb, b, c, y);
            }
        }
        if self.level == ScoreLevel::Fisher {
            let np = self.np;
            for p in 0..np {
                for q in 0..=p {
                    let f = dot(&ws.y[p * b..p * b + c], &ws.y[q * b..q * b + c]) + 0.5 * ws.s[p] * ws.s[q];
                    acc.fisher[p * np + q] += f;
                }
            }
        }
        Ok(())
    }
}

/// Log-likelihood and, depending on `level`, its score and expected
/// information, for ordered points and responses.
///
/// With `profile_mean` the mean is replaced by its generalized-least-squares
/// estimate `(1^T U U^T z) / (1^T U U^T 1)` and everything is evaluated there;
/// otherwise `params.mu` is used.
pub fn vecchia_score(
    ordered: &PointSet,
    cond: &CondSets,
    z: &[f64],
    params: &KernelParams,
    level: ScoreLevel,
    profile_mean: bool,
) -> Result<VecchiaScore> {
    params.validate()?;
    let n = ordered.len();
    if ordered.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: ordered.dim(),
        });
    }
    if z.len() != n || cond.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: if z.len() != n { z.len() } else { cond.len() },
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset("no observations to score".into()));
    }
    let np = params.n_unconstrained();
    let inv: Vec<f64> = params.ranges.iter().map(|r| 1.0 / r).collect();
    let scaled = ordered.scaled(&inv);
    // centring at the current mean keeps the mean polynomials well conditioned
    let shift = params.mu;
    let zc: Vec<f64> = z.iter().map(|v| v - shift).collect();
    let matern = Matern::new(params.sigma2, params.nu);
    let kd = (level >= ScoreLevel::Gradient).then(|| KernelDerivatives::new(params));
    let col = Column {
        scaled: &scaled,
        cond,
        zc: &zc,
        matern: &matern,
        kd: kd.as_ref(),
        tau2: params.tau2,
        np,
        level,
    };
    let bmax = cond.max_size() + 1;

    let accs: Vec<Acc> = (0..n.div_ceil(COLUMN_CHUNK))
        .into_par_iter()
        .map_init(
            || Workspace::new(bmax, np),
            |ws, ch| -> Result<Acc> {
                let mut acc = Acc::new(np, level);
                for i in ch * COLUMN_CHUNK..((ch + 1) * COLUMN_CHUNK).min(n) {
                    col.process(i, ws, &mut acc)?;
                }
                Ok(acc)
            },
        )
        .collect::<Result<_>>()?;
    let acc = reduce(&accs);

    let delta = if profile_mean && acc.e11 > 0.0 { acc.ez1 / acc.e11 } else { 0.0 };
    let quad = acc.ezz - 2.0 * delta * acc.ez1 + delta * delta * acc.e11;
    let loglik = acc.log_diag - 0.5 * quad - 0.5 * n as f64 * (2.0 * PI).ln();
    if !loglik.is_finite() {
        return Err(Error::NonFinite("Vecchia log-likelihood".into()));
    }
    let grad = acc
        .grad
        .chunks_exact(3)
        .map(|g| g[0] + delta * (g[1] + delta * g[2]))
        .collect();
    let mut fisher = acc.fisher;
    if !fisher.is_empty() {
        for p in 0..np {
            for q in 0..p {
                fisher[q * np + p] = fisher[p * np + q];
            }
        }
    }
    Ok(VecchiaScore {
        loglik,
        mu: shift + delta,
        grad,
        grad_mu: acc.ez1 - delta * acc.e11,
        fisher,
        mu_information: acc.e11,
    })
}

/// Gradient over the unconstrained parameters and the partial in `mu`, at `params.mu`.
pub fn vecchia_loglik_grad(
    ordered: &PointSet,
    cond: &CondSets,
    z: &[f64],
    params: &KernelParams,
) -> Result<(Vec<f64>, f64)> {
    let s = vecchia_score(ordered, cond, z, params, ScoreLevel::Gradient, false)?;
    Ok((s.grad, s.grad_mu))
}
