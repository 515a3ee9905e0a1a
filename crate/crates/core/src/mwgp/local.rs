//! Exponential-ARD Gaussian processes on windowed anomalies.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{wrap_lon, MwgpConfig, MwgpVariant};
use crate::error::{Error, Result};
use crate::exact::factor;
use crate::scoring::{fisher_scoring, Evaluation, ScoringObjective};

/// One anomaly, located by latitude, longitude and elapsed days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub lat: f64,
    pub lon: f64,
    pub time: f64,
    pub value: f64,
}

/// Parameters of one window's zero-mean exponential-ARD model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGp {
    pub lat: f64,
    pub lon: f64,
    pub variant: MwgpVariant,
    pub sigma2: f64,
    pub r_lat: f64,
    pub r_lon: f64,
    /// Present exactly for the spatio-temporal variant.
    pub r_time: Option<f64>,
    pub tau2: f64,
    pub n_local: usize,
    pub loglik: f64,
    pub converged: bool,
}

/// Indices of the points inside the square window around `(lat, lon)`,
/// keeping the `cap` nearest to the centre (ties to the smaller index).
pub fn select_window(points: &[WindowPoint], lat: f64, lon: f64, half_width: f64, cap: usize) -> Vec<usize> {
    let mut inside: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let dl = p.lat - lat;
            let dk = wrap_lon(p.lon - lon);
            (dl.abs() <= half_width && dk.abs() <= half_width).then_some((dl * dl + dk * dk, i))
        })
        .collect();
    if inside.len() > cap {
        inside.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        inside.truncate(cap);
    }
    let mut idx: Vec<usize> = inside.into_iter().map(|p| p.1).collect();
    idx.sort_unstable();
    idx
}

/// Coordinate differences `(dlat, dlon, dt)` between two points.
fn diffs(a: &WindowPoint, b: &WindowPoint) -> [f64; 3] {
    [a.lat - b.lat, wrap_lon(a.lon - b.lon), a.time - b.time]
}

fn exp_cov(sigma2: f64, d: &[f64; 3], ranges: &[f64]) -> f64 {
    crate::covariance::exp_ard(sigma2, &d[..ranges.len()], ranges)
}

/// Dense likelihood over `[log sigma2, log r_1 .. log r_k, log tau2]`.
struct DenseExp<'a> {
    pts: Vec<&'a WindowPoint>,
    z: DVector<f64>,
    k: usize,
}

impl ScoringObjective for DenseExp<'_> {
    type Extra = ();

    fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation<()>> {
        let n = self.pts.len();
        let k = self.k;
        let np = k + 2;
        let sigma2 = theta[0].exp();
        let ranges: Vec<f64> = theta[1..=k].iter().map(|t| t.exp()).collect();
        let tau2 = theta[k + 1].exp();

        let mut cov = DMatrix::zeros(n, n);
        let mut dr: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); k];
        for i in 0..n {
            cov[(i, i)] = sigma2 + tau2;
            for j in 0..i {
                let d = diffs(self.pts[i], self.pts[j]);
                let s: Vec<f64> = (0..k).map(|c| (d[c] / ranges[c]).powi(2)).collect();
                let u = s.iter().sum::<f64>().sqrt();
                let c = sigma2 * (-u).exp();
                cov[(i, j)] = c;
                cov[(j, i)] = c;
                if u > 0.0 {
                    for (m, sc) in dr.iter_mut().zip(&s) {
                        let v = c * sc / u;
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
            }
        }
        let chol = factor(cov)?;
        let alpha = chol.solve(&self.z);
        let half_logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let loglik = -half_logdet - 0.5 * self.z.dot(&alpha) - 0.5 * n as f64 * (2.0 * PI).ln();
        let kinv = chol.inverse();

        // K^-1 dK/dtheta for each parameter
        let mut ms: Vec<DMatrix<f64>> = Vec::with_capacity(np);
        ms.push(DMatrix::identity(n, n) - &kinv * tau2);
        for d in &dr {
            ms.push(&kinv * d);
        }
        ms.push(&kinv * tau2);
        let quad = |p: usize| -> f64 {
            if p == 0 {
                self.z.dot(&alpha) - tau2 * alpha.norm_squared()
            } else if p == np - 1 {
                tau2 * alpha.norm_squared()
            } else {
                alpha.dot(&(&dr[p - 1] * &alpha))
            }
        };
        let grad: Vec<f64> = (0..np).map(|p| 0.5 * quad(p) - 0.5 * ms[p].trace()).collect();
        let mut fisher = vec![0.0; np * np];
        for p in 0..np {
            for q in 0..=p {
                let t = ms[p].component_mul(&ms[q].transpose()).sum();
                fisher[p * np + q] = 0.5 * t;
                fisher[q * np + p] = 0.5 * t;
            }
        }
        Ok(Evaluation {
            loglik,
            grad,
            fisher,
            extra: (),
        })
    }
}

fn sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

fn positive_or_one(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v
    } else {
        1.0
    }
}

/// Maximum-likelihood fit of the zero-mean exponential-ARD model plus nugget
/// to the anomalies in the window centred at `(lat, lon)`.
pub fn fit_local_gp(lat: f64, lon: f64, anomalies: &[WindowPoint], config: &MwgpConfig) -> Result<LocalGp> {
    let idx = select_window(anomalies, lat, lon, config.window_half_width, config.max_window_points);
    if idx.len() < config.min_window_points {
        return Err(Error::Degenerate(format!(
            "{} anomalies in the window, need {}",
            idx.len(),
            config.min_window_points
        )));
    }
    let pts: Vec<&WindowPoint> = idx.iter().map(|&i| &anomalies[i]).collect();
    let z = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.value));
    let var = z.norm_squared() / pts.len() as f64;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Degenerate("window anomalies are all zero".into()));
    }
    let k = match config.variant {
        MwgpVariant::S => 2,
        MwgpVariant::ST => 3,
    };
    let mut theta = vec![(0.9 * var).ln()];
    theta.push(positive_or_one(sd(pts.iter().map(|p| p.lat))).ln());
    theta.push(positive_or_one(sd(pts.iter().map(|p| wrap_lon(p.lon - lon)))).ln());
    if k == 3 {
        theta.push(positive_or_one(sd(pts.iter().map(|p| p.time))).ln());
    }
    theta.push((0.1 * var).ln());

    let mut obj = DenseExp { pts, z, k };
    let out = fisher_scoring(&mut obj, &theta, &config.scoring)?;
    let t = &out.theta;
    Ok(LocalGp {
        lat,
        lon,
        variant: config.variant,
        sigma2: t[0].exp(),
        r_lat: t[1].exp(),
        r_lon: t[2].exp(),
        r_time: (k == 3).then(|| t[3].exp()),
        tau2: t[k + 1].exp(),
        n_local: idx.len(),
        loglik: out.evaluation.loglik,
        converged: out.stop.converged(),
    })
}

impl LocalGp {
    pub fn ranges(&self) -> Vec<f64> {
        let mut r = vec![self.r_lat, self.r_lon];
        r.extend(self.r_time);
        r
    }

    /// Simple kriging of the anomaly at `q` from this window's anomalies:
    /// `(mean, variance including the nugget, variance was clamped)`.
    pub fn krige(&self, anomalies: &[WindowPoint], config: &MwgpConfig, q: &WindowPoint) -> Result<(f64, f64, bool)> {
        let idx = select_window(anomalies, self.lat, self.lon, config.window_half_width, config.max_window_points);
        let ranges = self.ranges();
        let n = idx.len();
        let mut cov = DMatrix::zeros(n, n);
        let mut kq = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            let pi = &anomalies[i];
            cov[(a, a)] = self.sigma2 + self.tau2;
            for (b, &j) in idx[..a].iter().enumerate() {
                let c = exp_cov(self.sigma2, &diffs(pi, &anomalies[j]), &ranges);
                cov[(a, b)] = c;
                cov[(b, a)] = c;
            }
            kq[a] = exp_cov(self.sigma2, &diffs(pi, q), &ranges);
            z[a] = pi.value;
        }
        let chol = factor(cov)?;
        let mean = kq.dot(&chol.solve(&z));
        let v = chol.l().solve_lower_triangular(&kq).expect("triangular factor is nonsingular");
        let mut var = self.sigma2 - v.norm_squared();
        let clamped = var < 0.0;
        if clamped {
            var = 0.0;
        }
        Ok((mean, var + self.tau2, clamped))
    }
}
