//! Seeded synthetic inputs and Gaussian-process draws for tests, benchmarks and demos.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::{cov_block, exp_ard, KernelParams};
use crate::data::{Dataset, InputMode, Measurement, PressureLevel};
use crate::error::Result;
use crate::exact::factor;
use crate::mwgp::{rg_bins, wrap_lon, RgCoefficients};
use crate::points::PointSet;
use crate::vecchia::{compute_u, simulate_vecchia, OrderingKind, VecchiaLayout};

/// `n` points uniform on the unit cube.
pub fn uniform_points<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> PointSet {
    PointSet::new(dim, (0..n * dim).map(|_| rng.random::<f64>()).collect())
}

/// Exact draw of the noisy process at `points` (dense Cholesky, so keep `n` moderate).
pub fn simulate_exact<R: Rng + ?Sized>(points: &PointSet, params: &KernelParams, rng: &mut R) -> Result<Vec<f64>> {
    let chol = factor(cov_block(points, points, params, true)?)?;
    let eps = DVector::from_iterator(points.len(), (0..points.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let x = chol.l() * eps;
    Ok(x.iter().map(|v| v + params.mu).collect())
}

/// Draw from the Vecchia-implied model with conditioning sets of size `m`, in
/// the original point order. Scales to large `n`.
pub fn simulate_vecchia_model<R: Rng + ?Sized>(
    points: &PointSet,
    params: &KernelParams,
    m: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let scaling: Vec<f64> = params.ranges.iter().map(|r| 1.0 / r).collect();
    let layout = VecchiaLayout::build(points, m, &scaling, OrderingKind::Maximin, 0);
    let u = compute_u(&layout.ordered_points(points), &layout.cond_sets, params)?;
    let zo = simulate_vecchia(&u, params.mu, rng);
    let mut z = vec![0.0; points.len()];
    for (pos, &i) in layout.order.iter().enumerate() {
        z[i] = zo[pos];
    }
    Ok(z)
}

/// A float-like dataset: `profiles` profiles scattered over a region, each with
/// `levels` measurements around 10 dbar, and a smooth temperature-like response
/// with measurement noise. Useful for exercising the full pipeline.
pub fn synthetic_profiles<R: Rng + ?Sized>(profiles: usize, levels: usize, rng: &mut R) -> Dataset {
    let mut ms = Vec::with_capacity(profiles * levels);
    for id in 0..profiles {
        let lat: f64 = rng.random_range(-60.0..60.0);
        let lon: f64 = rng.random_range(-180.0..180.0);
        let day: f64 = rng.random_range(1.0..90.0f64).floor();
        let year = 2010 + rng.random_range(0..5);
        for _ in 0..levels {
            let p: f64 = rng.random_range(5.0..15.0);
            let field = 28.0 * (lat.to_radians()).cos().powi(2) + 1.5 * (3.0 * lon.to_radians()).sin()
                - 0.05 * p
                + 0.8 * (2.0 * std::f64::consts::PI * day / 365.0).cos() * lat.signum();
            let noise: f64 = rng.sample(StandardNormal);
            ms.push(Measurement {
                profile_id: id as i64,
                latitude: lat,
                longitude: lon,
                pressure: p,
                day_of_year: day,
                year,
                value: field + 0.3 * noise,
            });
        }
    }
    let mut d = Dataset::new(ms, InputMode::Full7D);
    d.provenance.push(format!("synthetic: {profiles} profiles x {levels} levels"));
    d
}

/// Random but well-scaled mean-field coefficients centred on `(lat, lon)`.
pub fn random_rg_coefficients<R: Rng + ?Sized>(lat: f64, lon: f64, level: PressureLevel, rng: &mut R) -> RgCoefficients {
    let pw = level.width();
    let mut c = vec![15.0];
    c.push(rng.random_range(-0.3..0.3));
    c.push(rng.random_range(-0.3..0.3));
    c.push(rng.random_range(-0.5..0.5) / pw);
    c.push(rng.random_range(-3e-3..3e-3));
    c.push(rng.random_range(-3e-3..3e-3));
    c.push(rng.random_range(-0.05..0.05) / (pw * pw));
    c.extend((0..12).map(|_| rng.random_range(-1.0..1.0)));
    RgCoefficients::from_vec(&c, lat, lon, level, 2, 0)
}

/// Layout of a synthetic region for the moving-window baseline.
#[derive(Debug, Clone)]
pub struct RgFieldSpec {
    pub level: PressureLevel,
    pub center: (f64, f64),
    /// Profiles fall in a square of this half-width around `center`, in degrees.
    pub half_width: f64,
    pub profiles: usize,
    /// Measurements per profile, spread over the level's bin and its neighbours.
    pub per_profile: usize,
    /// Spatial anomaly `(sigma2, r_lat, r_lon)` under the exponential kernel, if any.
    pub anomaly: Option<(f64, f64, f64)>,
    pub noise_sd: f64,
}

/// Profiles from January to March whose values are `truth` plus an optional
/// anomaly field (shared by all measurements of a profile) plus white noise.
pub fn rg_field_dataset<R: Rng + ?Sized>(spec: &RgFieldSpec, truth: &RgCoefficients, rng: &mut R) -> Result<Dataset> {
    let bins = rg_bins(spec.level);
    let (p_lo, p_hi) = (bins[0].0, bins[2].1);
    let (clat, clon) = spec.center;
    let locs: Vec<(f64, f64)> = (0..spec.profiles)
        .map(|_| {
            (
                clat + rng.random_range(-spec.half_width..spec.half_width),
                wrap_lon(clon + rng.random_range(-spec.half_width..spec.half_width)),
            )
        })
        .collect();
    let anomaly = match spec.anomaly {
        None => vec![0.0; locs.len()],
        Some((sigma2, r_lat, r_lon)) => {
            let n = locs.len();
            let ranges = [r_lat, r_lon];
            let cov = DMatrix::from_fn(n, n, |i, j| {
                let d = [locs[i].0 - locs[j].0, wrap_lon(locs[i].1 - locs[j].1)];
                exp_ard(sigma2, &d, &ranges) + if i == j { 1e-10 * sigma2 } else { 0.0 }
            });
            let eps = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            (factor(cov)?.l() * eps).iter().copied().collect()
        }
    };
    let mut ms = Vec::with_capacity(spec.profiles * spec.per_profile);
    for (id, (&(lat, lon), a)) in locs.iter().zip(&anomaly).enumerate() {
        let day: f64 = rng.random_range(1.0..91.0f64).floor();
        let year = rng.random_range(2008..2017);
        for _ in 0..spec.per_profile {
            let p: f64 = rng.random_range(p_lo..p_hi);
            let noise = spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
            ms.push(Measurement {
                profile_id: id as i64,
                latitude: lat,
                longitude: lon,
                pressure: p,
                day_of_year: day,
                year,
                value: truth.mean_at(lat, lon, p, day) + a + noise,
            });
        }
    }
    let mut d = Dataset::new(ms, InputMode::NoSeason5D);
    d.provenance.push(format!(
        "synthetic mean field: {} profiles x {} around {:?}",
        spec.profiles, spec.per_profile, spec.center
    ));
    Ok(d)
}
