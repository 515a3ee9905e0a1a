//! Roemmich–Gilson local mean fields.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{wrap_lon, GridCell, MwgpConfig};
use crate::data::{Dataset, Measurement, PressureLevel};
use crate::error::{Error, Result};
use crate::linalg::pivoted_least_squares;
use crate::points::PointSet;
use crate::vecchia::kdtree::{KdTree, Neighbors};

pub const RG_TERMS: usize = 19;
pub const RG_PERIOD: f64 = 365.25;
/// Added to the distance before inverting it into a weight.
pub const WEIGHT_EPS: f64 = 1e-6;
const RCOND: f64 = 1e-11;

/// `(1, l, L, p, l^2, L^2, p^2, sin(2 pi k d / P), k = 1..6, cos(...), k = 1..6)`.
pub fn rg_design_row(l: f64, lon: f64, p: f64, d: f64) -> [f64; RG_TERMS] {
    let mut row = [0.0; RG_TERMS];
    row[..7].copy_from_slice(&[1.0, l, lon, p, l * l, lon * lon, p * p]);
    for k in 1..=6 {
        let a = 2.0 * std::f64::consts::PI * k as f64 * d / RG_PERIOD;
        row[6 + k] = a.sin();
        row[12 + k] = a.cos();
    }
    row
}

/// Distance between a measurement `s = (l, L, p)` and a grid point. The
/// pressure term is taken as zero when both pressures are zero.
pub fn d_rg(s: [f64; 3], g: [f64; 3]) -> f64 {
    d_rg2(s, g).sqrt()
}

fn d_rg2(s: [f64; 3], g: [f64; 3]) -> f64 {
    let dl = s[0] - g[0];
    let dlon = wrap_lon(s[1] - g[1]);
    dl * dl + dlon * dlon + pressure_term(s[2], g[2])
}

fn pressure_term(p: f64, pg: f64) -> f64 {
    let den = p * p + pg * pg;
    if den == 0.0 {
        0.0
    } else {
        5.0 * (200.0 * (p - pg)).powi(2) / den
    }
}

/// Fitted coefficients of one local mean field. Longitude enters the design
/// as `lon_g + wrap(lon - lon_g)` so fields straddling the dateline stay smooth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgCoefficients {
    pub beta: [f64; 7],
    pub gamma: [f64; 6],
    pub delta: [f64; 6],
    pub lat: f64,
    pub lon: f64,
    pub level: PressureLevel,
    pub month: u32,
    pub n_used: usize,
}

impl RgCoefficients {
    pub fn from_vec(c: &[f64], lat: f64, lon: f64, level: PressureLevel, month: u32, n_used: usize) -> Self {
        assert_eq!(c.len(), RG_TERMS);
        let mut beta = [0.0; 7];
        let mut gamma = [0.0; 6];
        let mut delta = [0.0; 6];
        beta.copy_from_slice(&c[..7]);
        gamma.copy_from_slice(&c[7..13]);
        delta.copy_from_slice(&c[13..]);
        RgCoefficients {
            beta,
            gamma,
            delta,
            lat,
            lon,
            level,
            month,
            n_used,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.gamma).chain(&self.delta).copied().collect()
    }

    /// Local longitude used in the design for a measurement at `lon`.
    pub fn local_lon(&self, lon: f64) -> f64 {
        self.lon + wrap_lon(lon - self.lon)
    }

    pub fn mean_at(&self, lat: f64, lon: f64, p: f64, day: f64) -> f64 {
        let row = rg_design_row(lat, self.local_lon(lon), p, day);
        row.iter().zip(self.to_vec()).map(|(x, c)| x * c).sum()
    }
}

/// The target bin and the two bins of equal width on either side.
pub fn rg_bins(level: PressureLevel) -> [(f64, f64); 3] {
    let (lo, hi) = level.bounds();
    let w = hi - lo;
    [((lo - w).max(0.0), lo), (lo, hi), (hi, hi + w)]
}

fn bin_of(bins: &[(f64, f64); 3], p: f64) -> Option<usize> {
    // the target bin is closed, its neighbours exclude the shared edge
    if p >= bins[1].0 && p <= bins[1].1 {
        Some(1)
    } else if p >= bins[0].0 && p < bins[0].1 {
        Some(0)
    } else if p > bins[2].0 && p <= bins[2].1 {
        Some(2)
    } else {
        None
    }
}

/// Candidate measurements for one (level, month) family of fits, bucketed by bin.
pub struct RgCandidates<'a> {
    measurements: Vec<&'a Measurement>,
    bins: [(f64, f64); 3],
    level: PressureLevel,
    month: u32,
    trees: [Option<(KdTree, Vec<usize>)>; 3],
}

/// Months within one of `month`, cyclically.
fn near_month(month: u32, other: u32) -> bool {
    let d = (month as i32 - other as i32).rem_euclid(12);
    d <= 1 || d == 11
}

impl<'a> RgCandidates<'a> {
    pub fn new(train: &'a Dataset, level: PressureLevel, month: u32) -> Self {
        let bins = rg_bins(level);
        let measurements: Vec<&Measurement> = train
            .measurements
            .iter()
            .filter(|m| near_month(month, m.month()) && bin_of(&bins, m.pressure).is_some())
            .collect();
        let trees = std::array::from_fn(|b| {
            let idx: Vec<usize> = (0..measurements.len())
                .filter(|&i| bin_of(&bins, measurements[i].pressure) == Some(b))
                .collect();
            if idx.is_empty() {
                return None;
            }
            let coords: Vec<f64> = idx
                .iter()
                .flat_map(|&i| [measurements[i].latitude, measurements[i].longitude])
                .collect();
            Some((KdTree::new(&PointSet::new(2, coords)), idx))
        });
        RgCandidates {
            measurements,
            bins,
            level,
            month,
            trees,
        }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// The `k` measurements of bin `b` nearest to `g` under `d_rg`, as
    /// `(d_rg^2, index)`. Horizontal distance bounds `d_rg` from below, so a
    /// growing horizontal radius search finds them exactly.
    fn nearest_in_bin(&self, b: usize, g: [f64; 3], k: usize) -> Vec<(f64, usize)> {
        let Some((tree, idx)) = &self.trees[b] else {
            return Vec::new();
        };
        let k = k.min(idx.len());
        let mut nb = Neighbors::new(k);
        let mut radius: f64 = 2.0;
        loop {
            nb.reset(k);
            let mut offer = |pos: usize| {
                let m = self.measurements[idx[pos]];
                nb.offer(d_rg2([m.latitude, m.longitude, m.pressure], g), idx[pos]);
            };
            if radius >= 180.0 {
                (0..idx.len()).for_each(&mut offer);
                break;
            }
            for shift in [-360.0, 0.0, 360.0] {
                tree.within(&[g[0], g[1] + shift], radius * radius, |pos, _| offer(pos));
            }
            let items = nb.items();
            if items.len() == k && items.last().is_some_and(|(d2, _)| *d2 <= radius * radius) {
                break;
            }
            radius *= 2.0;
        }
        nb.items().to_vec()
    }
}

/// Weighted least-squares RG fit at one grid point from the `k_per_bin`
/// nearest measurements of each of the three bins.
pub fn fit_rg_mean(lat: f64, lon: f64, candidates: &RgCandidates<'_>, k_per_bin: usize) -> Result<RgCoefficients> {
    let g = [lat, lon, candidates.level.nominal()];
    let mut chosen = Vec::new();
    for b in 0..3 {
        let got = candidates.nearest_in_bin(b, g, k_per_bin);
        if got.len() < k_per_bin {
            log::debug!(
                "grid ({lat}, {lon}): bin {:?} has {} of {k_per_bin} measurements",
                candidates.bins[b],
                got.len()
            );
        }
        chosen.extend(got);
    }
    let rows: Vec<(f64, &Measurement)> = chosen
        .iter()
        .map(|&(d2, i)| (1.0 / (d2.sqrt() + WEIGHT_EPS), candidates.measurements[i]))
        .collect();
    let coeffs = weighted_rg_fit(lon, &rows)?;
    Ok(RgCoefficients::from_vec(
        &coeffs,
        lat,
        lon,
        candidates.level,
        candidates.month,
        rows.len(),
    ))
}

/// Weighted least squares of the response on the RG design, with every
/// non-constant column centred and scaled before a pivoted QR solve.
pub fn weighted_rg_fit(center_lon: f64, rows: &[(f64, &Measurement)]) -> Result<Vec<f64>> {
    let n = rows.len();
    if n < RG_TERMS {
        return Err(Error::Degenerate(format!("{n} measurements for a {RG_TERMS}-term mean field")));
    }
    let design: Vec<[f64; RG_TERMS]> = rows
        .iter()
        .map(|(_, m)| {
            let lon = center_lon + wrap_lon(m.longitude - center_lon);
            rg_design_row(m.latitude, lon, m.pressure, m.day_of_year)
        })
        .collect();
    let wsum: f64 = rows.iter().map(|r| r.0).sum();
    let mut center = [0.0; RG_TERMS];
    let mut scale = [1.0; RG_TERMS];
    for j in 1..RG_TERMS {
        center[j] = rows.iter().zip(&design).map(|(r, x)| r.0 * x[j]).sum::<f64>() / wsum;
        let var = rows.iter().zip(&design).map(|(r, x)| r.0 * (x[j] - center[j]).powi(2)).sum::<f64>() / wsum;
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    let mut a = vec![0.0; n * RG_TERMS];
    let mut b = vec![0.0; n];
    for (i, ((w, m), x)) in rows.iter().zip(&design).enumerate() {
        let sw = w.sqrt();
        a[i] = sw;
        for j in 1..RG_TERMS {
            a[j * n + i] = sw * (x[j] - center[j]) / scale[j];
        }
        b[i] = sw * m.value;
    }
    // the intercept is kept; the rest may be dropped as dependent
    let ls = pivoted_least_squares(&a, n, RG_TERMS, &b, 1, RCOND);
    if !ls.dropped.is_empty() {
        log::warn!("mean field: dependent design columns {:?} set to zero", ls.dropped);
    }
    let mut x = ls.coefficients;
    // one step of iterative refinement on the residual
    let resid: Vec<f64> = (0..n)
        .map(|i| b[i] - (0..RG_TERMS).map(|j| a[j * n + i] * x[j]).sum::<f64>())
        .collect();
    let dx = pivoted_least_squares(&a, n, RG_TERMS, &resid, 1, RCOND).coefficients;
    for (xj, d) in x.iter_mut().zip(dx) {
        *xj += d;
    }
    let mut c = vec![0.0; RG_TERMS];
    c[0] = x[0];
    for j in 1..RG_TERMS {
        c[j] = x[j] / scale[j];
        c[0] -= c[j] * center[j];
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mean-field coefficients".into()));
    }
    Ok(c)
}

/// Fitted mean fields keyed by level, month and grid cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanGrid {
    pub resolution: f64,
    pub fields: BTreeMap<(PressureLevel, u32, GridCell), RgCoefficients>,
    /// Cells whose fit failed, with the reason.
    pub failed: Vec<(PressureLevel, u32, GridCell, String)>,
}

impl MeanGrid {
    /// Nearest fitted field within two cells of `(lat, lon)`, by horizontal
    /// Euclidean degrees; ties go to the smaller longitude, then latitude.
    pub fn nearest(&self, level: PressureLevel, month: u32, lat: f64, lon: f64) -> Option<&RgCoefficients> {
        let home = GridCell::nearest(lat, lon, self.resolution);
        let mut best: Option<(f64, f64, f64, &RgCoefficients)> = None;
        for dl in -2..=2 {
            for dk in -2..=2 {
                let cell = home.offset(dl, dk, self.resolution);
                let Some(f) = self.fields.get(&(level, month, cell)) else {
                    continue;
                };
                let d = (f.lat - lat).powi(2) + wrap_lon(f.lon - lon).powi(2);
                let key = (d, f.lon, f.lat);
                if best.is_none_or(|b| key < (b.0, b.1, b.2)) {
                    best = Some((key.0, key.1, key.2, f));
                }
            }
        }
        best.map(|b| b.3)
    }

    pub fn mean_at(&self, level: PressureLevel, m: &Measurement) -> Option<f64> {
        self.nearest(level, m.month(), m.latitude, m.longitude)
            .map(|f| f.mean_at(m.latitude, m.longitude, m.pressure, m.day_of_year))
    }
}

/// Fits a mean field at every grid cell nearest to one of `targets`, for the
/// month of each target, using `train` across depth.
pub fn fit_mean_grid(train: &Dataset, level: PressureLevel, targets: &[&Measurement], cfg: &MwgpConfig) -> MeanGrid {
    let mut wanted: BTreeMap<u32, Vec<GridCell>> = BTreeMap::new();
    for m in targets {
        wanted
            .entry(m.month())
            .or_default()
            .push(GridCell::nearest(m.latitude, m.longitude, cfg.mean_resolution));
    }
    let mut grid = MeanGrid {
        resolution: cfg.mean_resolution,
        ..Default::default()
    };
    for (month, mut cells) in wanted {
        cells.sort();
        cells.dedup();
        let cand = RgCandidates::new(train, level, month);
        let fits: Vec<(GridCell, Result<RgCoefficients>)> = cells
            .par_iter()
            .map(|&c| {
                let (lat, lon) = c.center(cfg.mean_resolution);
                (c, fit_rg_mean(lat, lon, &cand, cfg.k_per_bin))
            })
            .collect();
        for (cell, r) in fits {
            match r {
                Ok(f) => {
                    grid.fields.insert((level, month, cell), f);
                }
                Err(e) => {
                    log::warn!("mean field at {cell:?} (month {month}) not fitted: {e}");
                    grid.failed.push((level, month, cell, e.to_string()));
                }
            }
        }
    }
    grid
}

/// Replaces each value by its anomaly from the nearest fitted mean field.
/// Measurements without a field within two cells are dropped and counted.
pub fn compute_anomalies(d: &Dataset, level: PressureLevel, grid: &MeanGrid) -> Result<(Dataset, usize)> {
    if grid.fields.is_empty() {
        return Err(Error::EmptyDataset("no fitted mean fields".into()));
    }
    let means: Vec<Option<f64>> = d.measurements.iter().map(|m| grid.mean_at(level, m)).collect();
    let dropped = means.iter().filter(|m| m.is_none()).count();
    if dropped > 0 {
        log::warn!("{dropped} measurement(s) have no mean field within two cells and were dropped");
    }
    let mut it = means.iter();
    let kept = d.filter("has a fitted mean field", |_| it.next().is_some_and(|m| m.is_some()));
    let values: Vec<f64> = kept
        .measurements
        .iter()
        .zip(means.iter().flatten())
        .map(|(m, mu)| m.value - mu)
        .collect();
    Ok((kept.with_values(&values, "anomalies from the RG mean"), dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InputMode;

    #[test]
    fn design_row_examples() {
        let r = rg_design_row(0.0, 0.0, 0.0, 0.0);
        assert_eq!(&r[..13], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&r[13..], &[1.0; 6]);
        let q = rg_design_row(1.0, 2.0, 3.0, RG_PERIOD / 4.0);
        assert!((q[7] - 1.0).abs() < 1e-12);
        assert!(q[13].abs() < 1e-12);
        assert_eq!(&q[..7], &[1.0, 1.0, 2.0, 3.0, 1.0, 4.0, 9.0]);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(d_rg([3.0, 4.0, 10.0], [3.0, 4.0, 10.0]), 0.0);
        assert!((d_rg([3.0, 4.0, 10.0], [0.0, 0.0, 10.0]) - 5.0).abs() < 1e-12);
        assert!((d_rg([1.0, 1.0, 10.0], [1.0, 1.0, 20.0]) - 200.0).abs() < 1e-9);
        assert_eq!(d_rg([1.0, 2.0, 0.0], [1.0, 2.0, 0.0]), 0.0);
        assert!((d_rg([0.0, 179.0, 5.0], [0.0, -179.0, 5.0]) - 2.0).abs() < 1e-12);
        let (a, b) = ([1.5, -20.0, 12.0], [-3.0, 40.0, 300.0]);
        assert_eq!(d_rg(a, b), d_rg(b, a));
    }

    fn m(lat: f64, lon: f64, p: f64, day: f64, value: f64) -> Measurement {
        Measurement {
            profile_id: 0,
            latitude: lat,
            longitude: lon,
            pressure: p,
            day_of_year: day,
            year: 2011,
            value,
        }
    }

    #[test]
    fn constant_field_is_an_intercept() {
        let rows: Vec<Measurement> = (0..60)
            .map(|i| {
                let f = i as f64;
                m((f * 0.37) % 9.0, (f * 1.3) % 11.0, 5.0 + (f * 0.7) % 20.0, 1.0 + (f * 6.1) % 364.0, 4.2)
            })
            .collect();
        let weighted: Vec<(f64, &Measurement)> = rows.iter().enumerate().map(|(i, r)| (1.0 + i as f64, r)).collect();
        let c = weighted_rg_fit(5.0, &weighted).unwrap();
        assert!((c[0] - 4.2).abs() < 1e-8);
        assert!(c[1..].iter().all(|x| x.abs() < 1e-8), "{c:?}");
    }

    #[test]
    fn duplicates_match_doubled_weights() {
        let rows: Vec<Measurement> = (0..40)
            .map(|i| {
                let f = i as f64;
                m((f * 0.37) % 9.0, (f * 1.3) % 11.0, 5.0 + (f * 0.7) % 20.0, 1.0 + (f * 6.1) % 364.0, (f * 0.91).sin())
            })
            .collect();
        let mut dup: Vec<(f64, &Measurement)> = rows.iter().map(|r| (1.0, r)).collect();
        dup.push((1.0, &rows[3]));
        let mut doubled: Vec<(f64, &Measurement)> = rows.iter().map(|r| (1.0, r)).collect();
        doubled[3].0 = 2.0;
        let a = weighted_rg_fit(5.0, &dup).unwrap();
        let b = weighted_rg_fit(5.0, &doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0));
        }
    }

    #[test]
    fn neighbour_search_matches_brute_force() {
        let ms: Vec<Measurement> = (0..400)
            .map(|i| {
                let f = i as f64;
                m(((f * 7.3) % 60.0) - 30.0, ((f * 13.7) % 360.0) - 180.0, (f * 0.61) % 25.0, 40.0, 0.0)
            })
            .collect();
        let d = Dataset::new(ms, InputMode::Full7D);
        let cand = RgCandidates::new(&d, PressureLevel::P10, 2);
        for g in [[0.0, 0.0, 10.0], [10.0, 179.5, 10.0], [-29.0, -170.0, 10.0]] {
            for b in 0..3 {
                let got = cand.nearest_in_bin(b, g, 7);
                let mut all: Vec<(f64, usize)> = (0..cand.len())
                    .filter(|&i| bin_of(&cand.bins, cand.measurements[i].pressure) == Some(b))
                    .map(|i| {
                        let x = cand.measurements[i];
                        (d_rg2([x.latitude, x.longitude, x.pressure], g), i)
                    })
                    .collect();
                all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                all.truncate(7);
                assert_eq!(got, all);
            }
        }
    }

    #[test]
    fn noiseless_fields_are_recovered() {
        use crate::synthetic::{random_rg_coefficients, rg_field_dataset, RgFieldSpec};
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        for (seed, level, center) in [
            (1, PressureLevel::P10, (20.0, -40.0)),
            (2, PressureLevel::P300, (-35.0, 179.0)),
            (3, PressureLevel::P1500, (0.0, 150.0)),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_rg_coefficients(center.0, center.1, level, &mut rng);
            let spec = RgFieldSpec {
                level,
                center,
                half_width: 6.0,
                profiles: 400,
                per_profile: 4,
                anomaly: None,
                noise_sd: 0.0,
            };
            let data = rg_field_dataset(&spec, &truth, &mut rng).unwrap();
            let cand = RgCandidates::new(&data, level, 2);
            let fit = fit_rg_mean(center.0, center.1, &cand, 100).unwrap();
            let (est, tru) = (fit.to_vec(), truth.to_vec());
            let err = est.iter().zip(&tru).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = tru.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(err / norm < 1e-6, "seed {seed}: relative error {:e}", err / norm);
            // weights of every measurement bound those of the selected ones
            let g = [center.0, center.1, level.nominal()];
            let objective: f64 = data
                .measurements
                .iter()
                .map(|m| {
                    let w = 1.0 / (d_rg([m.latitude, m.longitude, m.pressure], g) + WEIGHT_EPS);
                    w * (fit.mean_at(m.latitude, m.longitude, m.pressure, m.day_of_year) - m.value).powi(2)
                })
                .sum();
            assert!(objective < 1e-10, "seed {seed}: {objective:e}");
        }
    }
}
