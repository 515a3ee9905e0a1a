//! Two-stage moving-window baseline: local Roemmich–Gilson mean fields, then
//! exponential-ARD Gaussian processes fitted to the anomalies in square
//! windows around each grid point.

mod io;
mod local;
mod rg;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{subset_pressure_bin, Dataset, Measurement, PressureLevel};
use crate::error::{Error, Result};
use crate::predict::{Predictions, PredictiveDistribution};
use crate::scoring::ScoringOptions;

pub use io::{read_local_grid, read_mean_grid, write_local_grid, write_mean_grid};
pub use local::{fit_local_gp, select_window, LocalGp, WindowPoint};
pub use rg::{
    compute_anomalies, d_rg, fit_mean_grid, fit_rg_mean, rg_bins, rg_design_row, weighted_rg_fit, MeanGrid,
    RgCandidates, RgCoefficients, RG_PERIOD, RG_TERMS, WEIGHT_EPS,
};

/// Longitude difference folded into `[-180, 180)`.
pub fn wrap_lon(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

/// Index of a cell on a regular latitude-longitude grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub ilat: i32,
    pub ilon: i32,
}

impl GridCell {
    fn lon_cells(res: f64) -> i32 {
        (360.0 / res).round() as i32
    }

    fn normalized(ilat: i32, ilon: i32, res: f64) -> GridCell {
        let n = Self::lon_cells(res);
        GridCell {
            ilat,
            ilon: (ilon + n / 2).rem_euclid(n) - n / 2,
        }
    }

    /// Cell whose centre is nearest to `(lat, lon)`.
    pub fn nearest(lat: f64, lon: f64, res: f64) -> GridCell {
        Self::normalized((lat / res).round() as i32, (lon / res).round() as i32, res)
    }

    pub fn center(self, res: f64) -> (f64, f64) {
        (self.ilat as f64 * res, self.ilon as f64 * res)
    }

    pub fn offset(self, dlat: i32, dlon: i32, res: f64) -> GridCell {
        Self::normalized(self.ilat + dlat, self.ilon + dlon, res)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MwgpVariant {
    /// Latitude and longitude ranges only.
    #[default]
    S,
    /// Adds a range in elapsed time.
    ST,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MwgpConfig {
    pub variant: MwgpVariant,
    /// Grid spacing for the mean fields, in degrees.
    pub mean_resolution: f64,
    /// Measurements taken from each of the three pressure bins per mean fit.
    pub k_per_bin: usize,
    /// Spacing of the local-GP window centres, in degrees.
    pub local_resolution: f64,
    /// Half the window side, in degrees.
    pub window_half_width: f64,
    pub min_window_points: usize,
    /// Windows holding more anomalies keep only those nearest the centre.
    pub max_window_points: usize,
    pub scoring: ScoringOptions,
}

impl Default for MwgpConfig {
    fn default() -> Self {
        MwgpConfig {
            variant: MwgpVariant::S,
            mean_resolution: 1.0,
            k_per_bin: 100,
            local_resolution: 1.0,
            window_half_width: 10.0,
            min_window_points: 20,
            max_window_points: 400,
            scoring: ScoringOptions::default(),
        }
    }
}

impl MwgpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mean_resolution", self.mean_resolution),
            ("local_resolution", self.local_resolution),
            ("window_half_width", self.window_half_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k_per_bin == 0 {
            return Err(Error::InvalidParams("k_per_bin must be at least 1".into()));
        }
        if self.max_window_points < self.min_window_points {
            return Err(Error::InvalidParams("max_window_points is below min_window_points".into()));
        }
        self.scoring.validate()
    }
}

/// Elapsed time in days, used by the spatio-temporal variant.
pub fn elapsed_days(m: &Measurement) -> f64 {
    m.year as f64 * RG_PERIOD + m.day_of_year
}

/// A fitted baseline: mean fields, local GPs and the anomalies they krige.
#[derive(Debug, Clone)]
pub struct MwgpModel {
    pub config: MwgpConfig,
    pub level: PressureLevel,
    pub means: MeanGrid,
    pub local: BTreeMap<GridCell, LocalGp>,
    /// Window centres without a usable local GP, with the reason.
    pub unfitted: Vec<(GridCell, String)>,
    pub anomalies: Vec<WindowPoint>,
    /// Training measurements dropped for lack of a mean field.
    pub dropped: usize,
}

fn window_point(m: &Measurement) -> WindowPoint {
    WindowPoint {
        lat: m.latitude,
        lon: m.longitude,
        time: elapsed_days(m),
        value: m.value,
    }
}

/// Fits the baseline for the pressure `level`.
///
/// Mean fields are fitted from `mean_train`, which may span all depths and a
/// wider time window; the local GPs see only the anomalies of `train` inside
/// the target bin. Mean fields and local GPs are fitted at the cells the
/// training anomalies and `test` points need.
pub fn fit_mwgp(
    mean_train: &Dataset,
    train: &Dataset,
    test: &Dataset,
    level: PressureLevel,
    config: &MwgpConfig,
) -> Result<MwgpModel> {
    config.validate()?;
    let train_bin = subset_pressure_bin(train, level);
    if train_bin.is_empty() {
        return Err(Error::EmptyDataset(format!("no training data in the {} dbar bin", level.name())));
    }
    let targets: Vec<&Measurement> = train_bin.measurements.iter().chain(&test.measurements).collect();
    let means = fit_mean_grid(mean_train, level, &targets, config);
    let (anom, dropped) = compute_anomalies(&train_bin, level, &means)?;
    let anomalies: Vec<WindowPoint> = anom.measurements.iter().map(window_point).collect();

    let mut cells: Vec<GridCell> = test
        .measurements
        .iter()
        .map(|m| GridCell::nearest(m.latitude, m.longitude, config.local_resolution))
        .collect();
    cells.sort();
    cells.dedup();
    let fits: Vec<(GridCell, Result<LocalGp>)> = cells
        .par_iter()
        .map(|&c| {
            let (lat, lon) = c.center(config.local_resolution);
            (c, fit_local_gp(lat, lon, &anomalies, config))
        })
        .collect();
    let mut local = BTreeMap::new();
    let mut unfitted = Vec::new();
    for (c, r) in fits {
        match r {
            Ok(gp) => {
                local.insert(c, gp);
            }
            Err(e) => {
                log::warn!("local GP at {:?} not fitted: {e}", c.center(config.local_resolution));
                unfitted.push((c, e.to_string()));
            }
        }
    }
    if local.is_empty() && !cells.is_empty() {
        return Err(Error::Degenerate("no window could be fitted".into()));
    }
    Ok(MwgpModel {
        config: config.clone(),
        level,
        means,
        local,
        unfitted,
        anomalies,
        dropped,
    })
}

impl MwgpModel {
    /// Rebuilds a model from stored mean fields and local GPs, recomputing the
    /// anomalies of `train` in the `level` bin.
    pub fn from_parts(
        means: MeanGrid,
        local: Vec<LocalGp>,
        train: &Dataset,
        level: PressureLevel,
        config: &MwgpConfig,
    ) -> Result<MwgpModel> {
        config.validate()?;
        let (anom, dropped) = compute_anomalies(&subset_pressure_bin(train, level), level, &means)?;
        let local = local
            .into_iter()
            .map(|gp| (GridCell::nearest(gp.lat, gp.lon, config.local_resolution), gp))
            .collect();
        Ok(MwgpModel {
            config: config.clone(),
            level,
            means,
            local,
            unfitted: Vec::new(),
            anomalies: anom.measurements.iter().map(window_point).collect(),
            dropped,
        })
    }
}

/// Predictions of the baseline, plus bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct MwgpPredictions {
    pub predictions: Predictions,
    /// The RG mean alone at each predicted point, aligned with `predictions.points`.
    pub mean_only: Vec<f64>,
    /// Points served by a neighbouring window because their own was unfitted.
    pub fallbacks: usize,
}

impl MwgpModel {
    /// Nearest fitted local GP to `(lat, lon)`; ties go to the smaller longitude, then latitude.
    pub fn local_for(&self, lat: f64, lon: f64) -> Option<(&LocalGp, bool)> {
        let home = GridCell::nearest(lat, lon, self.config.local_resolution);
        if let Some(gp) = self.local.get(&home) {
            return Some((gp, false));
        }
        self.local
            .values()
            .min_by(|a, b| {
                let da = (a.lat - lat).powi(2) + wrap_lon(a.lon - lon).powi(2);
                let db = (b.lat - lat).powi(2) + wrap_lon(b.lon - lon).powi(2);
                da.total_cmp(&db).then(a.lon.total_cmp(&b.lon)).then(a.lat.total_cmp(&b.lat))
            })
            .map(|gp| (gp, true))
    }

    /// Mean field plus kriged anomaly at each test measurement.
    pub fn predict(&self, test: &Dataset) -> MwgpPredictions {
        let outcomes: Vec<Option<(PredictiveDistribution, f64, bool, bool)>> = test
            .measurements
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                let mu = self.means.mean_at(self.level, m)?;
                let (gp, fallback) = self.local_for(m.latitude, m.longitude)?;
                let (mean, var, clamped) = gp.krige(&self.anomalies, &self.config, &window_point(m)).ok()?;
                Some((
                    PredictiveDistribution {
                        mean: mu + mean,
                        variance: var,
                        test_ref: i,
                    },
                    mu,
                    fallback,
                    clamped,
                ))
            })
            .collect();
        let mut out = MwgpPredictions::default();
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Some((p, mu, fallback, clamped)) => {
                    out.predictions.points.push(p);
                    out.predictions.clamped += usize::from(clamped);
                    out.mean_only.push(mu);
                    out.fallbacks += usize::from(fallback);
                }
                None => out.predictions.failed.push(i),
            }
        }
        if out.fallbacks > 0 {
            log::info!("{} test point(s) used a neighbouring window", out.fallbacks);
        }
        if !out.predictions.failed.is_empty() {
            log::warn!("{} test point(s) could not be predicted", out.predictions.failed.len());
        }
        out
    }

    /// Largest difference between the kriged anomalies of two adjacent fitted
    /// windows, evaluated midway between their centres.
    pub fn boundary_jump(&self) -> Option<f64> {
        let res = self.config.local_resolution;
        let time = self.anomalies.iter().map(|a| a.time).sum::<f64>() / self.anomalies.len().max(1) as f64;
        let mut worst: Option<f64> = None;
        for (cell, gp) in &self.local {
            for (dl, dk) in [(1, 0), (0, 1)] {
                let Some(other) = self.local.get(&cell.offset(dl, dk, res)) else {
                    continue;
                };
                let q = WindowPoint {
                    lat: 0.5 * (gp.lat + other.lat),
                    lon: gp.lon + 0.5 * wrap_lon(other.lon - gp.lon),
                    time,
                    value: 0.0,
                };
                if let (Ok(a), Ok(b)) = (
                    gp.krige(&self.anomalies, &self.config, &q),
                    other.krige(&self.anomalies, &self.config, &q),
                ) {
                    let jump = (a.0 - b.0).abs();
                    worst = Some(worst.map_or(jump, |w| w.max(jump)));
                }
            }
        }
        worst
    }
}
