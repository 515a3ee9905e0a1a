use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum PressureLevel {
    P10,
    P300,
    P1500,
}

impl PressureLevel {
    pub const ALL: [PressureLevel; 3] = [PressureLevel::P10, PressureLevel::P300, PressureLevel::P1500];

    /// Closed pressure interval, in dbar.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            PressureLevel::P10 => (5.0, 15.0),
            PressureLevel::P300 => (290.0, 310.0),
            PressureLevel::P1500 => (1450.0, 1550.0),
        }
    }

    pub fn nominal(self) -> f64 {
        match self {
            PressureLevel::P10 => 10.0,
            PressureLevel::P300 => 300.0,
            PressureLevel::P1500 => 1500.0,
        }
    }

    pub fn width(self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    pub fn contains(self, p: f64) -> bool {
        let (lo, hi) = self.bounds();
        p >= lo && p <= hi
    }

    pub fn name(self) -> &'static str {
        match self {
            PressureLevel::P10 => "10",
            PressureLevel::P300 => "300",
            PressureLevel::P1500 => "1500",
        }
    }
}

impl std::str::FromStr for PressureLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches('P') {
            "10" => Ok(PressureLevel::P10),
            "300" => Ok(PressureLevel::P300),
            "1500" => Ok(PressureLevel::P1500),
            _ => Err(Error::InvalidParams(format!("unknown pressure level `{s}`"))),
        }
    }
}

pub fn subset_pressure_bin(d: &Dataset, level: PressureLevel) -> Dataset {
    let (lo, hi) = level.bounds();
    d.filter(format!("pressure in [{lo}, {hi}] dbar"), |m| level.contains(m.pressure))
}

/// Great-circle distance in km by the haversine formula.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn subset_region(d: &Dataset, center_lat: f64, center_lon: f64, radius_km: f64) -> Result<Dataset> {
    if !(radius_km > 0.0) {
        return Err(Error::InvalidParams(format!("region radius must be positive, got {radius_km}")));
    }
    Ok(d.filter(
        format!("within {radius_km} km of ({center_lat}, {center_lon})"),
        |m| haversine_km(center_lat, center_lon, m.latitude, m.longitude) <= radius_km,
    ))
}

/// Keeps measurements whose calendar month is in `months` (1-12).
pub fn subset_months(d: &Dataset, months: &[u32]) -> Dataset {
    d.filter(format!("months {months:?}"), |m| months.contains(&m.month()))
}

/// Keeps at most `max_profiles` profiles, chosen by a seeded shuffle of the sorted ids.
pub fn sample_profiles(d: &Dataset, max_profiles: usize, seed: u64) -> Dataset {
    let mut ids = d.profile_ids();
    if ids.len() <= max_profiles {
        return d.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let keep: HashSet<i64> = ids[..max_profiles].iter().copied().collect();
    d.filter(format!("{max_profiles} profiles sampled with seed {seed}"), |m| {
        keep.contains(&m.profile_id)
    })
}

/// Splits by profile: a seeded shuffle of the sorted profile ids puts the first
/// `round(train_fraction * n)` profiles in training. With `test_month`, testing
/// profiles from other months are dropped (not moved to training).
pub fn split_train_test(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
    test_month: Option<u32>,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParams(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut ids = d.profile_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = (train_fraction * ids.len() as f64).round() as usize;
    let train_ids: HashSet<i64> = ids[..n_train.min(ids.len())].iter().copied().collect();

    let train = d.filter(
        format!("train split: fraction {train_fraction}, seed {seed}"),
        |m| train_ids.contains(&m.profile_id),
    );
    let mut test = d.filter(
        format!("test split: fraction {}, seed {seed}", 1.0 - train_fraction),
        |m| !train_ids.contains(&m.profile_id),
    );
    if let Some(month) = test_month {
        test = test.filter(format!("test month {month}"), |m| m.month() == month);
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split is empty".into()));
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("testing split is empty".into()));
    }
    Ok((train, test))
}
