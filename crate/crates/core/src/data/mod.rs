//! Profile measurements, model-input encoding, and scenario construction.
//!
//! A [`Measurement`] is one observation at one depth of one float profile. Every
//! measurement carries an [`Input7D`] encoding of its coordinates, where the
//! circular covariates (longitude and day of year) are mapped onto the unit
//! circle so that the dateline and the turn of the year are continuous.

mod csv_io;
mod scenario;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::points::PointSet;

pub use csv_io::{parse_profiles, write_dataset, write_provenance, ColumnSchema, ParseOptions};
pub use scenario::{
    haversine_km, sample_profiles, split_train_test, subset_months, subset_pressure_bin, subset_region,
    PressureLevel, EARTH_RADIUS_KM,
};

/// Period of the seasonal encoding, in days. Leap years are not special-cased.
pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub profile_id: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub pressure: f64,
    pub day_of_year: f64,
    pub year: i32,
    pub value: f64,
}

impl Measurement {
    /// Returns the name of the first field that violates its documented range.
    pub fn range_violation(&self) -> Option<(&'static str, f64)> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Some(("latitude", self.latitude));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Some(("longitude", self.longitude));
        }
        if !(self.pressure >= 0.0 && self.pressure.is_finite()) {
            return Some(("pressure", self.pressure));
        }
        if !(1.0..366.0).contains(&self.day_of_year) {
            return Some(("day", self.day_of_year));
        }
        if !self.value.is_finite() {
            return Some(("value", self.value));
        }
        None
    }

    pub fn month(&self) -> u32 {
        month_of_day(self.day_of_year, self.year)
    }
}

/// Calendar month (1-12) of a day-of-year number; fractional days are floored.
pub fn month_of_day(day_of_year: f64, year: i32) -> u32 {
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let lengths = [31, if leap { 29 } else { 28 }, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let mut day = day_of_year.floor().max(1.0) as u32;
    for (i, len) in lengths.iter().enumerate() {
        if day <= *len {
            return i as u32 + 1;
        }
        day -= len;
    }
    12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum InputMode {
    #[default]
    Full7D,
    NoSeason5D,
}

impl InputMode {
    pub fn dim(self) -> usize {
        match self {
            InputMode::Full7D => 7,
            InputMode::NoSeason5D => 5,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        &DIMENSION_LABELS[..self.dim()]
    }
}

/// Labels of the model dimensions, in storage order.
pub const DIMENSION_LABELS: [&str; 7] = ["l", "L_s", "L_c", "p", "y", "d_s", "d_c"];

/// Model coordinates `(l, L_s, L_c, p, y, d_s, d_c)`.
///
/// The seasonal pair is stored last, so the 5D representation is simply the
/// leading five coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Input7D {
    values: [f64; 7],
    pub mode: InputMode,
}

impl Input7D {
    pub fn l(&self) -> f64 {
        self.values[0]
    }
    pub fn lon_sin(&self) -> f64 {
        self.values[1]
    }
    pub fn lon_cos(&self) -> f64 {
        self.values[2]
    }
    pub fn p(&self) -> f64 {
        self.values[3]
    }
    pub fn y(&self) -> f64 {
        self.values[4]
    }
    pub fn day_sin(&self) -> f64 {
        self.values[5]
    }
    pub fn day_cos(&self) -> f64 {
        self.values[6]
    }

    /// Coordinates that take part in distance computations under `self.mode`.
    pub fn coords(&self) -> &[f64] {
        &self.values[..self.mode.dim()]
    }

    pub fn all_values(&self) -> &[f64; 7] {
        &self.values
    }

    pub fn with_mode(mut self, mode: InputMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Encodes raw coordinates into model inputs.
pub fn transform_input(lat: f64, lon: f64, p: f64, day: f64, year: i32, mode: InputMode) -> Input7D {
    let lon_angle = PI * lon / 180.0;
    let day_angle = 2.0 * PI * day / DAYS_PER_YEAR;
    Input7D {
        values: [
            lat,
            lon_angle.sin(),
            lon_angle.cos(),
            p,
            f64::from(year),
            day_angle.sin(),
            day_angle.cos(),
        ],
        mode,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub measurements: Vec<Measurement>,
    pub inputs: Vec<Input7D>,
    /// Free-text record of the filters applied so far, oldest first.
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn new(measurements: Vec<Measurement>, mode: InputMode) -> Self {
        let inputs = measurements
            .iter()
            .map(|m| transform_input(m.latitude, m.longitude, m.pressure, m.day_of_year, m.year, mode))
            .collect();
        Dataset {
            measurements,
            inputs,
            provenance: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn mode(&self) -> InputMode {
        self.inputs.first().map(|i| i.mode).unwrap_or_default()
    }

    pub fn with_mode(&self, mode: InputMode) -> Dataset {
        Dataset {
            measurements: self.measurements.clone(),
            inputs: self.inputs.iter().map(|i| i.with_mode(mode)).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.measurements.iter().map(|m| m.value).collect()
    }

    /// Active model coordinates as a dense point set.
    pub fn points(&self) -> PointSet {
        let dim = self.mode().dim();
        let mut data = Vec::with_capacity(self.len() * dim);
        for input in &self.inputs {
            data.extend_from_slice(input.coords());
        }
        PointSet::new(dim, data)
    }

    /// Keeps the entries for which `keep` returns true, and records `note`.
    pub fn filter<F>(&self, note: impl Into<String>, mut keep: F) -> Dataset
    where
        F: FnMut(&Measurement) -> bool,
    {
        let mut measurements = Vec::new();
        let mut inputs = Vec::new();
        for (m, i) in self.measurements.iter().zip(&self.inputs) {
            if keep(m) {
                measurements.push(*m);
                inputs.push(*i);
            }
        }
        let mut provenance = self.provenance.clone();
        provenance.push(note.into());
        Dataset {
            measurements,
            inputs,
            provenance,
        }
    }

    /// Distinct profile ids in ascending order.
    pub fn profile_ids(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.measurements.iter().map(|m| m.profile_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Replaces the response values, keeping coordinates and provenance.
    pub fn with_values(&self, values: &[f64], note: impl Into<String>) -> Dataset {
        assert_eq!(values.len(), self.len());
        let mut out = self.clone();
        for (m, v) in out.measurements.iter_mut().zip(values) {
            m.value = *v;
        }
        out.provenance.push(note.into());
        out
    }
}
