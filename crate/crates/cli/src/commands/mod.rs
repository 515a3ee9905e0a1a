pub mod data;
pub mod model;
pub mod report;
pub mod verify;

use std::io::Write;
use std::path::Path;

use argo_gp::data::{Dataset, PressureLevel};
use argo_gp::predict::{PredictiveDistribution, Predictions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::write_header;

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

/// Scenario label such as `Feb-10`.
pub fn scenario_label(test_month: u32, level: PressureLevel) -> String {
    let month = MONTHS.get(test_month.wrapping_sub(1) as usize).copied().unwrap_or("?");
    format!("{month}-{}", level.name())
}

/// One row of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub profile_id: i64,
    pub lat: f64,
    pub lon: f64,
    pub pressure: f64,
    pub day: f64,
    pub year: i32,
    pub observed: f64,
    pub mean: f64,
    pub variance: f64,
}

impl PredictionRow {
    pub fn distribution(&self, test_ref: usize) -> PredictiveDistribution {
        PredictiveDistribution {
            mean: self.mean,
            variance: self.variance,
            test_ref,
        }
    }
}

pub fn prediction_rows(predictions: &Predictions, test: &Dataset) -> Vec<PredictionRow> {
    predictions
        .points
        .iter()
        .map(|p| {
            let m = &test.measurements[p.test_ref];
            PredictionRow {
                profile_id: m.profile_id,
                lat: m.latitude,
                lon: m.longitude,
                pressure: m.pressure,
                day: m.day_of_year,
                year: m.year,
                observed: m.value,
                mean: p.mean,
                variance: p.variance,
            }
        })
        .collect()
}

pub fn write_predictions(w: &mut dyn Write, header: &[(&str, String)], rows: &[PredictionRow]) -> Result<()> {
    write_header(w, header)?;
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let file = crate::config::open_input(path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<PredictionRow>, _>>()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::data(format!("{} holds no predictions", path.display())));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(scenario_label(2, PressureLevel::P10), "Feb-10");
        assert_eq!(scenario_label(3, PressureLevel::P1500), "Mar-1500");
    }
}
