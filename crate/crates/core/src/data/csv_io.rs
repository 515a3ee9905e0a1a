use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Dataset, InputMode, Measurement};
use crate::error::{Error, Result};

/// Maps logical fields onto column names of the input table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub profile_id: String,
    pub lat: String,
    pub lon: String,
    pub pressure: String,
    pub day: String,
    pub year: String,
    pub value: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            profile_id: "profile_id".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            pressure: "pressure".into(),
            day: "day".into(),
            year: "year".into(),
            value: "value".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub delimiter: u8,
    pub schema: ColumnSchema,
    pub mode: InputMode,
    /// Drop out-of-range rows instead of failing.
    pub skip_out_of_range: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            delimiter: b',',
            schema: ColumnSchema::default(),
            mode: InputMode::Full7D,
            skip_out_of_range: false,
        }
    }
}

// Logical field names as reported in errors.
const FIELDS: [&str; 7] = ["profile_id", "latitude", "longitude", "pressure", "day", "year", "value"];

/// Reads a delimited table of measurements. Lines starting with `#` are ignored.
///
/// Row numbers in errors are file line numbers, so the first data row after the
/// header is row 2.
pub fn parse_profiles<R: Read>(reader: R, options: &ParseOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let s = &options.schema;
    let wanted = [&s.profile_id, &s.lat, &s.lon, &s.pressure, &s.day, &s.year, &s.value];
    let mut columns = [0usize; 7];
    for (slot, name) in columns.iter_mut().zip(wanted) {
        *slot = headers
            .iter()
            .position(|h| h == name.as_str())
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    }

    let mut measurements = Vec::new();
    let mut rows = Vec::new();
    let mut bad_parse: Option<(usize, String, String)> = None;
    let mut bad_parse_count = 0usize;
    let mut bad_range: Option<(usize, &'static str, f64)> = None;
    let mut bad_range_count = 0usize;

    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut nums = [0f64; 7];
        let mut failed = false;
        for (k, &col) in columns.iter().enumerate() {
            let raw = record.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() || k == 6 => nums[k] = v,
                _ => {
                    failed = true;
                    if bad_parse.is_none() {
                        bad_parse = Some((row, FIELDS[k].to_string(), format!("cannot parse `{raw}`")));
                    }
                    break;
                }
            }
        }
        if !failed && (nums[0].fract() != 0.0 || nums[5].fract() != 0.0) {
            failed = true;
            if bad_parse.is_none() {
                let field = if nums[0].fract() != 0.0 { 0 } else { 5 };
                bad_parse = Some((row, FIELDS[field].to_string(), "expected an integer".into()));
            }
        }
        if failed {
            bad_parse_count += 1;
            continue;
        }
        let m = Measurement {
            profile_id: nums[0] as i64,
            latitude: nums[1],
            longitude: nums[2],
            pressure: nums[3],
            day_of_year: nums[4],
            year: nums[5] as i32,
            value: nums[6],
        };
        if let Some((field, value)) = m.range_violation() {
            bad_range_count += 1;
            if bad_range.is_none() {
                bad_range = Some((row, field, value));
            }
            continue;
        }
        measurements.push(m);
        rows.push(row);
    }

    if let Some((first_row, field, detail)) = bad_parse {
        return Err(Error::Row {
            count: bad_parse_count,
            first_row,
            field,
            detail,
        });
    }
    if let Some((first_row, field, value)) = bad_range {
        if options.skip_out_of_range {
            log::warn!("dropped {bad_range_count} out-of-range row(s); first at row {first_row} ({field})");
        } else {
            return Err(Error::Range {
                count: bad_range_count,
                first_row,
                field: field.to_string(),
                value,
            });
        }
    }
    if measurements.is_empty() {
        return Err(Error::EmptyDataset("no measurements in input".into()));
    }
    check_profile_consistency(&measurements, &rows)?;

    let mut dataset = Dataset::new(measurements, options.mode);
    dataset.provenance.push(format!("parsed {} measurement(s)", dataset.len()));
    if bad_range_count > 0 {
        dataset
            .provenance
            .push(format!("dropped {bad_range_count} out-of-range row(s)"));
    }
    Ok(dataset)
}

fn check_profile_consistency(measurements: &[Measurement], rows: &[usize]) -> Result<()> {
    let mut seen: HashMap<i64, &Measurement> = HashMap::new();
    for (m, &row) in measurements.iter().zip(rows) {
        let first = *seen.entry(m.profile_id).or_insert(m);
        let field = if first.latitude != m.latitude {
            Some("latitude")
        } else if first.longitude != m.longitude {
            Some("longitude")
        } else if first.day_of_year != m.day_of_year {
            Some("day")
        } else if first.year != m.year {
            Some("year")
        } else {
            None
        };
        if let Some(field) = field {
            return Err(Error::ProfileConsistency {
                profile_id: m.profile_id,
                field,
                row,
            });
        }
    }
    Ok(())
}

/// Writes a dataset in the canonical column layout, optionally preceded by `#` comment lines.
pub fn write_dataset<W: Write>(
    writer: W,
    dataset: &Dataset,
    delimiter: u8,
    comments: &[String],
) -> Result<()> {
    let mut writer = writer;
    for c in comments {
        writeln!(writer, "# {c}")?;
    }
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    wtr.write_record(["profile_id", "lat", "lon", "pressure", "day", "year", "value"])?;
    for m in &dataset.measurements {
        wtr.write_record(&[
            m.profile_id.to_string(),
            m.latitude.to_string(),
            m.longitude.to_string(),
            m.pressure.to_string(),
            m.day_of_year.to_string(),
            m.year.to_string(),
            m.value.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Provenance<'a> {
    measurements: usize,
    profiles: usize,
    filters: &'a [String],
    #[serde(flatten)]
    extra: &'a BTreeMap<String, String>,
}

/// Writes the key-value sidecar that records how a dataset was produced.
pub fn write_provenance<W: Write>(
    mut writer: W,
    dataset: &Dataset,
    extra: &BTreeMap<String, String>,
) -> Result<()> {
    let doc = Provenance {
        measurements: dataset.len(),
        profiles: dataset.profile_ids().len(),
        filters: &dataset.provenance,
        extra,
    };
    let text = toml::to_string(&doc).map_err(|e| Error::Format(e.to_string()))?;
    writer.write_all(text.as_bytes())?;
    Ok(())
}
