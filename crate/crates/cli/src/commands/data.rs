//! ingest, scenario and grid-map.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::PathBuf;

use argo_gp::data::{
    parse_profiles, subset_months, subset_pressure_bin, write_dataset, write_provenance, ColumnSchema, Dataset,
    ParseOptions, PressureLevel,
};
use argo_gp::model_file::{data_hash, sha256_hex};
use argo_gp::pipeline::build_scenario;
use clap::Args;
use serde::Serialize;

use crate::config::{canonical, config_hash, load_data, open_input, parse_level, ScenarioArgs};
use crate::error::{CliError, Result};
use crate::output::{write_header, Outputs};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw delimited table, one row per measurement
    #[arg(long, short)]
    pub input: PathBuf,
    /// Canonical measurement table to write
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value = ",")]
    pub delimiter: char,
    /// TOML file naming the input columns (profile_id, lat, lon, pressure, day, year, value)
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Drop rows outside the valid ranges instead of failing
    #[arg(long)]
    pub skip_out_of_range: bool,
}

#[derive(Serialize)]
struct IngestSettings<'a> {
    delimiter: String,
    skip_out_of_range: bool,
    schema: &'a ColumnSchema,
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    if !args.delimiter.is_ascii() {
        return Err(CliError::config(format!("delimiter `{}` is not ASCII", args.delimiter)));
    }
    let schema = match &args.schema {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => ColumnSchema::default(),
    };
    let settings = IngestSettings {
        delimiter: args.delimiter.to_string(),
        skip_out_of_range: args.skip_out_of_range,
        schema: &schema,
    };
    let hash = sha256_hex(toml::to_string(&settings).expect("settings serialize").as_bytes());

    let mut raw = Vec::new();
    open_input(&args.input)?.read_to_end(&mut raw)?;
    let options = ParseOptions {
        delimiter: args.delimiter as u8,
        schema,
        skip_out_of_range: args.skip_out_of_range,
        ..Default::default()
    };
    let d = parse_profiles(raw.as_slice(), &options).map_err(|e| CliError::from(e).context(args.input.display()))?;

    let mut extra = BTreeMap::new();
    extra.insert("source".to_string(), args.input.display().to_string());
    extra.insert("source_sha256".to_string(), sha256_hex(&raw));
    extra.insert("config_hash".to_string(), hash.clone());
    extra.insert("data_hash".to_string(), data_hash(&d));

    let mut out = Outputs::new(&[&args.input]);
    out.write(&args.output, |w| {
        Ok(write_dataset(w, &d, b',', &[format!("config_hash = {hash}")])?)
    })?;
    let mut prov = args.output.clone().into_os_string();
    prov.push(".provenance.toml");
    out.write(&PathBuf::from(prov), |w| Ok(write_provenance(w, &d, &extra)?))?;
    out.commit();
    println!("{} measurements from {} profiles", d.len(), d.profile_ids().len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScenarioCmdArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Directory for config.toml, mean_train.csv, train.csv and test.csv
    #[arg(long, short)]
    pub out_dir: PathBuf,
}

pub fn scenario(args: &ScenarioCmdArgs) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let hash = config_hash(&cfg);
    let all = load_data(&cfg)?;
    let s = build_scenario(&all, &cfg)?;
    let mut out = Outputs::new(&[&cfg.data]);
    out.write_str(&args.out_dir.join("config.toml"), &canonical(&cfg))?;
    for (name, d) in [("mean_train", &s.mean_train), ("train", &s.train), ("test", &s.test)] {
        let comments = [format!("config_hash = {hash}"), format!("data_hash = {}", data_hash(d))];
        out.write(&args.out_dir.join(format!("{name}.csv")), |w| {
            Ok(write_dataset(w, d, b',', &comments)?)
        })?;
    }
    out.commit();
    println!(
        "train {} measurements ({} for the mean fields), test {}",
        s.train.len(),
        s.mean_train.len(),
        s.test.len()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct GridMapArgs {
    /// Measurement table written by `ingest`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Cell size in degrees
    #[arg(long, default_value_t = 1.0)]
    pub resolution: f64,
    /// Count only profiles with a measurement in this pressure bin
    #[arg(long, value_parser = parse_level)]
    pub level: Option<PressureLevel>,
    #[arg(long, value_delimiter = ',')]
    pub months: Option<Vec<u32>>,
}

#[derive(Serialize)]
struct GridMapSettings<'a> {
    resolution: f64,
    level: Option<PressureLevel>,
    months: &'a Option<Vec<u32>>,
}

/// Distinct profiles per cell, keyed by cell indices.
pub fn profile_counts(d: &Dataset, resolution: f64) -> BTreeMap<(i64, i64), usize> {
    let mut cells: BTreeMap<(i64, i64), BTreeSet<i64>> = BTreeMap::new();
    for m in &d.measurements {
        let key = (
            (m.latitude / resolution).floor() as i64,
            (m.longitude / resolution).floor() as i64,
        );
        cells.entry(key).or_default().insert(m.profile_id);
    }
    cells.into_iter().map(|(k, ids)| (k, ids.len())).collect()
}

pub fn grid_map(args: &GridMapArgs) -> Result<()> {
    if !(args.resolution > 0.0 && args.resolution.is_finite()) {
        return Err(CliError::config(format!("resolution must be positive, got {}", args.resolution)));
    }
    let settings = GridMapSettings {
        resolution: args.resolution,
        level: args.level,
        months: &args.months,
    };
    let hash = sha256_hex(toml::to_string(&settings).expect("settings serialize").as_bytes());
    let file = open_input(&args.data)?;
    let mut d = parse_profiles(std::io::BufReader::new(file), &ParseOptions::default())
        .map_err(|e| CliError::from(e).context(args.data.display()))?;
    if let Some(level) = args.level {
        d = subset_pressure_bin(&d, level);
    }
    if let Some(months) = &args.months {
        d = subset_months(&d, months);
    }
    let counts = profile_counts(&d, args.resolution);
    let mut out = Outputs::new(&[&args.data]);
    out.write(&args.output, |w| {
        write_header(w, &[("config_hash", hash.clone()), ("data_hash", data_hash(&d))])?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["lat", "lon", "value"])?;
        for (&(i, j), &n) in &counts {
            let lat = (i as f64 + 0.5) * args.resolution;
            let lon = (j as f64 + 0.5) * args.resolution;
            csv.write_record([lat.to_string(), lon.to_string(), n.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    out.commit();
    println!("{} cells", counts.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use argo_gp::data::{InputMode, Measurement};

    #[test]
    fn counts_profiles_not_measurements() {
        let m = |id, lat, lon| Measurement {
            profile_id: id,
            latitude: lat,
            longitude: lon,
            pressure: 10.0,
            day_of_year: 40.0,
            year: 2012,
            value: 1.0,
        };
        let d = Dataset::new(
            vec![m(1, 0.2, 0.3), m(1, 0.2, 0.3), m(2, 0.9, 0.1), m(3, -0.5, 179.5), m(3, -0.5, 179.5)],
            InputMode::Full7D,
        );
        let c = profile_counts(&d, 1.0);
        assert_eq!(c.get(&(0, 0)), Some(&2));
        assert_eq!(c.get(&(-1, 179)), Some(&1));
        assert_eq!(c.len(), 2);
    }
}
