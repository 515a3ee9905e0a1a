//! Scenario configuration: file, then flags, then `--set` overrides.

use std::fs::File;
use std::path::{Path, PathBuf};

use argo_gp::data::{parse_profiles, Dataset, InputMode, ParseOptions, PressureLevel};
use argo_gp::model_file::sha256_hex;
use argo_gp::pipeline::{Method, ScenarioConfig};
use clap::{Args, ValueEnum};
use toml::{Table, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Gp,
    MwgpS,
    MwgpSt,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Gp => Method::Gp,
            MethodArg::MwgpS => Method::MwgpS,
            MethodArg::MwgpSt => Method::MwgpSt,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    #[value(name = "7d")]
    Full,
    #[value(name = "5d")]
    NoSeason,
}

impl From<ModeArg> for InputMode {
    fn from(m: ModeArg) -> InputMode {
        match m {
            ModeArg::Full => InputMode::Full7D,
            ModeArg::NoSeason => InputMode::NoSeason5D,
        }
    }
}

pub fn parse_level(s: &str) -> std::result::Result<PressureLevel, String> {
    s.parse().map_err(|e: argo_gp::error::Error| e.to_string())
}

/// Options shared by every command that works on a scenario.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML); defaults are used for anything it leaves out
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Measurement table written by `ingest`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Pressure level: 10, 300 or 1500
    #[arg(long, value_parser = parse_level)]
    pub level: Option<PressureLevel>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Model inputs: 7d keeps the seasonal dimensions
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training months, e.g. 1,2,3
    #[arg(long, value_delimiter = ',')]
    pub months: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub pool_months: Option<Vec<u32>>,
    #[arg(long)]
    pub test_month: Option<u32>,
    /// Profiles sampled from the pool; 0 keeps all
    #[arg(long)]
    pub max_profiles: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Conditioning-set size for fitting
    #[arg(long)]
    pub m_fit: Option<usize>,
    /// Neighbours used per prediction
    #[arg(long)]
    pub m_predict: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Any other field, as a dotted key and a TOML value (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

fn to_value<T: serde::Serialize>(v: T) -> Value {
    Value::try_from(v).expect("plain values serialize")
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::config(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Reads `raw` as a TOML value, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

impl ScenarioArgs {
    fn overrides(&self) -> Vec<(&'static str, Value)> {
        let mut out = Vec::new();
        let mut push = |k, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("data", self.data.as_ref().map(to_value));
        push("level", self.level.map(to_value));
        push("method", self.method.map(|m| to_value(Method::from(m))));
        push("mode", self.mode.map(|m| to_value(InputMode::from(m))));
        push("seed", self.seed.map(|s| Value::Integer(s as i64)));
        push("months", self.months.as_ref().map(to_value));
        push("pool_months", self.pool_months.as_ref().map(to_value));
        push("test_month", self.test_month.map(to_value));
        push("max_profiles", self.max_profiles.map(|n| Value::Integer(n as i64)));
        push("train_fraction", self.train_fraction.map(to_value));
        push("fit.vecchia.m_fit", self.m_fit.map(|n| Value::Integer(n as i64)));
        push("fit.vecchia.m_predict", self.m_predict.map(|n| Value::Integer(n as i64)));
        push("fit.max_iterations", self.max_iterations.map(|n| Value::Integer(n as i64)));
        out
    }

    /// The configuration after applying the file and every override, validated.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let mut table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        for (k, v) in self.overrides() {
            set_path(&mut table, k, v)?;
        }
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("`--set {s}` is not KEY=VALUE")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: ScenarioConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Canonical TOML text of a configuration.
pub fn canonical(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("scenario configs serialize")
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    sha256_hex(canonical(cfg).as_bytes())
}

pub fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))
}

/// Reads the measurement table named in the configuration.
pub fn load_data(cfg: &ScenarioConfig) -> Result<Dataset> {
    let file = open_input(&cfg.data)?;
    let options = ParseOptions {
        mode: cfg.mode,
        ..Default::default()
    };
    let d = parse_profiles(std::io::BufReader::new(file), &options)
        .map_err(|e| CliError::from(e).context(cfg.data.display()))?;
    log::info!("read {} measurements from {}", d.len(), cfg.data.display());
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_and_sets_override_defaults() {
        let args = ScenarioArgs {
            level: Some(PressureLevel::P300),
            mode: Some(ModeArg::Full),
            months: Some(vec![1, 2, 3]),
            set: vec!["mwgp.window_half_width = 7.5".into(), "fit.fix_nu=0.5".into()],
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.level, PressureLevel::P300);
        assert_eq!(cfg.mode, InputMode::Full7D);
        assert_eq!(cfg.months, vec![1, 2, 3]);
        assert_eq!(cfg.mwgp.window_half_width, 7.5);
        assert_eq!(cfg.fit.fix_nu, Some(0.5));
        let again: ScenarioConfig = toml::from_str(&canonical(&cfg)).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let args = ScenarioArgs {
            set: vec!["fit.colour=3".into()],
            ..Default::default()
        };
        let err = args.resolve().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let args = ScenarioArgs {
            set: vec!["months".into()],
            ..Default::default()
        };
        assert_eq!(args.resolve().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn hash_follows_content() {
        let a = ScenarioConfig::default();
        let b = ScenarioConfig { seed: 1, ..a.clone() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
