//! evaluate and compare.

use std::fmt::Write as _;
use std::path::PathBuf;

use argo_gp::data::PressureLevel;
use argo_gp::metrics::{evaluate, MetricsReport};
use argo_gp::pipeline::{build_scenario, run_method, Method, ScenarioConfig};
use clap::Args;
use serde::{Deserialize, Serialize};

use super::{read_predictions, scenario_label};
use crate::config::{config_hash, load_data, parse_level, MethodArg, ScenarioArgs};
use crate::error::{CliError, Result};
use crate::output::{header_value, read_header, Outputs};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions file written by `predict`
    #[arg(long, short)]
    pub predictions: PathBuf,
    /// Metrics file to write (TOML)
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    pub method: String,
    pub scenario: String,
    pub metrics: MetricsReport,
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let header = read_header(&args.predictions)?;
    let field = |k: &str| header_value(&header, k).unwrap_or("unknown").to_string();
    let rows = read_predictions(&args.predictions)?;
    let preds: Vec<_> = rows.iter().enumerate().map(|(i, r)| r.distribution(i)).collect();
    let observed: Vec<f64> = rows.iter().map(|r| r.observed).collect();
    let metrics = evaluate(&preds, &observed)?;
    let file = MetricsFile {
        config_hash: field("config_hash"),
        method: field("method"),
        scenario: field("scenario"),
        metrics,
    };
    let text = toml::to_string(&file).expect("metrics serialize");
    let mut out = Outputs::new(&[&args.predictions]);
    out.write_str(&args.output, &text)?;
    out.commit();
    print!("{text}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Methods to run on every scenario
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gp,mwgp-s")]
    pub methods: Vec<MethodArg>,
    /// Pressure levels, one scenario each
    #[arg(long, value_parser = parse_level, value_delimiter = ',', default_value = "10,300,1500")]
    pub levels: Vec<PressureLevel>,
    /// Markdown table to write; printed to stdout as well
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// One cell of the comparison.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub scenario: String,
    pub method: String,
    pub report: MetricsReport,
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.4}")
}

/// Markdown table with the lowest RMSE of each scenario marked in the last column.
pub fn render_table(rows: &[CompareRow], hash: &str) -> String {
    let mut s = String::new();
    writeln!(s, "<!-- config_hash = {hash} -->").unwrap();
    writeln!(s, "| Scenario | Method | RMSE | Q3AE | MdAE | MAE | R2 | CRPS | n | Best |").unwrap();
    writeln!(s, "|---|---|---:|---:|---:|---:|---:|---:|---:|:---:|").unwrap();
    for r in rows {
        let best = rows
            .iter()
            .filter(|o| o.scenario == r.scenario)
            .map(|o| o.report.rmse)
            .fold(f64::INFINITY, f64::min);
        let m = &r.report;
        writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.scenario,
            r.method,
            fmt_metric(m.rmse),
            fmt_metric(m.q3ae),
            fmt_metric(m.mdae),
            fmt_metric(m.mae),
            m.r2.map_or("n/a".to_string(), fmt_metric),
            fmt_metric(m.crps),
            m.n_test,
            if m.rmse == best { "*" } else { "" }
        )
        .unwrap();
    }
    s
}

pub fn run_compare(args: &CompareArgs) -> Result<()> {
    if args.methods.is_empty() || args.levels.is_empty() {
        return Err(CliError::config("compare needs at least one method and one level"));
    }
    let base = args.scenario.resolve()?;
    let hash = config_hash(&base);
    let all = load_data(&base)?;
    let mut rows = Vec::new();
    for &level in &args.levels {
        let cfg = ScenarioConfig { level, ..base.clone() };
        let scenario = build_scenario(&all, &cfg)?;
        for &m in &args.methods {
            let cfg = ScenarioConfig {
                method: Method::from(m),
                ..cfg.clone()
            };
            cfg.validate()?;
            let label = cfg.method.label(cfg.mode);
            log::info!("running {label} at {} dbar", level.name());
            let run = run_method(&scenario, &cfg)
                .map_err(|e| CliError::from(e).context(format!("{label} at {} dbar", level.name())))?;
            rows.push(CompareRow {
                scenario: scenario_label(cfg.test_month, level),
                method: label,
                report: run.report,
            });
        }
    }
    let table = render_table(&rows, &hash);
    if let Some(path) = &args.output {
        let mut out = Outputs::new(&[&base.data]);
        out.write_str(path, &table)?;
        out.commit();
    }
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rmse: f64) -> MetricsReport {
        MetricsReport {
            rmse,
            q3ae: 1.0,
            mdae: 0.5,
            mae: 0.7,
            r2: Some(0.99),
            crps: 0.4,
            n_test: 10,
        }
    }

    #[test]
    fn best_is_flagged_per_scenario() {
        let mut rows = Vec::new();
        for (scenario, a, b) in [("Feb-10", 0.84, 0.91), ("Feb-300", 0.5, 0.4), ("Feb-1500", 0.1, 0.2)] {
            rows.push(CompareRow {
                scenario: scenario.into(),
                method: "GP-5D".into(),
                report: report(a),
            });
            rows.push(CompareRow {
                scenario: scenario.into(),
                method: "MWGP-S".into(),
                report: report(b),
            });
        }
        let table = render_table(&rows, "h");
        let body: Vec<&str> = table.lines().skip(3).collect();
        assert_eq!(body.len(), 6);
        let flagged: Vec<bool> = body.iter().map(|l| l.trim_end().ends_with("| * |")).collect();
        assert_eq!(flagged, [true, false, false, true, true, false]);
        assert!(body[0].contains("| 0.8400 |"));
    }
}
