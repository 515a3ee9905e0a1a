//! fit and predict.

use std::path::{Path, PathBuf};

use argo_gp::data::Dataset;
use argo_gp::estimate::fit;
use argo_gp::model_file::{data_hash, ModelFile};
use argo_gp::mwgp::{fit_mwgp, read_local_grid, read_mean_grid, write_local_grid, write_mean_grid, MwgpModel};
use argo_gp::pipeline::{build_scenario, predict_gp, Method, ScenarioConfig};
use argo_gp::predict::Predictions;
use argo_gp::vecchia::sidecar::{read_layout, write_layout};
use argo_gp::vecchia::VecchiaLayout;
use clap::Args;

use super::{prediction_rows, scenario_label, write_predictions};
use crate::config::{canonical, config_hash, load_data, open_input, ScenarioArgs};
use crate::error::{CliError, Result};
use crate::output::{header_value, read_header, write_header, Outputs};

pub const MODEL_FILE: &str = "model.toml";
pub const LAYOUT_FILE: &str = "model.layout";
pub const TRACE_FILE: &str = "trace.csv";
pub const MEAN_GRID_FILE: &str = "mean_grid.csv";
pub const LOCAL_GRID_FILE: &str = "local_grid.csv";

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Directory for the model and its trace
    #[arg(long, short)]
    pub out_dir: PathBuf,
}

pub fn run_fit(args: &FitArgs) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let hash = config_hash(&cfg);
    let all = load_data(&cfg)?;
    let s = build_scenario(&all, &cfg)?;
    let train_hash = data_hash(&s.train);
    let mut out = Outputs::new(&[&cfg.data]);
    out.write_str(&args.out_dir.join("config.toml"), &canonical(&cfg))?;
    match cfg.method {
        Method::Gp => {
            let model = fit(&s.train, &cfg.fit)?;
            if !model.converged {
                log::warn!("fit stopped without converging ({:?})", model.stop);
            }
            let meta = &model.factor_meta;
            let layout = VecchiaLayout::build(&s.train.points(), meta.m, &meta.scaling, meta.ordering, meta.seed);
            let file = ModelFile {
                model,
                mode: cfg.mode,
                vecchia: cfg.fit.vecchia.clone(),
                data_hash: train_hash.clone(),
                config_hash: hash.clone(),
            };
            out.write_str(&args.out_dir.join(MODEL_FILE), &file.to_toml()?)?;
            out.write(&args.out_dir.join(LAYOUT_FILE), |w| Ok(write_layout(w, &layout)?))?;
            out.write(&args.out_dir.join(TRACE_FILE), |w| {
                write_header(w, &[("config_hash", hash.clone())])?;
                writeln!(w, "iteration,loglik,step_norm")?;
                for (i, t) in file.model.trace.iter().enumerate() {
                    writeln!(w, "{i},{},{}", t.loglik, t.step_norm)?;
                }
                Ok(())
            })?;
            let p = &file.model.params;
            println!(
                "{} on {} points: loglik {:.6}, {} iterations, converged {}",
                cfg.method.label(cfg.mode),
                s.train.len(),
                file.model.loglik,
                file.model.iterations,
                file.model.converged
            );
            println!(
                "mu {:.6} sigma2 {:.6} nu {:.6} tau2 {:.6} ranges {:?}",
                p.mu, p.sigma2, p.nu, p.tau2, p.ranges
            );
        }
        Method::MwgpS | Method::MwgpSt => {
            let model = fit_mwgp(&s.mean_train, &s.train, &s.test, cfg.level, &cfg.mwgp_config())?;
            let header = [("config_hash", hash.clone()), ("data_hash", train_hash.clone())];
            out.write(&args.out_dir.join(MEAN_GRID_FILE), |w| {
                write_header(w, &header)?;
                Ok(write_mean_grid(w, &model.means)?)
            })?;
            out.write(&args.out_dir.join(LOCAL_GRID_FILE), |w| {
                write_header(w, &header)?;
                Ok(write_local_grid(w, model.local.values())?)
            })?;
            println!(
                "{}: {} mean fields, {} local GPs, {} windows unfitted, {} training measurements without a mean field",
                cfg.method.label(cfg.mode),
                model.means.fields.len(),
                model.local.len(),
                model.unfitted.len(),
                model.dropped
            );
        }
    }
    out.commit();
    Ok(())
}

/// Reads a GP model file and checks it belongs to this scenario.
pub fn load_gp(dir: &Path, cfg: &ScenarioConfig, train: &Dataset) -> Result<ModelFile> {
    let path = dir.join(MODEL_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let file = ModelFile::from_toml(&text).map_err(|e| CliError::from(e).context(path.display()))?;
    if file.mode != cfg.mode {
        return Err(CliError::config(format!(
            "model was fitted in {:?} mode, configuration asks for {:?}",
            file.mode, cfg.mode
        )));
    }
    if file.data_hash != data_hash(train) {
        return Err(CliError::data("model was fitted to different training data"));
    }
    if file.config_hash != config_hash(cfg) {
        log::warn!("model was fitted under a different configuration");
    }
    Ok(file)
}

/// Reads the Vecchia layout stored next to a GP model.
pub fn load_layout(dir: &Path) -> Result<VecchiaLayout> {
    let path = dir.join(LAYOUT_FILE);
    let file = open_input(&path)?;
    read_layout(std::io::BufReader::new(file)).map_err(|e| CliError::from(e).context(path.display()))
}

fn load_mwgp(dir: &Path, cfg: &ScenarioConfig, train: &Dataset) -> Result<MwgpModel> {
    let mean_path = dir.join(MEAN_GRID_FILE);
    let local_path = dir.join(LOCAL_GRID_FILE);
    let header = read_header(&mean_path)?;
    if header_value(&header, "data_hash") != Some(data_hash(train).as_str()) {
        return Err(CliError::data("mean fields were fitted to different training data"));
    }
    let means = read_mean_grid(std::io::BufReader::new(open_input(&mean_path)?))
        .map_err(|e| CliError::from(e).context(mean_path.display()))?;
    let local = read_local_grid(std::io::BufReader::new(open_input(&local_path)?))
        .map_err(|e| CliError::from(e).context(local_path.display()))?;
    Ok(MwgpModel::from_parts(means, local, train, cfg.level, &cfg.mwgp_config())?)
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Directory written by `fit`
    #[arg(long)]
    pub model_dir: PathBuf,
    /// Predictions file to write
    #[arg(long, short)]
    pub output: PathBuf,
}

pub fn run_predict(args: &PredictArgs) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    let hash = config_hash(&cfg);
    let all = load_data(&cfg)?;
    let s = build_scenario(&all, &cfg)?;
    let (predictions, inputs): (Predictions, Vec<PathBuf>) = match cfg.method {
        Method::Gp => {
            let file = load_gp(&args.model_dir, &cfg, &s.train)?;
            let p = predict_gp(&file.model, &s.train, &s.test, &cfg)?;
            (p, vec![args.model_dir.join(MODEL_FILE)])
        }
        Method::MwgpS | Method::MwgpSt => {
            let model = load_mwgp(&args.model_dir, &cfg, &s.train)?;
            (
                model.predict(&s.test).predictions,
                vec![args.model_dir.join(MEAN_GRID_FILE), args.model_dir.join(LOCAL_GRID_FILE)],
            )
        }
    };
    if predictions.points.is_empty() {
        return Err(CliError::numerical("no test point could be predicted"));
    }
    if !predictions.failed.is_empty() {
        log::warn!("{} test point(s) have no prediction", predictions.failed.len());
    }
    let rows = prediction_rows(&predictions, &s.test);
    let header = [
        ("config_hash", hash),
        ("method", cfg.method.label(cfg.mode)),
        ("scenario", scenario_label(cfg.test_month, cfg.level)),
        ("unpredicted", predictions.failed.len().to_string()),
    ];
    let mut inputs = inputs;
    inputs.push(cfg.data.clone());
    let mut out = Outputs::new(&inputs);
    out.write(&args.output, |w| write_predictions(w, &header, &rows))?;
    out.commit();
    println!("{} predictions, {} unpredicted", rows.len(), predictions.failed.len());
    Ok(())
}
