//! verify: Vecchia against the dense oracle on a subsample.

use std::path::PathBuf;

use argo_gp::covariance::KernelParams;
use argo_gp::estimate::init_params;
use argo_gp::exact::{exact_loglik, exact_predict};
use argo_gp::pipeline::build_scenario;
use argo_gp::points::PointSet;
use argo_gp::predict::{predict_points, PredictOptions};
use argo_gp::vecchia::{compute_u, default_scaling, vecchia_loglik, OrderingKind, VecchiaLayout};
use clap::Args;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{load_gp, load_layout};
use crate::config::{config_hash, load_data, ScenarioArgs};
use crate::error::{CliError, Result};
use crate::output::Outputs;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Training points in the subsample
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Test points compared
    #[arg(long, default_value_t = 50)]
    pub n_test: usize,
    /// Largest deviation accepted
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Directory written by `fit`; its parameters are used and its stored
    /// likelihood is recomputed from the saved conditioning sets
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Report file to write (TOML)
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub n: usize,
    pub n_test: usize,
    pub loglik_gap: f64,
    pub mean_gap: f64,
    pub variance_gap: f64,
    /// Stored minus recomputed likelihood of the saved model, relative to its size.
    pub model_loglik_gap: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Seeded subsample of `k` of `n` indices, in ascending order.
fn pick(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx = sample(rng, n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

fn oracle_gaps(pts: &PointSet, z: &[f64], params: &KernelParams, test: &PointSet) -> Result<(f64, f64, f64)> {
    let n = pts.len();
    let layout = VecchiaLayout::build(pts, n - 1, &default_scaling(pts), OrderingKind::Maximin, 0);
    let u = compute_u(&layout.ordered_points(pts), &layout.cond_sets, params)?;
    let approx = vecchia_loglik(&u, &layout.ordered_values(z), params.mu)?;
    let exact = exact_loglik(pts, z, params)?;

    let near = predict_points(pts, z, params, test, PredictOptions { m: n, include_nugget: true })?;
    let dense = exact_predict(pts, z, params, test, true)?;
    if !near.failed.is_empty() || near.points.len() != dense.points.len() {
        return Err(CliError::numerical("some oracle predictions failed"));
    }
    let (mut dm, mut dv) = (0.0f64, 0.0f64);
    for (a, b) in near.points.iter().zip(&dense.points) {
        dm = dm.max((a.mean - b.mean).abs());
        dv = dv.max((a.variance - b.variance).abs());
    }
    Ok(((approx - exact).abs(), dm, dv))
}

pub fn run_verify(args: &VerifyArgs) -> Result<()> {
    if args.n < 2 || args.n_test == 0 {
        return Err(CliError::config("verify needs n >= 2 and n_test >= 1"));
    }
    if !(args.tolerance > 0.0) {
        return Err(CliError::config("tolerance must be positive"));
    }
    let cfg = args.scenario.resolve()?;
    let all = load_data(&cfg)?;
    let s = build_scenario(&all, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_idx = pick(s.train.len(), args.n, &mut rng);
    let test_idx = pick(s.test.len(), args.n_test, &mut rng);
    let pts = s.train.points().select(&train_idx);
    let values = s.train.values();
    let z: Vec<f64> = train_idx.iter().map(|&i| values[i]).collect();
    let test = s.test.points().select(&test_idx);

    let mut inputs = vec![cfg.data.clone()];
    let (params, model_loglik_gap) = match &args.model_dir {
        Some(dir) => {
            let file = load_gp(dir, &cfg, &s.train)?;
            let layout = load_layout(dir)?;
            let train = s.train.points();
            if layout.len() != train.len() {
                return Err(CliError::data("saved conditioning sets do not match the training data"));
            }
            let u = compute_u(&layout.ordered_points(&train), &layout.cond_sets, &file.model.params)?;
            let again = vecchia_loglik(&u, &layout.ordered_values(&values), file.model.params.mu)?;
            let gap = (again - file.model.loglik).abs() / file.model.loglik.abs().max(1.0);
            inputs.push(dir.join(super::model::MODEL_FILE));
            (file.model.params, Some(gap))
        }
        None => (init_params(&pts, &z)?, None),
    };

    let (loglik_gap, mean_gap, variance_gap) = oracle_gaps(&pts, &z, &params, &test)?;
    let tol = args.tolerance;
    let pass = loglik_gap < tol && mean_gap < tol && variance_gap < tol && model_loglik_gap.is_none_or(|g| g < tol);
    let report = VerifyReport {
        config_hash: config_hash(&cfg),
        n: pts.len(),
        n_test: test.len(),
        loglik_gap,
        mean_gap,
        variance_gap,
        model_loglik_gap,
        tolerance: tol,
        pass,
    };
    let text = toml::to_string(&report).expect("report serializes");
    if let Some(path) = &args.output {
        let mut out = Outputs::new(&inputs);
        out.write_str(path, &text)?;
        out.commit();
    }
    print!("{text}");
    if !pass {
        return Err(CliError::numerical(format!(
            "deviations exceed {tol:e}: loglik {loglik_gap:e}, mean {mean_gap:e}, variance {variance_gap:e}"
        )));
    }
    Ok(())
}
