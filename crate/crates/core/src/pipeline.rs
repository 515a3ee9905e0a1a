//! Scenario construction and end-to-end runs of each method.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{
    sample_profiles, split_train_test, subset_months, subset_pressure_bin, subset_region, Dataset, InputMode,
    PressureLevel,
};
use crate::error::{Error, Result};
use crate::estimate::{fit, FitConfig, FittedModel};
use crate::metrics::{evaluate, MetricsReport};
use crate::mwgp::{fit_mwgp, MwgpConfig, MwgpVariant};
use crate::predict::{predict_points, PredictOptions, Predictions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Gp,
    MwgpS,
    MwgpSt,
}

impl Method {
    pub fn label(self, mode: InputMode) -> String {
        match self {
            Method::Gp => format!("GP-{}D", mode.dim()),
            Method::MwgpS => "MWGP-S".into(),
            Method::MwgpSt => "MWGP-ST".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub center_lat: f64,
    pub center_lon: f64,
    pub radius_km: f64,
}

/// Everything needed to rebuild one training/testing scenario and run a method on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Measurement table, as written by `ingest`.
    pub data: PathBuf,
    pub level: PressureLevel,
    pub region: Option<Region>,
    /// Months profiles are drawn from before splitting.
    pub pool_months: Vec<u32>,
    /// Months whose training profiles are used for the fit.
    pub months: Vec<u32>,
    /// Testing profiles from other months are discarded.
    pub test_month: u32,
    /// Profiles kept from the pool by seeded sampling; 0 keeps them all.
    pub max_profiles: usize,
    pub mode: InputMode,
    pub train_fraction: f64,
    pub seed: u64,
    pub method: Method,
    /// Add the nugget to GP predictive variances.
    pub include_nugget: bool,
    pub fit: FitConfig,
    /// Moving-window settings; the variant follows `method`.
    pub mwgp: MwgpConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            data: PathBuf::from("data/argo.csv"),
            level: PressureLevel::P10,
            region: None,
            pool_months: vec![1, 2, 3],
            months: vec![2],
            test_month: 2,
            max_profiles: 30_000,
            mode: InputMode::NoSeason5D,
            train_fraction: 0.8,
            seed: 0,
            method: Method::Gp,
            include_nugget: true,
            fit: FitConfig::default(),
            mwgp: MwgpConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        for &m in self.pool_months.iter().chain(&self.months).chain([&self.test_month]) {
            if !(1..=12).contains(&m) {
                return bad(format!("month {m} is not in 1..=12"));
            }
        }
        if self.months.is_empty() {
            return bad("no training months".into());
        }
        if let Some(m) = self.months.iter().chain([&self.test_month]).find(|m| !self.pool_months.contains(m)) {
            return bad(format!("month {m} is outside the pool months {:?}", self.pool_months));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if let Some(r) = self.region {
            if !(r.radius_km > 0.0) || !(-90.0..=90.0).contains(&r.center_lat) {
                return bad(format!("invalid region {r:?}"));
            }
        }
        if self.method == Method::Gp && self.months.len() == 1 && self.mode == InputMode::Full7D {
            log::info!("single training month with the seasonal dimensions kept");
        }
        self.fit.validate(self.mode.dim())?;
        self.mwgp_config().validate()
    }

    pub fn mwgp_config(&self) -> MwgpConfig {
        MwgpConfig {
            variant: if self.method == Method::MwgpSt {
                MwgpVariant::ST
            } else {
                MwgpVariant::S
            },
            ..self.mwgp.clone()
        }
    }
}

/// The datasets of one scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Every training profile from the pool months, at all depths.
    pub mean_train: Dataset,
    /// Training measurements from the training months in the target bin.
    pub train: Dataset,
    /// Testing measurements from the test month in the target bin.
    pub test: Dataset,
}

/// Builds the scenario described by `config` from the full measurement table.
pub fn build_scenario(all: &Dataset, config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut pool = subset_months(all, &config.pool_months);
    if let Some(r) = config.region {
        pool = subset_region(&pool, r.center_lat, r.center_lon, r.radius_km)?;
    }
    if config.max_profiles > 0 {
        pool = sample_profiles(&pool, config.max_profiles, config.seed);
    }
    let (mean_train, test) = split_train_test(&pool, config.train_fraction, config.seed, Some(config.test_month))?;
    let train = subset_pressure_bin(&subset_months(&mean_train, &config.months), config.level);
    let test = subset_pressure_bin(&test, config.level);
    if train.is_empty() {
        return Err(Error::EmptyDataset("no training measurements in the scenario".into()));
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("no testing measurements in the scenario".into()));
    }
    Ok(Scenario {
        mean_train: mean_train.with_mode(config.mode),
        train: train.with_mode(config.mode),
        test: test.with_mode(config.mode),
    })
}

/// Diagnostics of a moving-window run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwgpSummary {
    pub local_fitted: usize,
    pub local_unfitted: usize,
    pub mean_fields: usize,
    pub fallbacks: usize,
    pub dropped_training: usize,
    /// Largest kriged-anomaly jump between adjacent windows.
    pub boundary_jump: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub predictions: Predictions,
    /// Observed values aligned with `predictions.points`.
    pub observed: Vec<f64>,
    pub report: MetricsReport,
    pub gp: Option<FittedModel>,
    pub mwgp: Option<MwgpSummary>,
}

/// Predictions of the GP fitted as `model` at the `test` inputs.
pub fn predict_gp(model: &FittedModel, train: &Dataset, test: &Dataset, config: &ScenarioConfig) -> Result<Predictions> {
    predict_points(
        &train.points(),
        &train.values(),
        &model.params,
        &test.points(),
        PredictOptions {
            m: config.fit.vecchia.m_predict,
            include_nugget: config.include_nugget,
        },
    )
}

/// Scores `predictions` against the matching `test` values.
pub fn score(predictions: &Predictions, test: &Dataset) -> Result<(Vec<f64>, MetricsReport)> {
    if !predictions.failed.is_empty() {
        log::warn!(
            "{} of {} test points have no prediction and are left out of the metrics",
            predictions.failed.len(),
            test.len()
        );
    }
    let observed: Vec<f64> = predictions
        .points
        .iter()
        .map(|p| test.measurements[p.test_ref].value)
        .collect();
    let report = evaluate(&predictions.points, &observed)?;
    Ok((observed, report))
}

/// Fits `config.method` on the scenario and scores its test predictions.
pub fn run_method(scenario: &Scenario, config: &ScenarioConfig) -> Result<MethodRun> {
    let (predictions, gp, mwgp) = match config.method {
        Method::Gp => {
            let model = fit(&scenario.train, &config.fit)?;
            let preds = predict_gp(&model, &scenario.train, &scenario.test, config)?;
            (preds, Some(model), None)
        }
        Method::MwgpS | Method::MwgpSt => {
            let model = fit_mwgp(
                &scenario.mean_train,
                &scenario.train,
                &scenario.test,
                config.level,
                &config.mwgp_config(),
            )?;
            let out = model.predict(&scenario.test);
            let summary = MwgpSummary {
                local_fitted: model.local.len(),
                local_unfitted: model.unfitted.len(),
                mean_fields: model.means.fields.len(),
                fallbacks: out.fallbacks,
                dropped_training: model.dropped,
                boundary_jump: model.boundary_jump(),
            };
            (out.predictions, None, Some(summary))
        }
    };
    let (observed, report) = score(&predictions, &scenario.test)?;
    Ok(MethodRun {
        method: config.method,
        predictions,
        observed,
        report,
        gp,
        mwgp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::synthetic_profiles;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ScenarioConfig {
            region: Some(Region {
                center_lat: -30.0,
                center_lon: -150.0,
                radius_km: 4250.0,
            }),
            method: Method::MwgpSt,
            ..Default::default()
        };
        for cfg in [cfg.clone(), ScenarioConfig { max_profiles: 0, ..cfg.clone() }] {
            let text = toml::to_string(&cfg).unwrap();
            assert_eq!(toml::from_str::<ScenarioConfig>(&text).unwrap(), cfg);
        }
        assert!(toml::from_str::<ScenarioConfig>("colour = 3").is_err());
        assert_eq!(cfg.mwgp_config().variant, MwgpVariant::ST);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = ScenarioConfig::default();
        for cfg in [
            ScenarioConfig { months: vec![4], ..base.clone() },
            ScenarioConfig { test_month: 13, ..base.clone() },
            ScenarioConfig { train_fraction: 1.0, ..base.clone() },
            ScenarioConfig { months: vec![], ..base.clone() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidParams(_))), "{cfg:?}");
        }
        base.validate().unwrap();
    }

    #[test]
    fn scenario_keeps_the_test_month_and_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let all = synthetic_profiles(600, 4, &mut rng);
        let cfg = ScenarioConfig {
            pool_months: vec![1, 2, 3],
            months: vec![1, 2, 3],
            max_profiles: 400,
            ..Default::default()
        };
        let s = build_scenario(&all, &cfg).unwrap();
        assert!(s.test.measurements.iter().all(|m| m.month() == 2 && PressureLevel::P10.contains(m.pressure)));
        assert!(s.train.measurements.iter().all(|m| PressureLevel::P10.contains(m.pressure)));
        let train_ids = s.mean_train.profile_ids();
        assert!(s.test.profile_ids().iter().all(|id| train_ids.binary_search(id).is_err()));
        assert!(train_ids.len() + s.test.profile_ids().len() <= 400);
        assert_eq!(s.train.points().dim(), 5);
    }

    #[test]
    fn gp_run_scores_every_test_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let all = synthetic_profiles(500, 2, &mut rng);
        let cfg = ScenarioConfig {
            months: vec![1, 2, 3],
            fit: FitConfig {
                max_iterations: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let s = build_scenario(&all, &cfg).unwrap();
        let run = run_method(&s, &cfg).unwrap();
        assert_eq!(run.report.n_test, s.test.len());
        assert!(run.report.rmse.is_finite() && run.report.crps > 0.0);
        assert!(run.gp.is_some() && run.mwgp.is_none());
    }
}
