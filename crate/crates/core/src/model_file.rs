//! Text model files: a fitted GP with everything needed to reuse it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance::KernelParams;
use crate::data::{Dataset, InputMode};
use crate::error::{Error, Result};
use crate::estimate::{FactorMeta, FittedModel};
use crate::scoring::{StopReason, TraceEntry};
use crate::vecchia::{OrderingKind, VecchiaConfig};

pub const MODEL_FORMAT: &str = "argo-gp-model/1";

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the measurements of `d`, independent of how they were read.
pub fn data_hash(d: &Dataset) -> String {
    let mut h = Sha256::new();
    for m in &d.measurements {
        h.update(m.profile_id.to_le_bytes());
        for v in [m.latitude, m.longitude, m.pressure, m.day_of_year, m.value] {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(m.year.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSection {
    mu: f64,
    sigma2: f64,
    nu: f64,
    tau2: f64,
    /// Keyed by dimension label.
    ranges: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSection {
    loglik: f64,
    iterations: usize,
    converged: bool,
    stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorSection {
    n: usize,
    m: usize,
    ordering: OrderingKind,
    seed: u64,
    rescaled: bool,
    scaling: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    mode: InputMode,
    data_hash: String,
    config_hash: String,
    params: ParamsSection,
    fit: FitSection,
    vecchia: VecchiaConfig,
    factor: FactorSection,
    #[serde(default)]
    trace: Vec<TraceEntry>,
}

/// A fitted GP together with its input mode, Vecchia settings and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: FittedModel,
    pub mode: InputMode,
    pub vecchia: VecchiaConfig,
    pub data_hash: String,
    pub config_hash: String,
}

fn labelled(values: &[f64], mode: InputMode) -> Result<BTreeMap<String, f64>> {
    if values.len() != mode.dim() {
        return Err(Error::DimensionMismatch {
            expected: mode.dim(),
            got: values.len(),
        });
    }
    Ok(mode.labels().iter().map(|l| l.to_string()).zip(values.iter().copied()).collect())
}

fn unlabelled(map: &BTreeMap<String, f64>, mode: InputMode, what: &str) -> Result<Vec<f64>> {
    if let Some(extra) = map.keys().find(|k| !mode.labels().contains(&k.as_str())) {
        return Err(Error::Format(format!("{what}: label `{extra}` is not used in {mode:?} mode")));
    }
    mode.labels()
        .iter()
        .map(|l| map.get(*l).copied().ok_or_else(|| Error::Format(format!("{what}: missing label `{l}`"))))
        .collect()
}

impl ModelFile {
    pub fn to_toml(&self) -> Result<String> {
        let p = &self.model.params;
        let f = &self.model.factor_meta;
        let doc = Document {
            format: MODEL_FORMAT.to_string(),
            mode: self.mode,
            data_hash: self.data_hash.clone(),
            config_hash: self.config_hash.clone(),
            params: ParamsSection {
                mu: p.mu,
                sigma2: p.sigma2,
                nu: p.nu,
                tau2: p.tau2,
                ranges: labelled(&p.ranges, self.mode)?,
            },
            fit: FitSection {
                loglik: self.model.loglik,
                iterations: self.model.iterations,
                converged: self.model.converged,
                stop: self.model.stop,
            },
            vecchia: self.vecchia.clone(),
            factor: FactorSection {
                n: f.n,
                m: f.m,
                ordering: f.ordering,
                seed: f.seed,
                rescaled: f.rescaled,
                scaling: labelled(&f.scaling, self.mode)?,
            },
            trace: self.model.trace.clone(),
        };
        toml::to_string(&doc).map_err(|e| Error::Format(format!("model file: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<ModelFile> {
        let doc: Document = toml::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "model file format `{}`, expected `{MODEL_FORMAT}`",
                doc.format
            )));
        }
        let params = KernelParams {
            sigma2: doc.params.sigma2,
            ranges: unlabelled(&doc.params.ranges, doc.mode, "params.ranges")?,
            nu: doc.params.nu,
            tau2: doc.params.tau2,
            mu: doc.params.mu,
        };
        params.validate()?;
        let factor_meta = FactorMeta {
            n: doc.factor.n,
            m: doc.factor.m,
            ordering: doc.factor.ordering,
            seed: doc.factor.seed,
            scaling: unlabelled(&doc.factor.scaling, doc.mode, "factor.scaling")?,
            rescaled: doc.factor.rescaled,
        };
        Ok(ModelFile {
            model: FittedModel {
                params,
                loglik: doc.fit.loglik,
                iterations: doc.fit.iterations,
                converged: doc.fit.converged,
                stop: doc.fit.stop,
                trace: doc.trace,
                factor_meta,
            },
            mode: doc.mode,
            vecchia: doc.vecchia,
            data_hash: doc.data_hash,
            config_hash: doc.config_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Measurement;

    fn sample() -> ModelFile {
        ModelFile {
            model: FittedModel {
                params: KernelParams {
                    sigma2: 1.2345678901234567,
                    ranges: vec![3.0, 0.1, 0.2, 150.0, 2.5],
                    nu: 0.6180339887498949,
                    tau2: 1e-3 / 3.0,
                    mu: 17.25,
                },
                loglik: -1234.567890123,
                iterations: 7,
                converged: true,
                stop: StopReason::LoglikTolerance,
                trace: vec![
                    TraceEntry {
                        loglik: -1300.0,
                        step_norm: 0.0,
                    },
                    TraceEntry {
                        loglik: -1234.567890123,
                        step_norm: 0.25,
                    },
                ],
                factor_meta: FactorMeta {
                    n: 5000,
                    m: 30,
                    ordering: OrderingKind::Maximin,
                    seed: 42,
                    scaling: vec![0.3, 1.0, 1.0, 0.01, 0.5],
                    rescaled: true,
                },
            },
            mode: InputMode::NoSeason5D,
            vecchia: VecchiaConfig::default(),
            data_hash: "ab".repeat(32),
            config_hash: "cd".repeat(32),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let mf = sample();
        let text = mf.to_toml().unwrap();
        assert!(text.contains("L_s = "), "{text}");
        assert_eq!(ModelFile::from_toml(&text).unwrap(), mf);
    }

    #[test]
    fn rejects_labels_from_another_mode() {
        let text = sample().to_toml().unwrap().replacen("L_s = ", "d_s = ", 1);
        assert!(matches!(ModelFile::from_toml(&text), Err(Error::Format(_))));
        let text = sample().to_toml().unwrap().replace(MODEL_FORMAT, "other/9");
        assert!(ModelFile::from_toml(&text).is_err());
    }

    #[test]
    fn data_hash_tracks_values() {
        let m = Measurement {
            profile_id: 1,
            latitude: 10.0,
            longitude: -30.0,
            pressure: 10.0,
            day_of_year: 40.0,
            year: 2012,
            value: 21.5,
        };
        let a = Dataset::new(vec![m], InputMode::Full7D);
        let b = Dataset::new(vec![Measurement { value: 21.5000001, ..m }], InputMode::Full7D);
        assert_eq!(data_hash(&a), data_hash(&a.clone()));
        assert_ne!(data_hash(&a), data_hash(&b));
        assert_eq!(data_hash(&a).len(), 64);
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
