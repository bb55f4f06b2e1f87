//! Run configuration shared by every command.
//!
//! A run config is JSON. It is checked against [`SCHEMA`] before it is
//! deserialized, so unknown keys and out-of-range values are rejected with
//! a message naming the offending path. Omitted keys take their defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{OdeSystem, SystemKind, VectorField};
use crate::embedding::{EmbeddingConfig, SelectionConfig};
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// The published JSON schema of [`RunConfig`].
pub const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

/// A recorded series read from CSV instead of simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportConfig {
    pub path: PathBuf,
    pub steps_per_tl: usize,
    /// Trailing share of the series cut into test windows.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_test_fraction() -> f64 {
    0.2
}

/// System, sampling and split settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub system: SystemKind,
    /// Only Lorenz96 has a free dimension (default 5).
    pub dim: Option<usize>,
    /// Replaces the standard chaotic parameters.
    pub params: Option<BTreeMap<String, f64>>,
    /// Integration step; the system's default when absent.
    pub dt: Option<f64>,
    pub initial_state: Option<Vec<f64>>,
    /// Known λ_max. Estimated by two-trajectory renormalization when absent.
    pub lyapunov_exponent: Option<f64>,
    /// Averaging time of the estimate, in model time units.
    pub mle_time: f64,
    pub mle_transient_time: f64,
    pub mle_renorm_interval: usize,
    pub points_per_tl: usize,
    /// Recorded samples, validation tail included.
    pub steps: usize,
    pub val_steps: usize,
    /// Discarded before recording, in Lyapunov times.
    pub transient_tl: usize,
    pub noise_sigma: f64,
    pub tf_window_len: Option<usize>,
    pub context_tl: usize,
    pub target_tl: usize,
    /// Simulated test initial conditions (or windows of an imported series).
    pub test_cases: usize,
    pub import: Option<ImportConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Lorenz63,
            dim: None,
            params: None,
            dt: None,
            initial_state: None,
            lyapunov_exponent: None,
            mle_time: 500.0,
            mle_transient_time: 20.0,
            mle_renorm_interval: 10,
            points_per_tl: 30,
            steps: 3150,
            val_steps: 150,
            transient_tl: 10,
            noise_sigma: 0.0,
            tf_window_len: Some(60),
            context_tl: 1,
            target_tl: 10,
            test_cases: 10,
            import: None,
        }
    }
}

impl DataConfig {
    pub fn ode_system(&self) -> Result<OdeSystem> {
        let standard = OdeSystem::standard(self.system);
        let dim = self.dim.unwrap_or(standard.dim());
        let params = self.params.clone().unwrap_or_else(|| standard.params().clone());
        OdeSystem::with_params(self.system, dim, params)
    }

    pub fn dt_or_default(&self, system: &OdeSystem) -> f64 {
        self.dt.unwrap_or_else(|| system.default_dt())
    }

    /// Samples per Lyapunov time of the recorded series.
    pub fn steps_per_tl(&self) -> usize {
        self.import.as_ref().map_or(self.points_per_tl, |i| i.steps_per_tl)
    }
}

/// Everything a run needs. `seed` drives data, initialisation, training and
/// metric sampling; `output_dir` is where commands write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub embedding: EmbeddingConfig,
    pub selection: SelectionConfig,
    pub model: ModelConfig,
    /// Its `seed` is never read from JSON; it mirrors the run seed.
    pub training: TrainConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("run"),
            data: DataConfig::default(),
            embedding: EmbeddingConfig::default(),
            selection: SelectionConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

fn schema_check(value: &serde_json::Value) -> Result<()> {
    let schema: serde_json::Value = serde_json::from_str(SCHEMA).expect("bundled schema is valid JSON");
    let validator = jsonschema::validator_for(&schema).expect("bundled schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| {
            let at = e.instance_path().to_string();
            if at.is_empty() {
                e.to_string()
            } else {
                format!("{at}: {e}")
            }
        })
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errors.join("; ")))
    }
}

impl RunConfig {
    /// Schema check, then deserialization and semantic validation.
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        schema_check(&value)?;
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.sync_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value = serde_json::from_str(text).map_err(|e| Error::Config(format!("not valid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The JSON form accepted by [`RunConfig::from_value`].
    pub fn to_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(t) = v.get_mut("training").and_then(|t| t.as_object_mut()) {
            t.remove("seed");
        }
        v
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("config serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_pretty()).map_err(|e| Error::io(path, e))
    }

    pub fn sync_seed(&mut self) {
        self.training.seed = self.seed;
    }

    /// Hex SHA-256 of everything that affects results (the output directory does not).
    pub fn hash(&self) -> String {
        let mut v = self.to_value();
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("config serializes")))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.import.is_none() {
            d.ode_system()?;
            if let Some(x0) = &d.initial_state {
                let dim = d.dim.unwrap_or(OdeSystem::standard(d.system).dim());
                if x0.len() != dim {
                    return Err(Error::Config(format!(
                        "data.initial_state has {} entries, system has dimension {dim}",
                        x0.len()
                    )));
                }
            }
        }
        self.embedding.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        self.metrics.validate()?;
        let ctx = d.context_tl * d.steps_per_tl();
        if ctx < self.embedding.patch_size {
            return Err(Error::Config(format!(
                "context of {ctx} steps is shorter than one patch ({})",
                self.embedding.patch_size
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_the_schema() {
        let cfg = RunConfig {
            seed: 9,
            ..Default::default()
        };
        let mut cfg = cfg;
        cfg.sync_seed();
        let back = RunConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.training.seed, 9);
    }

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn schema_rejects_unknown_keys_and_training_seed() {
        for bad in [
            r#"{"colour": 1}"#,
            r#"{"model": {"width": 3}}"#,
            r#"{"training": {"seed": 3}}"#,
            r#"{"data": {"import": {"path": "x.csv"}}}"#,
            r#"{"embedding": {"m": 0}}"#,
            r#"{"data": {"system": "duffing"}}"#,
        ] {
            let e = RunConfig::from_json(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
    }

    #[test]
    fn semantic_checks_follow_the_schema() {
        assert!(RunConfig::from_json(r#"{"data": {"initial_state": [1, 2]}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"d": 5, "heads": 3}}"#).is_err());
    }

    #[test]
    fn hash_ignores_the_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig {
            output_dir: "elsewhere".into(),
            ..Default::default()
        };
        let c = RunConfig {
            seed: 1,
            ..Default::default()
        };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
