//! Run configuration files.
//!
//! Seed precedence, highest first: `--seed`, `HAMFLOW_SEED`, the file's
//! `seed`, then 0. Other flags override the matching file value.

use std::path::{Path, PathBuf};

use hamflow_core::fields::FieldFamily;
use hamflow_core::neural::Direction;
use hamflow_core::pipeline::{
    DatasetConfig, LrSchedule, ModelShape, NoiseConfig, ReferenceGrid, SplitCounts, SystemConfig, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const SEED_ENV: &str = "HAMFLOW_SEED";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub paths: Paths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub system: SystemConfig,
    #[serde(default = "FieldFamily::gp_mixture")]
    pub family: FieldFamily,
    #[serde(default)]
    pub counts: SplitCounts,
    #[serde(default)]
    pub grid: Option<ReferenceGrid>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_substeps")]
    pub substeps_per_dt: usize,
}

fn default_substeps() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default)]
    pub model: ModelShape,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    /// Training refuses datasets whose content hash differs.
    #[serde(default)]
    pub expected_manifest_hash: Option<String>,
}

fn default_epochs() -> usize {
    TrainConfig::new(Direction::Dynamics, 0).epochs
}
fn default_batch() -> usize {
    TrainConfig::new(Direction::Dynamics, 0).batch_size
}
fn default_lr() -> f64 {
    TrainConfig::new(Direction::Dynamics, 0).learning_rate
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            model: ModelShape::default(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            lr_schedule: LrSchedule::default(),
            expected_manifest_hash: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Dataset directory, relative to the config file.
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Output directory for models and reports, relative to the config file.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_data_dir() -> PathBuf {
    "data".into()
}
fn default_out_dir() -> PathBuf {
    "out".into()
}

impl Default for Paths {
    fn default() -> Self {
        Self { data_dir: default_data_dir(), out_dir: default_out_dir() }
    }
}

impl RunConfig {
    pub fn new(dataset: DatasetSection, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            dataset,
            training: TrainingSection::default(),
            paths: Paths::default(),
        }
    }

    /// Parses and validates `path`; relative paths in the file are resolved
    /// against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg =
            Self::parse(&text).map_err(|(key, message)| CliError::Config { path: path.into(), key, message })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.data_dir, &mut cfg.paths.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Parses and validates a config document. Errors carry the offending
    /// key path.
    pub fn parse(text: &str) -> Result<Self, (String, String)> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            (if key == "." { "(root)".into() } else { key }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.schema_version != SCHEMA_VERSION {
            return Err((
                "schema_version".into(),
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.dataset_config().validate().map_err(|e| ("dataset".into(), e.to_string()))?;
        self.train_config(Direction::Dynamics).validate().map_err(|e| ("training".into(), e.to_string()))?;
        Ok(())
    }

    /// Applies the seed precedence rule to `flag`.
    pub fn apply_seed(&mut self, flag: Option<u64>) -> CliResult<()> {
        if let Some(s) = flag {
            self.seed = s;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))?;
        }
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let d = &self.dataset;
        DatasetConfig {
            system: d.system.clone(),
            family: d.family.clone(),
            counts: d.counts,
            grid: d.grid,
            noise: d.noise,
            substeps_per_dt: d.substeps_per_dt,
            seed: self.seed,
        }
    }

    pub fn train_config(&self, direction: Direction) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            direction,
            model: t.model,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            lr_schedule: t.lr_schedule,
            seed: self.seed,
        }
    }

    /// Copy with every defaulted field made explicit.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.dataset.grid = Some(self.dataset_config().reference_grid());
        out.dataset.system = match &self.dataset.system {
            SystemConfig::Nmr { b0_hz, observables: None } => SystemConfig::Nmr {
                b0_hz: *b0_hz,
                observables: self.dataset.system.observables().ok().map(|o| o.names()),
            },
            SystemConfig::Sc { b0_mhz, observables: None } => SystemConfig::Sc {
                b0_mhz: *b0_mhz,
                observables: self.dataset.system.observables().ok().map(|o| o.names()),
            },
            other => other.clone(),
        };
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema_version": 1, "dataset": {"system": {"kind": "tfim"}}}"#;

    #[test]
    fn defaults_fill_absent_fields() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.dataset.system, SystemConfig::tfim(5));
        assert_eq!(c.training.epochs, 30);
        assert_eq!(c.training.batch_size, 64);
        assert_eq!(c.training.learning_rate, 1e-3);
        assert_eq!(c.training.model, ModelShape::desk());
        assert_eq!(c.dataset.substeps_per_dt, 20);
        assert_eq!(c.paths.data_dir, PathBuf::from("data"));
    }

    #[test]
    fn errors_name_the_offending_key() {
        let bad = r#"{"schema_version": 1, "dataset": {"system": {"kind": "tfim"}, "counts": {"train": "many"}}}"#;
        let (key, _) = RunConfig::parse(bad).unwrap_err();
        assert_eq!(key, "dataset.counts.train");
        let unknown = r#"{"schema_version": 1, "dataset": {"system": {"kind": "tfim"}}, "trainig": {}}"#;
        let (key, msg) = RunConfig::parse(unknown).unwrap_err();
        assert!(key == "(root)" || key.contains("trainig"), "{key}");
        assert!(msg.contains("trainig"));
        let small = r#"{"schema_version": 1, "dataset": {"system": {"kind": "tfim", "n_qubits": 2}}}"#;
        let (key, msg) = RunConfig::parse(small).unwrap_err();
        assert_eq!(key, "dataset");
        assert!(msg.contains("n_qubits"), "{msg}");
        let version = r#"{"schema_version": 9, "dataset": {"system": {"kind": "tfim"}}}"#;
        assert_eq!(RunConfig::parse(version).unwrap_err().0, "schema_version");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::parse(r#"{"schema_version": 1, "dataset": {"system": {"kind": "sc"}}}"#).unwrap().resolved();
        assert!(c.dataset.grid.is_some());
        assert!(matches!(&c.dataset.system, SystemConfig::Sc { observables: Some(o), .. } if o.len() == 15));
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn seed_flag_beats_file() {
        let mut c =
            RunConfig::parse(r#"{"schema_version": 1, "seed": 3, "dataset": {"system": {"kind": "qubit"}}}"#).unwrap();
        c.apply_seed(Some(11)).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.dataset_config().seed, 11);
        assert_eq!(c.train_config(Direction::Hamiltonian).seed, 11);
    }
}
