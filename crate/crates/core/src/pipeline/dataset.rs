use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::system::{ReferenceGrid, SystemConfig};
use crate::dynamics::{
    evolve_lindblad, evolve_schrodinger, product_state, DensityMatrix, HamiltonianKind, ObservableSeries, TimeGrid,
};
use crate::fields::{DrivingField, FieldFamily, FieldGrid};
use crate::io::{read_json, sha256_hex, to_json_line, write_json};
use crate::seed::{item_seed, rng_from_seed, stream};
use crate::{Error, Result};

pub const DATASET_FORMAT: &str = "hamflow-dataset";
pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";

/// Attempts per record before generation gives up.
const MAX_ATTEMPTS: u64 = 8;
const DEFAULT_GAMMA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    fn stream(self) -> u64 {
        match self {
            Split::Train => stream::TRAIN,
            Split::Validation => stream::VALIDATION,
            Split::Test => stream::TEST,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

/// Lindblad bit-flip noise applied while generating records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub system: SystemConfig,
    #[serde(default = "FieldFamily::gp_mixture")]
    pub family: FieldFamily,
    #[serde(default)]
    pub counts: SplitCounts,
    /// Defaults to the system's reference grid.
    #[serde(default)]
    pub grid: Option<ReferenceGrid>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_substeps")]
    pub substeps_per_dt: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_substeps() -> usize {
    20
}

impl DatasetConfig {
    pub fn new(system: SystemConfig, counts: SplitCounts, seed: u64) -> Self {
        Self {
            system,
            family: FieldFamily::gp_mixture(),
            counts,
            grid: None,
            noise: None,
            substeps_per_dt: default_substeps(),
            seed,
        }
    }

    pub fn reference_grid(&self) -> ReferenceGrid {
        self.grid.unwrap_or_else(|| self.system.reference_grid())
    }

    /// Copy with every defaulted field made explicit.
    pub fn resolved(&self) -> Self {
        Self { grid: Some(self.reference_grid()), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let g = self.reference_grid();
        if !(g.dt > 0.0 && g.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid.dt must be positive, got {}", g.dt)));
        }
        for (name, h) in [("train_horizon", g.train_horizon), ("test_horizon", g.test_horizon)] {
            if !(h >= g.dt && h.is_finite()) {
                return Err(Error::InvalidArgument(format!("grid.{name} = {h} shorter than one step")));
            }
        }
        if self.substeps_per_dt == 0 {
            return Err(Error::InvalidArgument("substeps_per_dt must be at least 1".into()));
        }
        if let Some(n) = self.noise {
            if !(n.gamma >= 0.0 && n.gamma.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise.gamma must be nonnegative, got {}", n.gamma)));
            }
        }
        Ok(())
    }

    /// Horizon in reference units of records in `split`.
    pub fn horizon(&self, split: Split) -> f64 {
        let g = self.reference_grid();
        match split {
            Split::Test => g.test_horizon,
            _ => g.train_horizon,
        }
    }

    /// Physical sample grid of records in `split`.
    pub fn field_grid(&self, split: Split) -> Result<FieldGrid> {
        let g = self.reference_grid();
        let n_points = (self.horizon(split) / g.dt).round() as usize + 1;
        FieldGrid::new(0.0, g.dt * self.system.time_unit(), n_points)
    }
}

/// One simulated trajectory with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub split: Split,
    pub kind: HamiltonianKind,
    /// Driving fields in physical units, sampled on the observable times.
    pub fields: Vec<DrivingField>,
    /// Bloch vector of every site in the initial product state.
    pub initial_state: Vec<[f64; 3]>,
    pub observables: ObservableSeries,
    pub lindblad_gamma: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub schema_version: u32,
    pub config: DatasetConfig,
    pub n_qubits: usize,
    pub observables: Vec<String>,
    pub record_count: usize,
    pub splits: SplitAssignment,
    /// SHA-256 of each record's JSON line.
    pub record_hashes: Vec<String>,
    /// SHA-256 of the records file.
    pub content_hash: String,
    /// Records whose first draw failed and was replaced.
    pub regenerated: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<TrajectoryRecord>,
}

impl Dataset {
    pub fn content_hash(&self) -> &str {
        &self.manifest.content_hash
    }

    pub fn split(&self, split: Split) -> Vec<&TrajectoryRecord> {
        self.manifest.splits.get(split).iter().map(|&i| &self.records[i]).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(RECORDS_FILE), records_text(&self.records)?)?;
        write_json(&dir.join(MANIFEST_FILE), &self.manifest)
    }

    /// Loads a dataset and verifies its content hash and split assignment.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format != DATASET_FORMAT || manifest.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Dataset(format!("{} is not a version-{DATASET_SCHEMA_VERSION} dataset", dir.display())));
        }
        let text = std::fs::read_to_string(dir.join(RECORDS_FILE))?;
        let hash = sha256_hex(text.as_bytes());
        if hash != manifest.content_hash {
            return Err(Error::Dataset(format!(
                "records hash {hash} does not match manifest {}",
                manifest.content_hash
            )));
        }
        let records = text.lines().map(serde_json::from_str).collect::<std::result::Result<Vec<_>, _>>()?;
        let ds = Self { manifest, records };
        ds.check_consistency()?;
        Ok(ds)
    }

    /// Split indices cover every record exactly once and no record content
    /// is shared between the train and test splits.
    pub fn check_consistency(&self) -> Result<()> {
        let m = &self.manifest;
        if m.record_count != self.records.len() || m.record_hashes.len() != self.records.len() {
            return Err(Error::Dataset("record count does not match manifest".into()));
        }
        let mut seen = vec![false; self.records.len()];
        for split in Split::ALL {
            for &i in m.splits.get(split) {
                if i >= seen.len() || seen[i] || self.records[i].split != split {
                    return Err(Error::Dataset(format!("record {i} misassigned to {split:?}")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Dataset("record without split".into()));
        }
        let train: HashSet<&str> = m.splits.train.iter().map(|&i| m.record_hashes[i].as_str()).collect();
        if let Some(&i) = m.splits.test.iter().find(|&&i| train.contains(m.record_hashes[i].as_str())) {
            return Err(Error::Dataset(format!("test record {i} duplicates a training record")));
        }
        Ok(())
    }
}

fn records_text(records: &[TrajectoryRecord]) -> Result<String> {
    let mut text = String::new();
    for r in records {
        text.push_str(&to_json_line(r)?);
        text.push('\n');
    }
    Ok(text)
}

/// Simulates every record of every split. Records are numbered train first,
/// then validation, then test; record `k` of a split draws from the seed
/// `item_seed(seed, split stream, k)`, so the output does not depend on the
/// number of worker threads.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset> {
    config.validate()?;
    let config = config.resolved();
    let jobs: Vec<(Split, usize)> =
        Split::ALL.iter().flat_map(|&s| (0..config.counts.get(s)).map(move |k| (s, k))).collect();
    let results: Vec<Result<(TrajectoryRecord, bool)>> =
        jobs.par_iter().enumerate().map(|(index, &(split, k))| generate_record(&config, split, k, index)).collect();
    let mut records = Vec::with_capacity(jobs.len());
    let mut regenerated = Vec::new();
    for r in results {
        let (rec, retried) = r?;
        if retried {
            regenerated.push(rec.index);
        }
        records.push(rec);
    }
    let mut splits = SplitAssignment::default();
    for r in &records {
        match r.split {
            Split::Train => splits.train.push(r.index),
            Split::Validation => splits.validation.push(r.index),
            Split::Test => splits.test.push(r.index),
        }
    }
    let record_hashes =
        records.iter().map(|r| Ok(sha256_hex(to_json_line(r)?.as_bytes()))).collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        schema_version: DATASET_SCHEMA_VERSION,
        n_qubits: config.system.n_qubits(),
        observables: config.system.observables()?.names(),
        record_count: records.len(),
        splits,
        record_hashes,
        content_hash: sha256_hex(records_text(&records)?.as_bytes()),
        regenerated,
        config,
    };
    let ds = Dataset { manifest, records };
    ds.check_consistency()?;
    Ok(ds)
}

fn generate_record(config: &DatasetConfig, split: Split, k: usize, index: usize) -> Result<(TrajectoryRecord, bool)> {
    let base = item_seed(config.seed, split.stream(), k as u64);
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = base ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        match simulate_record(config, split, index, seed) {
            Ok(rec) => return Ok((rec, attempt > 0)),
            Err(e) if e.is_numerical() => {
                log::warn!("record {index} (seed {seed}) rejected: {e}; redrawing");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Simulates one record from its seed.
pub fn simulate_record(config: &DatasetConfig, split: Split, index: usize, seed: u64) -> Result<TrajectoryRecord> {
    let system = &config.system;
    let mut rng = rng_from_seed(seed);
    let initial_state = system.initial_state(&mut rng);
    let ref_grid = {
        let g = config.reference_grid();
        FieldGrid::with_horizon(0.0, g.dt, config.horizon(split))?
    };
    let phys_grid = config.field_grid(split)?;
    let fields = (0..system.n_fields())
        .map(|_| {
            let f = config.family.sample(&ref_grid, &mut rng)?;
            let values = f.values().iter().map(|v| v * system.field_unit()).collect();
            DrivingField::new(&phys_grid, values, f.meta().clone()).map(|f| f.with_seed(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let observables = simulate(system, &fields, &initial_state, config.noise, config.substeps_per_dt)?;
    Ok(TrajectoryRecord {
        index,
        split,
        kind: system.hamiltonian(&fields)?.kind(),
        fields,
        initial_state,
        observables,
        lindblad_gamma: config.noise.map(|n| n.gamma),
        seed,
    })
}

/// Observables of `system` driven by physical-unit `fields` on their grid.
pub fn simulate(
    system: &SystemConfig,
    fields: &[DrivingField],
    initial_state: &[[f64; 3]],
    noise: Option<NoiseConfig>,
    substeps_per_dt: usize,
) -> Result<ObservableSeries> {
    let spec = system.hamiltonian(fields)?;
    let first = &fields[0];
    if first.len() < 2 {
        return Err(Error::InvalidArgument("fields need at least two samples".into()));
    }
    let grid = TimeGrid::new(first.t_start(), first.dt(), first.len() - 1)?.with_substeps(substeps_per_dt)?;
    let psi = product_state(initial_state)?;
    let obs = system.observables()?;
    let series = match noise {
        None => evolve_schrodinger(&psi, &spec, &grid, &obs)?,
        Some(n) => evolve_lindblad(&DensityMatrix::from_pure(&psi), &spec, &grid, &obs, n.gamma)?,
    };
    // Report on the field's own sample times, which can differ from the
    // stepping grid in the last bit.
    ObservableSeries::new(first.times().to_vec(), series.values().to_vec(), obs)
}
