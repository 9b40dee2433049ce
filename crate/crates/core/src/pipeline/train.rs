use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split, TrajectoryRecord};
use super::system::SystemConfig;
use crate::io::{read_json, sha256_hex, to_json_line, write_json};
use crate::neural::{
    adam_step, forward, loss_and_gradient, AdamState, Checkpoint, Direction, ModelConfig, SequenceModel,
    DEFAULT_LEARNING_RATE,
};
use crate::seed::{item_seed, rng_from_seed, stream};
use crate::{Error, Result};

/// Reference-unit field values are divided by this before entering or
/// leaving the network.
pub const FIELD_SCALE: f64 = 5.0;

pub const ARTIFACT_FORMAT: &str = "hamflow-model";
pub const ARTIFACT_VERSION: u32 = 1;

/// Sequences per forward pass when scoring without gradients.
const EVAL_CHUNK: usize = 256;

/// Hidden sizes of a [`SequenceModel`]; the widths at either end follow
/// from the system and direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub hidden: usize,
    pub n_layers: usize,
    pub encoder_depth: usize,
    pub encoder_width: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelShape {
    pub fn desk() -> Self {
        Self { hidden: 128, n_layers: 2, encoder_depth: 3, encoder_width: 128 }
    }

    pub fn full() -> Self {
        Self { hidden: 500, n_layers: 4, encoder_depth: 4, encoder_width: 500 }
    }

    pub fn model_config(&self, system: &SystemConfig, direction: Direction) -> Result<ModelConfig> {
        let n_obs = system.observables()?.len();
        let n_fields = system.n_fields();
        let (input_width, output_width) = match direction {
            Direction::Dynamics => (n_fields + 1, n_obs),
            Direction::Hamiltonian => (n_obs + 1, n_fields),
        };
        let cfg = ModelConfig {
            direction,
            input_width,
            output_width,
            o0_width: system.o0_width(),
            hidden: self.hidden,
            n_layers: self.n_layers,
            encoder_depth: self.encoder_depth,
            encoder_width: self.encoder_width,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub direction: Direction,
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
    #[serde(default)]
    pub seed: u64,
}

/// Per-epoch learning-rate multiplier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from the base rate at epoch 1 towards zero after the
    /// last epoch.
    Cosine,
}

impl LrSchedule {
    /// Learning rate for 1-based `epoch` out of `epochs`.
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let progress = (epoch.saturating_sub(1)) as f64 / epochs.max(1) as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    64
}
fn default_lr() -> f64 {
    DEFAULT_LEARNING_RATE
}

impl TrainConfig {
    pub fn new(direction: Direction, seed: u64) -> Self {
        Self {
            direction,
            model: ModelShape::desk(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            lr_schedule: LrSchedule::Constant,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("training.epochs and training.batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "training.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Settings that do not change the result.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Spread gradient chunks over the rayon pool.
    pub parallel: bool,
    /// Where per-epoch resume state is written.
    pub state_path: Option<PathBuf>,
    /// Continue from `state_path` if it holds a run with the same
    /// configuration.
    pub resume: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

/// A trained model together with everything needed to use and audit it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub checkpoint: Checkpoint,
    pub system: SystemConfig,
    pub observables: Vec<String>,
    /// Content hash of the dataset the model was trained on.
    pub manifest_hash: String,
    pub train_config: TrainConfig,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

impl ModelArtifact {
    pub fn model(&self) -> &SequenceModel {
        &self.checkpoint.model
    }

    pub fn direction(&self) -> Direction {
        self.checkpoint.model.direction()
    }

    pub fn expect_direction(&self, expected: Direction) -> Result<()> {
        if self.direction() != expected {
            return Err(Error::DirectionMismatch {
                expected: expected.name().into(),
                found: self.direction().name().into(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a: ModelArtifact = read_json(path)?;
        if a.format != ARTIFACT_FORMAT || a.version != ARTIFACT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "{} is not a version-{ARTIFACT_VERSION} model",
                path.display()
            )));
        }
        let m = &a.checkpoint.model;
        let model = SequenceModel::from_parts(m.config().clone(), m.params().to_vec())?;
        let expect = a.train_config.model.model_config(&a.system, a.train_config.direction)?;
        if model.config() != &expect {
            return Err(Error::Shape("checkpoint architecture does not match its training config".into()));
        }
        Ok(Self { checkpoint: Checkpoint { model, ..a.checkpoint.clone() }, ..a })
    }
}

/// Network tensors for a set of records: inputs `(T, B, I)`, initial
/// moments `(B, E)` and targets `(T, B, O)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensors {
    pub inputs: Array3<f64>,
    pub o0: Array2<f64>,
    pub targets: Array3<f64>,
}

impl Tensors {
    pub fn batch_len(&self) -> usize {
        self.inputs.dim().1
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select(Axis(1), idx),
            o0: self.o0.select(Axis(0), idx),
            targets: self.targets.select(Axis(1), idx),
        }
    }
}

/// Network input rows for physical-unit fields on the given times.
pub fn dynamics_inputs(system: &SystemConfig, times: &[f64], fields: &[Vec<f64>]) -> Array2<f64> {
    let (tu, fu) = (system.time_unit(), system.field_unit());
    Array2::from_shape_fn((times.len(), fields.len() + 1), |(k, j)| match fields.get(j) {
        Some(f) => f[k] / fu / FIELD_SCALE,
        None => times[k] / tu,
    })
}

/// Network input rows for observable rows on the given times.
pub fn hamiltonian_inputs(system: &SystemConfig, times: &[f64], rows: &[Vec<f64>]) -> Array2<f64> {
    let tu = system.time_unit();
    let width = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((times.len(), width + 1), |(k, j)| if j < width { rows[k][j] } else { times[k] / tu })
}

pub fn encode_records(system: &SystemConfig, direction: Direction, records: &[&TrajectoryRecord]) -> Result<Tensors> {
    let obs_names = system.observables()?.names();
    let n_fields = system.n_fields();
    let t_len = records.first().map_or(0, |r| r.observables.len());
    let (i_w, o_w) = match direction {
        Direction::Dynamics => (n_fields + 1, obs_names.len()),
        Direction::Hamiltonian => (obs_names.len() + 1, n_fields),
    };
    let b = records.len();
    let mut inputs = Array3::zeros((t_len, b, i_w));
    let mut targets = Array3::zeros((t_len, b, o_w));
    let mut o0 = Array2::zeros((b, system.o0_width()));
    for (bi, r) in records.iter().enumerate() {
        if r.observables.len() != t_len {
            return Err(Error::Shape(format!(
                "record {} has {} steps, expected {t_len}",
                r.index,
                r.observables.len()
            )));
        }
        if r.observables.observable_set().names() != obs_names || r.fields.len() != n_fields {
            return Err(Error::Shape(format!("record {} does not match the system layout", r.index)));
        }
        let times = r.observables.times();
        let fields: Vec<Vec<f64>> = r.fields.iter().map(|f| f.values().to_vec()).collect();
        let f_in = dynamics_inputs(system, times, &fields);
        let rows = r.observables.values();
        let (x, y) = match direction {
            Direction::Dynamics => (f_in.view().to_owned(), Array2::from_shape_fn((t_len, o_w), |(k, j)| rows[k][j])),
            Direction::Hamiltonian => {
                (hamiltonian_inputs(system, times, rows), f_in.slice(s![.., ..n_fields]).to_owned())
            }
        };
        inputs.slice_mut(s![.., bi, ..]).assign(&x);
        targets.slice_mut(s![.., bi, ..]).assign(&y);
        let m = system.initial_moments(&r.initial_state)?;
        o0.row_mut(bi).assign(&ndarray::ArrayView1::from(&m[..]));
    }
    Ok(Tensors { inputs, o0, targets })
}

/// Raw network outputs for a batch, in chunks so memory stays bounded.
pub fn batch_outputs(model: &SequenceModel, inputs: ArrayView3<f64>, o0: ArrayView2<f64>) -> Result<Array3<f64>> {
    let (t_len, b, _) = inputs.dim();
    let starts: Vec<usize> = (0..b).step_by(EVAL_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&s0| {
            let e = (s0 + EVAL_CHUNK).min(b);
            forward(model, inputs.slice(s![.., s0..e, ..]), o0.slice(s![s0..e, ..]), false).map(|f| f.outputs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array3::zeros((t_len, b, model.config().output_width));
    for (&s0, part) in starts.iter().zip(&parts) {
        let e = s0 + part.dim().1;
        out.slice_mut(s![.., s0..e, ..]).assign(part);
    }
    Ok(out)
}

fn dataset_loss(model: &SequenceModel, t: &Tensors) -> Result<f64> {
    let out = batch_outputs(model, t.inputs.view(), t.o0.view())?;
    let sq: f64 = out.iter().zip(t.targets.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / out.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainState {
    run_hash: String,
    epochs_done: usize,
    params: Vec<f64>,
    adam: AdamState,
    best_params: Vec<f64>,
    best_epoch: usize,
    best_loss: f64,
    history: Vec<EpochRecord>,
}

/// Hash identifying a training run: configuration plus dataset.
pub fn training_config_hash(config: &TrainConfig, manifest_hash: &str) -> Result<String> {
    Ok(sha256_hex(to_json_line(&(config, manifest_hash))?.as_bytes()))
}

/// Trains one direction on the train split with Adam, keeping the
/// parameters with the lowest validation MSE (training MSE when the split is
/// empty). Shuffling is seeded per epoch, so a resumed run reproduces an
/// uninterrupted one exactly.
pub fn train(dataset: &Dataset, config: &TrainConfig, opts: &TrainOptions) -> Result<ModelArtifact> {
    config.validate()?;
    let system = &dataset.manifest.config.system;
    let model_cfg = config.model.model_config(system, config.direction)?;
    let train_records = dataset.split(Split::Train);
    if train_records.is_empty() {
        return Err(Error::Dataset("no training records".into()));
    }
    let train_t = encode_records(system, config.direction, &train_records)?;
    let val_records = dataset.split(Split::Validation);
    let val_t =
        if val_records.is_empty() { None } else { Some(encode_records(system, config.direction, &val_records)?) };
    let run_hash = training_config_hash(config, dataset.content_hash())?;
    // Resume state may come from a run with a shorter epoch budget, unless
    // the schedule depends on it.
    let budget = if config.lr_schedule == LrSchedule::Constant { 0 } else { config.epochs };
    let resume_key = training_config_hash(&TrainConfig { epochs: budget, ..config.clone() }, dataset.content_hash())?;

    let mut model = SequenceModel::new(model_cfg, item_seed(config.seed, stream::MODEL_INIT, 0))?;
    let mut state = TrainState {
        run_hash: resume_key.clone(),
        epochs_done: 0,
        params: model.params().to_vec(),
        adam: AdamState::new(model.n_params()),
        best_params: model.params().to_vec(),
        best_epoch: 0,
        best_loss: f64::INFINITY,
        history: Vec::new(),
    };
    if let (true, Some(path)) = (opts.resume, &opts.state_path) {
        if path.exists() {
            let saved: TrainState = read_json(path)?;
            if saved.run_hash != resume_key {
                return Err(Error::InvalidArgument(format!("{} belongs to a different training run", path.display())));
            }
            log::info!("resuming after epoch {}", saved.epochs_done);
            state = saved;
            model.params_mut().copy_from_slice(&state.params);
        }
    }

    let n = train_t.batch_len();
    for epoch in state.epochs_done + 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(item_seed(config.seed, stream::SHUFFLE, epoch as u64)));
        let mut weighted = 0.0;
        let lr = config.lr_schedule.rate(config.learning_rate, epoch, config.epochs);
        for idx in order.chunks(config.batch_size) {
            let batch = train_t.select(idx);
            let (loss, grad) =
                loss_and_gradient(&model, batch.inputs.view(), batch.o0.view(), batch.targets.view(), opts.parallel)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam_step(model.params_mut(), &grad, &mut state.adam, lr)?;
            weighted += loss * idx.len() as f64;
        }
        let train_loss = weighted / n as f64;
        let validation_loss = val_t.as_ref().map(|v| dataset_loss(&model, v)).transpose()?;
        let score = validation_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::Divergence { epoch, loss: score });
        }
        if score < state.best_loss {
            state.best_loss = score;
            state.best_epoch = epoch;
            state.best_params = model.params().to_vec();
        }
        state.history.push(EpochRecord { epoch, train_loss, validation_loss });
        state.epochs_done = epoch;
        log::info!(
            "{} epoch {epoch}/{}: train {train_loss:.3e}, validation {}",
            config.direction.name(),
            config.epochs,
            validation_loss.map_or("-".into(), |v| format!("{v:.3e}"))
        );
        if let Some(path) = &opts.state_path {
            state.params = model.params().to_vec();
            write_json(path, &state)?;
        }
    }

    let best = SequenceModel::from_parts(model.config().clone(), state.best_params)?;
    Ok(ModelArtifact {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        checkpoint: Checkpoint::new(best, run_hash),
        system: system.clone(),
        observables: dataset.manifest.observables.clone(),
        manifest_hash: dataset.content_hash().to_string(),
        train_config: config.clone(),
        history: state.history,
        best_epoch: state.best_epoch,
    })
}
