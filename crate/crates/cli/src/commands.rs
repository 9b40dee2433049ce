use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use hamflow_core::dynamics::ObservableSeries;
use hamflow_core::fields::DrivingField;
use hamflow_core::io::{format_f64, write_json};
use hamflow_core::neural::Direction;
use hamflow_core::pipeline::{
    closed_loop, evaluate, generate_dataset, infer_detuning, predict_dynamics, Dataset, DatasetManifest, EpochRecord,
    EvalReport, ModelArtifact, Split, SystemConfig, TrainOptions,
};
use serde::Serialize;

use crate::config::{RunConfig, RESOLVED_CONFIG_FILE};
use crate::error::{CliError, CliResult};

pub const EVAL_FILE: &str = "eval.json";
pub const MSE_VS_TIME_FILE: &str = "mse_vs_time.csv";

pub fn model_file(direction: Direction) -> String {
    format!("model_{}.json", direction.name())
}

pub fn history_file(direction: Direction) -> String {
    format!("loss_history_{}.csv", direction.name())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenOutcome {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

/// Generates the configured dataset into `paths.data_dir`.
pub fn cmd_gen(config: &RunConfig) -> CliResult<GenOutcome> {
    let dataset = generate_dataset(&config.dataset_config())?;
    let dir = config.paths.data_dir.clone();
    dataset.save(&dir)?;
    write_json(&dir.join(RESOLVED_CONFIG_FILE), &config.resolved())?;
    Ok(GenOutcome { dir, manifest: dataset.manifest })
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    #[serde(flatten)]
    config: &'a RunConfig,
    direction: Direction,
    manifest_hash: &'a str,
    deterministic: bool,
}

/// Trains one direction on the dataset in `paths.data_dir` and writes the
/// model, its loss history and the resolved config into `paths.out_dir`.
pub fn cmd_train(
    config: &RunConfig,
    direction: Direction,
    resume: bool,
    deterministic: bool,
) -> CliResult<ModelArtifact> {
    let dataset = Dataset::load(&config.paths.data_dir)?;
    if let Some(expected) = &config.training.expected_manifest_hash {
        if expected != dataset.content_hash() {
            return Err(CliError::Usage(format!(
                "training.expected_manifest_hash is {expected} but {} has {}",
                config.paths.data_dir.display(),
                dataset.content_hash()
            )));
        }
    }
    if dataset.manifest.config.system != config.dataset.system {
        return Err(CliError::Usage("dataset.system differs from the system the dataset was generated for".into()));
    }
    let out = &config.paths.out_dir;
    let opts = TrainOptions {
        parallel: !deterministic,
        state_path: Some(out.join(format!("train_state_{}.json", direction.name()))),
        resume,
    };
    let artifact = hamflow_core::pipeline::train(&dataset, &config.train_config(direction), &opts)?;
    artifact.save(&out.join(model_file(direction)))?;
    write_history(&out.join(history_file(direction)), &artifact.history)?;
    let resolved = config.resolved();
    write_json(
        &out.join(format!("resolved_config_train_{}.json", direction.name())),
        &ResolvedTrain { config: &resolved, direction, manifest_hash: dataset.content_hash(), deterministic },
    )?;
    Ok(artifact)
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["epoch", "train_loss", "validation_loss"])?;
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            format_f64(e.train_loss),
            e.validation_loss.map_or_else(String::new, format_f64),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Evaluates a model on one split of the dataset in `data_dir`. The train
/// window ends at the dataset's train horizon.
pub fn cmd_eval(
    model: &Path,
    data_dir: &Path,
    split: Split,
    allow_train_split: bool,
    out_dir: &Path,
) -> CliResult<EvalReport> {
    if split == Split::Train && !allow_train_split {
        return Err(CliError::Usage("refusing to evaluate on the train split without --allow-train-split".into()));
    }
    let artifact = ModelArtifact::load(model)?;
    let dataset = Dataset::load(data_dir)?;
    if dataset.manifest.config.system != artifact.system {
        return Err(CliError::Usage("model and dataset describe different systems".into()));
    }
    let records = dataset.split(split);
    let boundary = dataset.manifest.config.reference_grid().train_horizon * artifact.system.time_unit();
    let report = evaluate(&artifact, &records, boundary)?;
    write_json(&out_dir.join(EVAL_FILE), &report)?;
    report.write_csv(create(&out_dir.join(MSE_VS_TIME_FILE))?)?;
    Ok(report)
}

/// Parses `x,y,z` Bloch vectors; a single vector is repeated on every site.
pub fn parse_initial_state(system: &SystemConfig, specs: &[String]) -> CliResult<Vec<[f64; 3]>> {
    if specs.is_empty() {
        return Ok(match system {
            SystemConfig::Tfim { n_qubits, .. } => vec![[0.0, 0.0, 1.0]; *n_qubits],
            SystemConfig::Qubit => vec![[0.0, 0.0, 1.0]],
            fixed => fixed.initial_state(&mut hamflow_core::seed::rng_from_seed(0)),
        });
    }
    let vectors = specs
        .iter()
        .map(|s| {
            let v: Vec<f64> = s
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Usage(format!("--initial {s:?}: expected x,y,z")))?;
            <[f64; 3]>::try_from(v).map_err(|_| CliError::Usage(format!("--initial {s:?}: expected three components")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let n = system.n_qubits();
    match vectors.len() {
        1 => Ok(vec![vectors[0]; n]),
        k if k == n => Ok(vectors),
        k => Err(CliError::Usage(format!("{k} initial vectors for {n} qubits"))),
    }
}

/// Predicts observables for physical-unit fields and writes them as CSV.
pub fn cmd_predict(model: &Path, fields: &[PathBuf], initial: &[String], out: &Path) -> CliResult<ObservableSeries> {
    let artifact = ModelArtifact::load(model)?;
    artifact.expect_direction(Direction::Dynamics)?;
    let fields = fields
        .iter()
        .map(|p| Ok(DrivingField::read_csv(File::open(p).map_err(|e| CliError::io(p, e))?)?))
        .collect::<CliResult<Vec<_>>>()?;
    let bloch = parse_initial_state(&artifact.system, initial)?;
    let series = predict_dynamics(&artifact, &fields, &artifact.system.initial_moments(&bloch)?)?;
    series.write_csv(create(out)?)?;
    Ok(series)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferOutcome {
    pub fields: Vec<DrivingField>,
    /// Mean squared difference between the input observables and a
    /// re-simulation under the inferred fields.
    pub closed_loop_mse: f64,
}

/// Infers driving fields from an observable CSV. Two-field systems write
/// `delta_1,delta_2` columns on the input grid; one-field systems write
/// `t,B`.
pub fn cmd_infer(model: &Path, observables: &Path, initial: &[String], out: &Path) -> CliResult<InferOutcome> {
    let artifact = ModelArtifact::load(model)?;
    artifact.expect_direction(Direction::Hamiltonian)?;
    let file = File::open(observables).map_err(|e| CliError::io(observables, e))?;
    let obs = ObservableSeries::read_csv(file, artifact.system.n_qubits())?;
    if let SystemConfig::Sc { .. } = artifact.system {
        let d = infer_detuning(&artifact, &obs)?;
        let mut w = csv::Writer::from_writer(create(out)?);
        w.write_record(["delta_1", "delta_2"])?;
        for (a, b) in d.delta_1.values().iter().zip(d.delta_2.values()) {
            w.write_record([format_f64(*a), format_f64(*b)])?;
        }
        w.flush().map_err(|e| CliError::io(out, e))?;
        return Ok(InferOutcome { fields: vec![d.delta_1, d.delta_2], closed_loop_mse: d.closed_loop_mse });
    }
    let bloch = parse_initial_state(&artifact.system, initial)?;
    let cl = closed_loop(&artifact, &obs, &bloch)?;
    cl.inferred[0].write_csv(create(out)?)?;
    Ok(InferOutcome { fields: cl.inferred, closed_loop_mse: cl.observable_mse })
}
