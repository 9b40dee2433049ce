//! Dataset generation, training and evaluation.

mod dataset;
mod eval;
mod infer;
mod nmr;
mod system;
mod train;

pub use dataset::{
    generate_dataset, simulate, simulate_record, Dataset, DatasetConfig, DatasetManifest, NoiseConfig, Split,
    SplitAssignment, SplitCounts, TrajectoryRecord, MANIFEST_FILE, RECORDS_FILE,
};
pub use eval::{evaluate, EvalReport, InstanceMse};
pub use infer::{
    closed_loop, infer_detuning, infer_field, infer_fields, predict_dynamics, predict_dynamics_raw, series_mse,
    ClosedLoop, DetuningInference,
};
pub use nmr::{run_nmr_protocol, schedule_field, simulate_warped, NmrSchedule, NmrSource, NMR_POINTS};
pub use system::{uniform_on_sphere, ReferenceGrid, SystemConfig};
pub use train::{
    batch_outputs, dynamics_inputs, encode_records, hamiltonian_inputs, train, training_config_hash, EpochRecord,
    LrSchedule, ModelArtifact, ModelShape, Tensors, TrainConfig, TrainOptions, FIELD_SCALE,
};
