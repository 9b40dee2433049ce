use ndarray::Array2;

use super::dataset::simulate;
use super::system::SystemConfig;
use super::train::{dynamics_inputs, hamiltonian_inputs, ModelArtifact, FIELD_SCALE};
use crate::dynamics::ObservableSeries;
use crate::fields::{DrivingField, FieldMeta};
use crate::neural::{model_forward, Direction};
use crate::{Error, Result};

fn check_o0(artifact: &ModelArtifact, o0: &[f64]) -> Result<()> {
    let want = artifact.system.o0_width();
    if o0.len() != want {
        return Err(Error::Shape(format!("initial moments of width {}, model expects {want}", o0.len())));
    }
    Ok(())
}

/// Unclamped network outputs for physical-unit `fields` on their grid.
pub fn predict_dynamics_raw(artifact: &ModelArtifact, fields: &[DrivingField], o0: &[f64]) -> Result<Array2<f64>> {
    artifact.expect_direction(Direction::Dynamics)?;
    check_o0(artifact, o0)?;
    let system = &artifact.system;
    if fields.len() != system.n_fields() {
        return Err(Error::Shape(format!("{} fields, model expects {}", fields.len(), system.n_fields())));
    }
    let times = fields[0].times();
    if fields.iter().any(|f| f.times() != times) {
        return Err(Error::Shape("fields sampled on different grids".into()));
    }
    let values: Vec<Vec<f64>> = fields.iter().map(|f| f.values().to_vec()).collect();
    model_forward(artifact.model(), dynamics_inputs(system, times, &values).view(), o0)
}

/// Predicted observables on the field grid, clamped to [-1, 1].
pub fn predict_dynamics(artifact: &ModelArtifact, fields: &[DrivingField], o0: &[f64]) -> Result<ObservableSeries> {
    let raw = predict_dynamics_raw(artifact, fields, o0)?;
    let rows = raw.outer_iter().map(|r| r.to_vec()).collect();
    ObservableSeries::clamped(fields[0].times().to_vec(), rows, artifact.system.observables()?)
}

/// Estimated driving fields, in physical units, on the observable grid.
pub fn infer_fields(artifact: &ModelArtifact, obs: &ObservableSeries, o0: &[f64]) -> Result<Vec<DrivingField>> {
    artifact.expect_direction(Direction::Hamiltonian)?;
    check_o0(artifact, o0)?;
    let names = obs.observable_set().names();
    if names != artifact.observables {
        return Err(Error::Shape(format!("observables {names:?} differ from the model's {:?}", artifact.observables)));
    }
    let system = &artifact.system;
    let out = model_forward(artifact.model(), hamiltonian_inputs(system, obs.times(), obs.values()).view(), o0)?;
    let scale = FIELD_SCALE * system.field_unit();
    out.columns()
        .into_iter()
        .map(|c| {
            DrivingField::from_samples(
                obs.times().to_vec(),
                c.iter().map(|v| v * scale).collect(),
                FieldMeta::explicit(),
            )
        })
        .collect()
}

/// Single-field form of [`infer_fields`].
pub fn infer_field(artifact: &ModelArtifact, obs: &ObservableSeries, o0: &[f64]) -> Result<DrivingField> {
    let mut fields = infer_fields(artifact, obs, o0)?;
    if fields.len() != 1 {
        return Err(Error::Shape(format!("model infers {} fields; use infer_detuning", fields.len())));
    }
    Ok(fields.remove(0))
}

/// Fields inferred from observables and the observables they reproduce.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoop {
    pub inferred: Vec<DrivingField>,
    pub resimulated: ObservableSeries,
    /// Mean squared difference between input and re-simulated observables.
    pub observable_mse: f64,
}

/// Infers the fields behind `obs` and simulates them again from
/// `initial_state`.
pub fn closed_loop(artifact: &ModelArtifact, obs: &ObservableSeries, initial_state: &[[f64; 3]]) -> Result<ClosedLoop> {
    let o0 = artifact.system.initial_moments(initial_state)?;
    let inferred = infer_fields(artifact, obs, &o0)?;
    let resimulated = simulate(&artifact.system, &inferred, initial_state, None, 20)?;
    let observable_mse = series_mse(obs, &resimulated)?;
    Ok(ClosedLoop { inferred, resimulated, observable_mse })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetuningInference {
    pub delta_1: DrivingField,
    pub delta_2: DrivingField,
    pub resimulated: ObservableSeries,
    pub closed_loop_mse: f64,
}

/// Detuning series of the two-transmon system, validated by re-simulating
/// from the `|10⟩` preparation.
pub fn infer_detuning(artifact: &ModelArtifact, obs: &ObservableSeries) -> Result<DetuningInference> {
    if !matches!(artifact.system, SystemConfig::Sc { .. }) {
        return Err(Error::InvalidArgument(format!("{} model cannot infer detunings", artifact.system.name())));
    }
    let initial = artifact.system.initial_state(&mut crate::seed::rng_from_seed(0));
    let ClosedLoop { mut inferred, resimulated, observable_mse } = closed_loop(artifact, obs, &initial)?;
    let delta_2 = inferred.pop().expect("two fields");
    let delta_1 = inferred.pop().expect("two fields");
    Ok(DetuningInference { delta_1, delta_2, resimulated, closed_loop_mse: observable_mse })
}

/// Mean squared difference over all times and observables.
pub fn series_mse(a: &ObservableSeries, b: &ObservableSeries) -> Result<f64> {
    if a.len() != b.len() || a.observable_set() != b.observable_set() {
        return Err(Error::Shape("series differ in length or observables".into()));
    }
    let (mut sq, mut n) = (0.0, 0usize);
    for (ra, rb) in a.values().iter().zip(b.values()) {
        for (x, y) in ra.iter().zip(rb) {
            sq += (x - y) * (x - y);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sq / n as f64 })
}
