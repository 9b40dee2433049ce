use serde::{Deserialize, Serialize};

use super::infer::predict_dynamics;
use super::system::SystemConfig;
use super::train::ModelArtifact;
use crate::dynamics::{
    evolve_schrodinger_with, product_state, warp_time_grid, EvolveOptions, HamiltonianSpec, ObservableSeries, TimeGrid,
};
use crate::fields::{make_periodic, make_quench, DrivingField, FieldGrid};
use crate::{Error, Result};

/// Samples per NMR run: 200 µs apart, covering 49.8 ms.
pub const NMR_POINTS: usize = 250;

/// Coupling schedule in reference units: time in units of 2 ms, coupling in
/// units of `B0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum NmrSchedule {
    /// `(start time, value)` pairs, the first starting at 0.
    Quench {
        steps: Vec<(f64, f64)>,
    },
    Periodic {
        amplitude: f64,
        omega: f64,
    },
}

pub enum NmrSource<'a> {
    Simulator,
    Model(&'a ModelArtifact),
}

fn b0_of(system: &SystemConfig) -> Result<f64> {
    match system {
        SystemConfig::Nmr { b0_hz, .. } => Ok(*b0_hz),
        other => Err(Error::InvalidArgument(format!("NMR protocol needs an NMR system, got {}", other.name()))),
    }
}

/// The schedule as a physical coupling (Hz) on the 250-point grid.
pub fn schedule_field(system: &SystemConfig, schedule: &NmrSchedule) -> Result<DrivingField> {
    let b0 = b0_of(system)?;
    let reference = FieldGrid::new(0.0, 0.1, NMR_POINTS)?;
    let f = match schedule {
        NmrSchedule::Quench { steps } => make_quench(steps, &reference)?,
        NmrSchedule::Periodic { amplitude, omega } => make_periodic(*amplitude, *omega, &reference)?,
    };
    let physical = FieldGrid::new(0.0, 0.1 * system.time_unit(), NMR_POINTS)?;
    DrivingField::new(&physical, f.values().iter().map(|v| v * b0).collect(), f.meta().clone())
}

/// Observables of the two-spin register prepared in `|0+⟩` under a
/// physical coupling `field` (Hz), realised as the fixed coupling `B0`
/// applied for warped step durations.
pub fn simulate_warped(system: &SystemConfig, field: &DrivingField) -> Result<ObservableSeries> {
    let b0 = b0_of(system)?;
    let initial = system.initial_state(&mut crate::seed::rng_from_seed(0));
    let dt = field.dt();
    let n_steps = field.len().saturating_sub(1);
    let durations = warp_time_grid(field, b0, dt, n_steps)?;
    let grid = TimeGrid::new(field.t_start(), dt, n_steps)?;
    let spec = HamiltonianSpec::NmrZz { b0, field: DrivingField::constant(&field.grid(), b0)? };
    let opts = EvolveOptions { durations: Some(durations), ..Default::default() };
    let obs = system.observables()?;
    let (series, _) = evolve_schrodinger_with(&product_state(&initial)?, &spec, &grid, &obs, &opts)?;
    ObservableSeries::new(field.times().to_vec(), series.values().to_vec(), obs)
}

/// Observables of the two-spin register prepared in `|0+⟩` under the
/// scheduled coupling. The simulator realises `B(t)` as a fixed coupling
/// `B0` applied for warped step durations.
pub fn run_nmr_protocol(
    system: &SystemConfig,
    source: NmrSource<'_>,
    schedule: &NmrSchedule,
) -> Result<ObservableSeries> {
    let field = schedule_field(system, schedule)?;
    let initial = system.initial_state(&mut crate::seed::rng_from_seed(0));
    match source {
        NmrSource::Simulator => simulate_warped(system, &field),
        NmrSource::Model(artifact) => {
            if &artifact.system != system {
                return Err(Error::InvalidArgument("model was trained on a different system".into()));
            }
            predict_dynamics(artifact, &[field], &system.initial_moments(&initial)?)
        }
    }
}
