use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    Axis, DrivenTerm, HamiltonianSpec, ObservableSet, PauliString, PauliSum, NMR_J_COUPLING_HZ, SC_COUPLING_MHZ,
};
use crate::fields::DrivingField;
use crate::{Error, Result};

/// Physical system a dataset is generated from.
///
/// Fields and times are sampled in reference units (grid spacing 0.1) and
/// converted to physical units with [`SystemConfig::time_unit`] and
/// [`SystemConfig::field_unit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemConfig {
    /// Transverse-field Ising ring driven by a uniform field.
    Tfim {
        #[serde(default = "default_tfim_n")]
        n_qubits: usize,
        #[serde(default = "default_j")]
        j: f64,
    },
    /// Two nuclear spins with a modulated ZZ coupling, prepared in `|0+⟩`.
    Nmr {
        #[serde(default = "default_nmr_b0")]
        b0_hz: f64,
        #[serde(default)]
        observables: Option<Vec<String>>,
    },
    /// Two transmons with a SWAP coupling and two detuning controls,
    /// prepared in `|10⟩`.
    Sc {
        #[serde(default = "default_sc_b0")]
        b0_mhz: f64,
        #[serde(default)]
        observables: Option<Vec<String>>,
    },
    /// One qubit with `H = B(t) X`.
    Qubit,
}

fn default_tfim_n() -> usize {
    5
}
fn default_j() -> f64 {
    1.0
}
fn default_nmr_b0() -> f64 {
    NMR_J_COUPLING_HZ
}
fn default_sc_b0() -> f64 {
    SC_COUPLING_MHZ
}

/// Recording grid and window lengths in reference units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    pub dt: f64,
    /// Horizon of training and validation records; also the boundary of
    /// the train window during evaluation.
    pub train_horizon: f64,
    /// Horizon of test records.
    pub test_horizon: f64,
}

impl SystemConfig {
    pub fn tfim(n_qubits: usize) -> Self {
        SystemConfig::Tfim { n_qubits, j: 1.0 }
    }

    pub fn nmr() -> Self {
        SystemConfig::Nmr { b0_hz: NMR_J_COUPLING_HZ, observables: None }
    }

    pub fn sc() -> Self {
        SystemConfig::Sc { b0_mhz: SC_COUPLING_MHZ, observables: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemConfig::Tfim { .. } => "tfim",
            SystemConfig::Nmr { .. } => "nmr",
            SystemConfig::Sc { .. } => "sc",
            SystemConfig::Qubit => "qubit",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("system.{name} must be positive, got {v}")))
            }
        };
        match self {
            SystemConfig::Tfim { n_qubits, j } => {
                if !(3..=16).contains(n_qubits) {
                    return Err(Error::InvalidArgument(format!("system.n_qubits = {n_qubits} outside 3..=16")));
                }
                if !j.is_finite() {
                    return Err(Error::InvalidArgument("system.j must be finite".into()));
                }
            }
            SystemConfig::Nmr { b0_hz, .. } => positive("b0_hz", *b0_hz)?,
            SystemConfig::Sc { b0_mhz, .. } => positive("b0_mhz", *b0_mhz)?,
            SystemConfig::Qubit => {}
        }
        self.observables().map(|_| ())
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            SystemConfig::Tfim { n_qubits, .. } => *n_qubits,
            SystemConfig::Nmr { .. } | SystemConfig::Sc { .. } => 2,
            SystemConfig::Qubit => 1,
        }
    }

    /// Number of independent driving fields.
    pub fn n_fields(&self) -> usize {
        match self {
            SystemConfig::Sc { .. } => 2,
            _ => 1,
        }
    }

    pub fn field_names(&self) -> Vec<String> {
        match self {
            SystemConfig::Sc { .. } => vec!["delta_1".into(), "delta_2".into()],
            _ => vec!["B".into()],
        }
    }

    /// Physical duration of one reference time unit: 2 ms for NMR, 20 ns
    /// (in µs) for SC, 1 otherwise.
    pub fn time_unit(&self) -> f64 {
        match self {
            SystemConfig::Nmr { .. } => 2e-3,
            SystemConfig::Sc { .. } => 0.02,
            _ => 1.0,
        }
    }

    /// Physical value of a unit reference field: `B0` in Hz for NMR, 1 MHz
    /// for SC, 1 otherwise.
    pub fn field_unit(&self) -> f64 {
        match self {
            SystemConfig::Nmr { b0_hz, .. } => *b0_hz,
            _ => 1.0,
        }
    }

    pub fn reference_grid(&self) -> ReferenceGrid {
        match self {
            SystemConfig::Tfim { .. } | SystemConfig::Qubit => {
                ReferenceGrid { dt: 0.1, train_horizon: 5.0, test_horizon: 15.0 }
            }
            // 200 µs spacing; 20 ms training window; 250 points to 49.8 ms.
            SystemConfig::Nmr { .. } => ReferenceGrid { dt: 0.1, train_horizon: 10.0, test_horizon: 24.9 },
            // 2 ns spacing, 11 points over 20 ns.
            SystemConfig::Sc { .. } => ReferenceGrid { dt: 0.1, train_horizon: 1.0, test_horizon: 1.0 },
        }
    }

    pub fn observables(&self) -> Result<ObservableSet> {
        match self {
            SystemConfig::Tfim { n_qubits, .. } => ObservableSet::tfim_default(*n_qubits),
            SystemConfig::Nmr { observables, .. } | SystemConfig::Sc { observables, .. } => match observables {
                Some(names) => ObservableSet::from_names(names, 2),
                None => Ok(ObservableSet::two_qubit_complete()),
            },
            SystemConfig::Qubit => {
                ObservableSet::new(Axis::ALL.iter().map(|&a| PauliString::single(1, 0, a)).collect::<Result<_>>()?)
            }
        }
    }

    /// Width of the initial-moment vector: one Bloch vector for
    /// translationally invariant systems, two for the two-qubit systems.
    pub fn o0_width(&self) -> usize {
        match self {
            SystemConfig::Nmr { .. } | SystemConfig::Sc { .. } => 6,
            _ => 3,
        }
    }

    /// Per-site Bloch vectors of the initial product state.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<[f64; 3]> {
        match self {
            SystemConfig::Tfim { n_qubits, .. } => vec![uniform_on_sphere(rng); *n_qubits],
            SystemConfig::Qubit => vec![uniform_on_sphere(rng)],
            SystemConfig::Nmr { .. } => vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
            SystemConfig::Sc { .. } => vec![[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Encoder input derived from the initial Bloch vectors.
    pub fn initial_moments(&self, bloch: &[[f64; 3]]) -> Result<Vec<f64>> {
        let sites = self.o0_width() / 3;
        if bloch.len() < sites {
            return Err(Error::Shape(format!("{} Bloch vectors, need {sites}", bloch.len())));
        }
        Ok(bloch[..sites].iter().flatten().copied().collect())
    }

    /// Hamiltonian for fields given in physical units.
    pub fn hamiltonian(&self, fields: &[DrivingField]) -> Result<HamiltonianSpec> {
        if fields.len() != self.n_fields() {
            return Err(Error::Shape(format!("{} fields for a system with {}", fields.len(), self.n_fields())));
        }
        let spec = match self {
            SystemConfig::Tfim { n_qubits, j } => {
                HamiltonianSpec::TfimRing { n_qubits: *n_qubits, j: *j, field: fields[0].clone() }
            }
            SystemConfig::Nmr { b0_hz, .. } => HamiltonianSpec::NmrZz { b0: *b0_hz, field: fields[0].clone() },
            SystemConfig::Sc { b0_mhz, .. } => HamiltonianSpec::ScSwapDetuned {
                b0: *b0_mhz,
                detuning_1: fields[0].clone(),
                detuning_2: fields[1].clone(),
            },
            SystemConfig::Qubit => HamiltonianSpec::Custom {
                terms: PauliSum::zero(1),
                driven: vec![DrivenTerm {
                    operator: PauliSum::new(1, vec![(1.0, PauliString::single(1, 0, Axis::X)?)])?,
                    field: fields[0].clone(),
                }],
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Bloch vector uniform on the unit sphere.
pub fn uniform_on_sphere<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi = TAU * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}
