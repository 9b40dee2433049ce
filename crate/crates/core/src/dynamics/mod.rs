//! Exact dense simulation of driven spin systems.

pub mod evolve;
pub mod expansion;
pub mod hamiltonian;
pub mod pauli;
pub mod series;
pub mod state;
pub mod warp;

pub use evolve::{
    evolve_lindblad, evolve_lindblad_with, evolve_schrodinger, evolve_schrodinger_with, lindblad_states,
    schrodinger_states, unitary_propagator, EvolutionStats, EvolveOptions, Propagator, TimeGrid,
};
pub use expansion::short_time_expansion;
pub use hamiltonian::{
    build_hamiltonian, DrivenTerm, HamiltonianKind, HamiltonianSpec, NMR_J_COUPLING_HZ, SC_COUPLING_MHZ,
};
pub use pauli::{Axis, ObservableSet, PauliString, PauliSum};
pub use series::ObservableSeries;
pub use state::{expectation, product_state, DensityMatrix, Expectation, QuantumState};
pub use warp::warp_time_grid;
