//! Exact simulation of driven spin systems, randomized driving-field
//! generation, and a from-scratch LSTM with an initial-state encoder that
//! learns both directions of the map between driving fields and local
//! observable dynamics.
//!
//! The crate is split into four layers:
//!
//! - [`dynamics`]: Pauli algebra, closed (Schrödinger) and open (Lindblad)
//!   evolution, observable readout and small analytic helpers.
//! - [`fields`]: Gaussian-process, quench and periodic driving fields.
//! - [`neural`]: encoder + stacked LSTM + linear head with exact BPTT and Adam.
//! - [`pipeline`]: dataset generation, training, inference and evaluation.

pub mod dynamics;
pub mod error;
pub mod fields;
pub mod io;
pub mod neural;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
