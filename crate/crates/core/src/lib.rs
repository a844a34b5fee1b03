//! Simulation core for analog Ising machines with per-oscillator adaptive
//! binarization control.

pub mod controller;
pub mod dynamics;
pub mod error;
pub mod ising;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sensor;
pub mod text;

pub use error::{CaimError, Result};
pub use ising::{hamiltonian, IsingProblem, SpinConfig};
pub use models::{AimModel, Family};
