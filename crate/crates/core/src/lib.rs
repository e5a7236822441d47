//! Pulse-level variational eigensolver toolkit for coupled transmons.

pub mod ansatz;
pub mod calibration;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod hamiltonians;
pub mod optimizers;
pub mod pulse;
pub mod seed;
pub mod vqe;

pub use error::{Error, Result};
