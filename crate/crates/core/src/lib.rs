//! Buoyancy allocation, mission simulation and tolerance modeling for
//! ballast-assisted underwater block construction.

pub mod allocation;
pub mod energy_model;
pub mod error;
pub mod geometry;
pub mod mission;
pub mod reference_oracle;
pub mod simulator;

pub use error::{Error, Result};
