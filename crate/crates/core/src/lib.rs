//! Impulsively and continuously perturbed Lorenz flows, their return maps,
//! one-dimensional quotient maps and transfer operators.

pub mod error;
pub mod flow_integrator;
pub mod interval_maps;
pub mod measures_diagnostics;
pub mod noise_driver;
pub mod pdmp;
pub mod quadrature;
pub mod sections;
pub mod transfer_operators;
pub mod vector_fields;

pub use error::{Error, Result};
