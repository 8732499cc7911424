//! Simulation and spectral numerics for chains of anharmonic oscillators
//! with exchange noise: Gibbs sampling, event-driven dynamics, fluctuation
//! fields, two-point functions, Lévy kernels, the discrete Poisson equation,
//! mode-coupling classification and limit-SPDE simulators.

pub mod chain;
pub mod correlation;
pub mod error;
pub mod fields;
pub mod gibbs;
pub mod nlfh;
pub mod poisson;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod spde;
pub mod spectral;
pub mod stats;
pub mod test_function;

pub use error::{OflError, Result};
