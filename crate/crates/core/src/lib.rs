//! Finite-length scaling laws for LDPC ensembles on the binary erasure
//! channel.

pub mod cli;
pub mod covariance_evolution;
pub mod cycle_exact;
pub mod density_evolution;
pub mod ensembles;
pub mod error;
pub mod numerics;
pub mod peeling_sim;
pub mod repro;
pub mod rng;
pub mod scaling_predict;

pub use error::{Error, Result};
