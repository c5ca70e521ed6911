//! Exact simulation and statistics for a one-dimensional reactive front
//! driven by symmetric exclusion.

pub mod auxiliary;
pub mod cli;
pub mod config;
pub mod error;
pub mod labeled;
pub mod regen;
pub mod lattice;
pub mod map_check;
pub mod rng;
pub mod stats;
pub mod zero_range;

pub use error::{Error, Result};
