//! Monte Carlo laboratory for two-speed branching random walks.

pub mod cli;
pub mod engine;
pub mod error;
pub mod extremes;
pub mod laws;
pub mod martingales;
pub mod maxcdf;
pub mod numeric;
pub mod params;
pub mod rng;
pub mod spine;
pub mod stats;

pub use error::{Error, Result};
