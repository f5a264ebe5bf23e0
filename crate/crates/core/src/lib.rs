//! Stationary analysis of a discrete-time batch-arrival, batch-service queue
//! with an essential first service, a binomially thinned optional second
//! service and queue-length-dependent single or multiple vacations.
//!
//! Time is slotted with late arrivals and delayed access: observations are
//! taken at `t-` just before a slot's potential arrival, and service or
//! vacation completions happen at the following slot boundary.

pub mod dists;
pub mod error;
pub mod gf;
pub mod model;

pub use dists::{DiscretePmf, DphParams};
pub use error::{Error, Result};
pub use model::{ModelSpec, Policy};
pub mod arbitrary;
pub mod config;
pub mod measures;
pub mod simulator;
pub mod solver;

pub use arbitrary::{to_arbitrary, ArbitraryDistribution};
pub use measures::PerformanceReport;
pub use simulator::{simulate, SimConfig, SimulationEstimate};
pub use solver::{solve_model, DepartureDistribution, Engine, NormalizationConstants, Solution};
