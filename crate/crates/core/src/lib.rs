//! Multilevel quality indicators (SHOR, RSHOR, RSPOR) for hospitals and
//! regions, the conventional indicators they are compared with (raw rate,
//! SMR, RSMR, regional SMR), and a Monte Carlo harness that scores all of
//! them against simulated truth.
//!
//! The pipeline for one replication is
//! [`scenario`] → [`dgp`] → [`glmm`] → [`indicators`] → [`evaluation`];
//! [`harness`] repeats it over sweep grids with reproducible random streams.

pub mod error;
pub mod format;
pub mod rng;
pub mod scenario;
pub mod stats;

pub mod config;
pub mod dgp;
pub mod evaluation;
pub mod glmm;
pub mod harness;
pub mod indicators;
pub mod plot;

pub use error::{Error, Result};
pub use rng::StreamSeed;
pub use scenario::{derive_parameters, validate_scenario, DerivedParams, Scenario, ScenarioParam};
