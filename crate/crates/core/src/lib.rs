//! Cascading-failure simulation of AC transmission grids under regional
//! temperature disturbances.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod engine;
pub mod error;
pub mod geo;
pub mod grid;
pub mod montecarlo;
pub mod powerflow;
pub mod outage;
pub mod weather;

pub use error::{CaseError, ConfigError, GeoError, SimError};
pub use grid::{Network, SystemState};
