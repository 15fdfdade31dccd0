//! Simulation and statistical analysis of the 0.7 conductance anomaly in
//! multiplexed quantum point contact arrays.
//!
//! The crate is organised bottom-up:
//!
//! * [`transport`] computes the noninteracting saddle-point conductance.
//! * [`vanhove`] solves a 1D tight-binding barrier for the LDOS ridge and
//!   builds the first-order Hartree barrier map.
//! * [`synthesis`] turns devices into measured-looking traces and cohorts.
//! * [`analysis`] is the extraction pipeline applied to one trace or a bias
//!   family.
//! * [`statistics`] aggregates results into yields and correlations.
//! * [`mux`] simulates the on-chip addressing trees and measurement order.
//! * [`pipeline`] and [`io`] tie everything into reproducible file-based runs.

pub mod analysis;
pub mod error;
pub mod io;
pub mod mux;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod statistics;
pub mod synthesis;
pub mod transport;
pub mod units;
pub mod vanhove;

pub use error::{Error, Result};
