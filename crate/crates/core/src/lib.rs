//! Detection limits of pre-election, parallel and passive testing of
//! ballot-marking devices, with a Monte Carlo simulator for the
//! closed-form results.

pub mod config;
pub mod error;
pub mod feasibility;
pub mod minimax;
pub mod parallel;
pub mod passive;
pub mod published;
pub mod repro;
pub mod sim;
pub mod space;
pub mod table;
pub mod stats;

pub use error::{Error, Result};
