//! Riemann-Liouville fractional evolution systems with non-instantaneous
//! impulses: mild solutions by Picard iteration, the constants of the
//! existence and controllability hypotheses, and iterative steering controls.

pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod fracops;
pub mod hypotheses;
pub mod operators;
pub mod solver;
pub mod system;

pub use error::{Error, Result};
