//! Simulation of a Ramsey interferometer built around a microwave cavity:
//! a circular Rydberg atom crosses the cavity between two π/2 pulses, the
//! atom-cavity coupling is gated on for an integer number of vacuum Rabi
//! cycles, and an optional probe pulse reads out which path the atom took.
//!
//! Conventions: angular frequencies in rad/s, times in seconds, ħ = 1.
//! Config files accept kHz (as ω/2π) and μs; conversion happens at load
//! time and nowhere else.

// `!(x > 0.0)` is the validation idiom here: unlike `x <= 0.0` it also
// rejects NaN. Indexed loops stay because the kernels mirror the matrix
// algebra they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod circuit;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod evolve;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod output;
pub mod spectrum;
pub mod state;

pub use error::{Error, Result};
