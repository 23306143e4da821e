//! Numerical laboratory for continuous data assimilation (nudging) of the
//! two-dimensional stochastic third-grade fluid equations on a periodic torus.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod fft;
pub mod grid;
pub mod interpolant;
pub mod io;
pub mod operators;
pub mod stochastic;
pub mod verify;

pub use error::{Error, Result};
