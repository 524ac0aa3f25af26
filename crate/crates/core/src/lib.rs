//! Classical emulation of a finite-difference pricer for multi-asset barrier
//! derivatives built around a block-encoded linear-ODE solver, Gaussian state
//! preparation and amplitude-estimation readout.
//!
//! Pipeline: [`model`] → [`gridding`] → [`operator`] → [`pricer`] reference
//! solve → [`berry`] block system → [`stateprep`] → [`qae`] readout. The
//! [`baselines`] module supplies closed-form and Monte Carlo oracles.

pub mod baselines;
pub mod berry;
pub mod config;
pub mod dist;
pub mod error;
pub mod gridding;
pub mod model;
pub mod operator;
pub mod pipeline;
pub mod pricer;
pub mod qae;
pub mod sparse;
pub mod stateprep;
pub mod verify;

pub use error::{Error, ErrorCategory, Result};
