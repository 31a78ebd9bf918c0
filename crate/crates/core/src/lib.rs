//! Bi-fidelity stochastic collocation for a coupled kinetic-fluid model of
//! particle suspensions, together with the high- and low-fidelity solvers it
//! orchestrates.

pub mod acoustic;
pub mod bifidelity;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hydro;
pub mod initial;
pub mod kinetic;
pub mod kl;
pub mod lofi;
pub mod orchestrate;
pub mod params;
pub mod persist;
pub mod samples;
pub mod snapshot;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
