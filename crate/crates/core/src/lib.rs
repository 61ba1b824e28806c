//! Nonstationary dynamic factor models: estimation of factor counts, a
//! singular VECM or VAR for the factors, and impulse responses.

pub mod cli;
pub mod error;
pub mod factors;
pub mod io;
pub mod irf;
pub mod lagpoly;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod serial;
pub mod spectral;
pub mod var;
pub mod vecm;

pub use error::{Error, Result};
