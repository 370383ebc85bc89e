//! Simulation and optimization of ultra-wideband (S+C+L) optical links with
//! hybrid distributed Raman and lumped amplification.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod interp;
pub mod link;
pub mod nli;
pub mod noise;
pub mod ode;
pub mod pso;
pub mod quadrature;
pub mod raman;
pub mod savgol;
pub mod special;
pub mod spectra;
pub mod stages;
pub mod system;
pub mod units;

pub use error::{Error, Result};
