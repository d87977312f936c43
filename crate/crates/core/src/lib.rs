//! Two measures of dissipative quantum chaos for Lindblad systems.
//!
//! * Largest quantum Lyapunov exponents, estimated on pairs of Monte-Carlo
//!   wave-function trajectories that share their jump randomness
//!   ([`lyapunov`], built on [`unravel`]).
//! * Complex spacing ratio statistics of the full Lindbladian spectrum
//!   ([`csr`], built on [`liouville`]).
//!
//! [`models`] builds the integrable pair-swap chain and the disordered
//! fermion chain with pair dissipators; [`harness`] drives batch experiments
//! from TOML configs and writes CSV/JSON outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csr;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod liouville;
pub mod lyapunov;
pub mod models;
pub mod rng;
pub mod unravel;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
