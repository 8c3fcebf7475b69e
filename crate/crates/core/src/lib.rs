//! Mueller-matrix polarimetry realized as quantum channels.
//!
//! * [`stokes`]: classical calculus on Stokes vectors and Mueller matrices.
//! * [`fock`]: truncated two- and three-mode Fock spaces, Stokes operators
//!   and passive linear-optics unitaries.
//! * [`channels`]: Kraus channels for retarders, diattenuators and
//!   depolarizers, with Mueller extraction.
//! * [`sim`]: shot-noise polarimetry simulation and Mueller estimation.
//! * [`formats`]: versioned JSON documents shared with the CLI.

// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod error;
pub mod fock;
pub mod formats;
pub mod quadrature;
pub mod sim;
pub mod stokes;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
