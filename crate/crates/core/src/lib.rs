//! Affine frequency division multiplexing (AFDM) over doubly selective
//! channels with GCE-BEM assisted MMSE channel estimation.
//!
//! The crate is organised bottom-up:
//!
//! - [`transforms`]: chirp diagonals and the DAFT / IDAFT.
//! - [`channel`]: Jakes multipath realizations, the time-domain channel
//!   matrix with chirp-periodic prefix, and channel statistics.
//! - [`bem`]: the generalized complex-exponential basis expansion model.
//! - [`frame`]: the embedded two-pilot frame and its observation window.
//! - [`estimator`]: pilot dictionary, covariance set and the MMSE
//!   coefficient estimator with its closed-form NMSE.
//! - [`detector`]: pilot cancellation, MMSE equalization, SINR and BER
//!   analysis.
//! - [`harness`]: seeded Monte Carlo trials, sweeps, benchmarks and export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bem;
pub mod channel;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod frame;
pub mod harness;
pub mod linalg;
pub mod special;
pub mod transforms;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
