//! Numerical laboratory for the linear feedback particle filter and the
//! ensemble Kalman-Bucy filter family.
//!
//! * [`linmodel`]: model parameters, seeded noise streams, truth and
//!   observation simulation.
//! * [`riccati`]: Riccati flows, the algebraic Riccati equation and the
//!   stability constants.
//! * [`kalman`]: the Kalman-Bucy filter.
//! * [`ensemble`]: finite-N particle systems and mean-field copies.
//! * [`metrics`]: error functionals, bounds, W₂ and rate fits.
//! * [`harness`]: reproducible experiments and their result files.

pub mod ensemble;
pub mod error;
pub mod harness;
pub mod kalman;
pub mod linalg;
pub mod linmodel;
pub mod metrics;
pub mod riccati;

pub use error::{Error, Result};
