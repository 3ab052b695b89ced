//! Training-data quality diagnostics from neural-network weight matrices.
//!
//! Weights are read from a bundle directory, each layer's Gram spectrum is
//! computed, and random-matrix observables (tail index, effective rank,
//! Marchenko–Pastur outliers and fit, spacing ratio) are measured. A
//! calibrated piecewise-linear map from the tail index then estimates the
//! label-noise fraction of an unseen model.

pub mod bottleneck;
pub mod calib;
pub mod eigen;
mod error;
pub mod observables;
pub mod pipeline;
pub mod rmt;
pub mod runs;
pub mod weight_io;

pub use error::{Error, ErrorClass, Result};
