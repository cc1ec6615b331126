//! Probabilistic multiple-hypotheses map matching (PMHT-MM) for aiding an
//! inertial navigation system with gravimetric map matching.
//!
//! The crate is organised bottom-up:
//!
//! - [`geomap`]: geo-referenced scalar rasters, gated candidate lookup and the
//!   map feature variability statistic.
//! - [`assoc`]: probabilistic data association of a candidate set into one
//!   pseudo-measurement.
//! - [`pmht`]: the batch EM tracker (PDA E-step, Kalman filter + fixed-interval
//!   smoother M-step).
//! - [`inertial`]: ground truth, a planar drifting INS and the gravimeter model.
//! - [`fusion`]: the loosely coupled unscented Kalman filter that consumes map
//!   matching fixes.
//! - [`harness`]: synthetic maps, scenario runs, Monte Carlo campaigns and
//!   their CSV outputs.
//!
//! All estimation runs in a local planar East-North frame in meters.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod error;
pub mod fusion;
pub mod geomap;
pub mod harness;
pub mod inertial;
pub mod linalg;
pub mod pmht;

pub use error::{Error, Result};
