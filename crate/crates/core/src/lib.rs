//! Water-level sensing from bi-static Channel State Information.
//!
//! The crate turns windows of CSI (antennas × subcarriers × time, sampled on
//! a non-uniform session schedule) into water-level change estimates:
//!
//! 1. [`preprocess`]: CSI power removes the unsynchronized-clock phase
//!    offsets, the temporal mean is subtracted and a windowed non-uniform
//!    Doppler transform is taken per antenna/subcarrier.
//! 2. [`heatmap`]: per Doppler bin, an MVDR delay spectrum across subcarriers
//!    builds the Doppler–range heatmap.
//! 3. [`detect`]: a range-averaged Doppler profile is screened with CA-CFAR.
//! 4. [`features`]: beamformer weights at the detected cell combine the
//!    subcarriers into one complex feature per antenna (optionally refined by
//!    a spatial FFT).
//! 5. [`track`]: Kalman phase unwrapping and the geometric phase-to-height
//!    transform.
//!
//! [`simulator`] synthesizes CSI for scripted scenes and is the ground truth
//! used throughout the tests; [`io`] and [`pipeline`] provide file formats,
//! stream ingestion and orchestration.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detect;
pub mod error;
pub mod features;
pub mod grid;
pub mod heatmap;
pub mod io;
pub mod keyvalue;
pub mod pipeline;
pub mod preprocess;
pub mod schedule;
pub mod simulator;
pub mod track;
pub mod window;

pub use config::{Geometry, SystemConfig, SPEED_OF_LIGHT};
pub use error::{Error, Result};
pub use grid::{DelayGrid, DopplerGrid};
pub use window::{CsiWindow, PowerWindow};

use num_complex::Complex64;

/// Sign of the imaginary exponent used for every propagation term: the
/// simulator's delay/AoA phases, the subcarrier steering vector and the
/// Doppler transform kernel all use `exp(PROPAGATION_SIGN * J * phase)`.
pub const PROPAGATION_SIGN: f64 = -1.0;

/// `exp(PROPAGATION_SIGN * J * phase)`.
#[inline]
pub fn propagation_phasor(phase: f64) -> Complex64 {
    let (s, c) = (PROPAGATION_SIGN * phase).sin_cos();
    Complex64::new(c, s)
}

/// Wraps an angle into `[-π, π)`.
#[inline]
pub fn wrap_phase(phase: f64) -> f64 {
    use std::f64::consts::PI;
    (phase + PI).rem_euclid(2.0 * PI) - PI
}
