//! Kalman phase unwrapping, phase-to-height conversion and ground-truth
//! scoring.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::wrap_phase as wrap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub q: f64,
    pub r: f64,
    pub p0: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            q: 0.01,
            r: 0.25,
            p0: 1.0,
        }
    }
}

/// Scalar state with `F = H = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub x: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl KalmanState {
    pub fn new(x0: f64, cfg: &KalmanConfig) -> Result<Self> {
        if !(cfg.q > 0.0 && cfg.r > 0.0 && cfg.p0 > 0.0) {
            return Err(Error::Config(format!(
                "Kalman Q, R and P0 must be positive, got {cfg:?}"
            )));
        }
        Ok(Self {
            x: x0,
            p: cfg.p0,
            q: cfg.q,
            r: cfg.r,
        })
    }
}

/// Diagnostics of one unwrap step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnwrapStep {
    /// The measurement placed on the branch selected by the filter,
    /// `x̂ + y`.
    pub unwrapped: f64,
    /// Raw residual `z - wrap(x̂)`.
    pub residual: f64,
    /// `ΔK ∈ {-1, 0, 1}`.
    pub correction: i8,
    /// Corrected residual `y`, always in `[-π, π]`.
    pub corrected: f64,
    pub gain: f64,
}

/// One predict/correct cycle on a wrapped measurement.
pub fn kalman_unwrap_step(state: &KalmanState, measured: f64) -> Result<(KalmanState, UnwrapStep)> {
    if !(measured.abs() <= PI) {
        return Err(Error::PhaseOutOfRange(measured));
    }
    let x_pred = state.x;
    let p_pred = state.p + state.q;
    let residual = measured - wrap(x_pred);
    let correction: i8 = if residual > PI {
        -1
    } else if residual < -PI {
        1
    } else {
        0
    };
    let corrected = residual + 2.0 * PI * correction as f64;
    let gain = p_pred / (p_pred + state.r);
    let next = KalmanState {
        x: x_pred + gain * corrected,
        p: (1.0 - gain) * p_pred,
        ..*state
    };
    Ok((
        next,
        UnwrapStep {
            unwrapped: x_pred + corrected,
            residual,
            correction,
            corrected,
            gain,
        },
    ))
}

/// Sequential unwrapper seeded with the first measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanUnwrapper {
    cfg: KalmanConfig,
    state: Option<KalmanState>,
}

impl KalmanUnwrapper {
    pub fn new(cfg: KalmanConfig) -> Result<Self> {
        KalmanState::new(0.0, &cfg)?;
        Ok(Self { cfg, state: None })
    }

    pub fn state(&self) -> Option<&KalmanState> {
        self.state.as_ref()
    }

    pub fn push(&mut self, measured: f64) -> Result<f64> {
        match &self.state {
            None => {
                if !(measured.abs() <= PI) {
                    return Err(Error::PhaseOutOfRange(measured));
                }
                self.state = Some(KalmanState::new(measured, &self.cfg)?);
                Ok(measured)
            }
            Some(s) => {
                let (next, step) = kalman_unwrap_step(s, measured)?;
                self.state = Some(next);
                Ok(step.unwrapped)
            }
        }
    }

    /// Unwraps a whole sequence with a fresh filter.
    pub fn unwrap_all(cfg: KalmanConfig, measured: &[f64]) -> Result<Vec<f64>> {
        let mut u = Self::new(cfg)?;
        measured.iter().map(|&z| u.push(z)).collect()
    }
}

/// Path-length change `λ Δφ / (2π)`.
pub fn phase_to_path_change(delta_phase: f64, wavelength_m: f64) -> f64 {
    wavelength_m * delta_phase / (2.0 * PI)
}

/// `Δh = λ/(4π) (φ_next − φ_prev) / sin θ`. Positive Δh means a longer
/// path, i.e. a falling water level.
pub fn phase_to_height(
    phase_prev: f64,
    phase_next: f64,
    wavelength_m: f64,
    theta_rad: f64,
) -> Result<f64> {
    if !(theta_rad > 0.0 && theta_rad < PI / 2.0) {
        return Err(Error::BadAngle(theta_rad));
    }
    Ok(wavelength_m / (4.0 * PI) * (phase_next - phase_prev) / theta_rad.sin())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HeightSeries {
    pub times_s: Vec<f64>,
    pub heights_m: Vec<f64>,
    pub coasting: Vec<bool>,
}

impl HeightSeries {
    pub fn new(times_s: Vec<f64>, heights_m: Vec<f64>, coasting: Vec<bool>) -> Result<Self> {
        if times_s.len() != heights_m.len() || times_s.len() != coasting.len() {
            return Err(Error::InvalidInput(
                "height series columns differ in length".into(),
            ));
        }
        if times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "height series times must increase".into(),
            ));
        }
        Ok(Self {
            times_s,
            heights_m,
            coasting,
        })
    }

    pub fn from_pairs(times_s: Vec<f64>, heights_m: Vec<f64>) -> Result<Self> {
        let n = times_s.len();
        Self::new(times_s, heights_m, vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    /// Linear interpolation; `None` outside the support.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let ts = &self.times_s;
        if ts.is_empty() || t < ts[0] || t > ts[ts.len() - 1] {
            return None;
        }
        let k = ts.partition_point(|&x| x < t);
        if ts[k] == t {
            return Some(self.heights_m[k]);
        }
        let (t0, t1) = (ts[k - 1], ts[k]);
        let (h0, h1) = (self.heights_m[k - 1], self.heights_m[k]);
        Some(h0 + (h1 - h0) * (t - t0) / (t1 - t0))
    }

    /// Mean-subtracted, then shifted so the first value is zero.
    pub fn normalized(&self) -> Self {
        if self.is_empty() {
            return self.clone();
        }
        let mean = self.heights_m.iter().sum::<f64>() / self.len() as f64;
        let first = self.heights_m[0] - mean;
        Self {
            heights_m: self.heights_m.iter().map(|h| h - mean - first).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub mean_abs_error_m: f64,
    /// Standard deviation of the absolute errors.
    pub std_m: f64,
    /// Normalized estimate interpolated onto the overlapping truth times.
    pub aligned: HeightSeries,
    /// Normalized truth at the same times.
    pub truth: HeightSeries,
}

/// Interpolates the estimate onto the truth timestamps inside the common
/// support, normalizes both (mean removal, then zero start) and scores the
/// difference.
pub fn align_and_score(est: &HeightSeries, truth: &HeightSeries) -> Result<Score> {
    let mut times = Vec::new();
    let mut estimated = Vec::new();
    let mut reference = Vec::new();
    for (&t, &h) in truth.times_s.iter().zip(&truth.heights_m) {
        if let Some(v) = est.interpolate(t) {
            times.push(t);
            estimated.push(v);
            reference.push(h);
        }
    }
    if times.is_empty() {
        return Err(Error::NoOverlap);
    }
    let k = times.len();
    let aligned = HeightSeries::new(times.clone(), estimated, vec![false; k])?.normalized();
    let truth = HeightSeries::new(times, reference, vec![false; k])?.normalized();
    let errors: Vec<f64> = aligned
        .heights_m
        .iter()
        .zip(&truth.heights_m)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let n = errors.len() as f64;
    let mae = errors.iter().sum::<f64>() / n;
    let std = (errors.iter().map(|x| (x - mae).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Score {
        mean_abs_error_m: mae,
        std_m: std,
        aligned,
        truth,
    })
}
