//! CSI power, mean removal and the non-uniform Doppler transform.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::DopplerGrid;
use crate::schedule::median_interval;
use crate::window::{CsiWindow, PowerWindow};
use crate::PROPAGATION_SIGN;

/// `|CSI|²` per entry. Unit-modulus factors (TO/CFO, hardware phase) cancel.
pub fn csi_power(window: &CsiWindow) -> PowerWindow {
    PowerWindow {
        n_antennas: window.n_antennas(),
        n_subcarriers: window.n_subcarriers(),
        values: window.samples().iter().map(|z| z.norm_sqr()).collect(),
        timestamps_s: window.timestamps().to_vec(),
    }
}

/// Subtracts the temporal mean of every antenna/subcarrier series.
pub fn remove_mean(power: &PowerWindow) -> PowerWindow {
    let l = power.n_samples();
    let mut values = power.values.clone();
    for series in values.chunks_mut(l) {
        let mean = series.iter().sum::<f64>() / l as f64;
        series.iter_mut().for_each(|v| *v -= mean);
    }
    PowerWindow {
        values,
        ..power.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowFn {
    #[default]
    Hamming,
    Rect,
}

impl WindowFn {
    /// Weight at normalized position `u ∈ [0, 1]` within the window.
    pub fn weight(self, u: f64) -> f64 {
        match self {
            WindowFn::Hamming => 0.54 - 0.46 * (2.0 * PI * u).cos(),
            WindowFn::Rect => 1.0,
        }
    }

    /// Weights evaluated at the sample timestamps (non-uniform aware).
    pub fn weights(self, timestamps: &[f64]) -> Vec<f64> {
        let t0 = timestamps[0];
        let span = timestamps[timestamps.len() - 1] - t0;
        timestamps
            .iter()
            .map(|t| self.weight((t - t0) / span))
            .collect()
    }
}

impl std::str::FromStr for WindowFn {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(Self::Hamming),
            "rect" | "rectangular" | "none" => Ok(Self::Rect),
            other => Err(format!("unknown window function {other:?}")),
        }
    }
}

/// Doppler spectrum per antenna and subcarrier, layout `(i * M + j) * B + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerSpectrum {
    n_antennas: usize,
    n_subcarriers: usize,
    values: Vec<Complex64>,
    grid: DopplerGrid,
}

impl DopplerSpectrum {
    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }
    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }
    pub fn grid(&self) -> &DopplerGrid {
        &self.grid
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
    pub fn get(&self, antenna: usize, subcarrier: usize, bin: usize) -> Complex64 {
        self.values[(antenna * self.n_subcarriers + subcarrier) * self.grid.len() + bin]
    }
    pub fn series(&self, antenna: usize, subcarrier: usize) -> &[Complex64] {
        let b = self.grid.len();
        let start = (antenna * self.n_subcarriers + subcarrier) * b;
        &self.values[start..start + b]
    }

    /// The `M × N` observation matrix at one Doppler bin (column per antenna).
    pub fn slice(&self, bin: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n_subcarriers, self.n_antennas, |j, i| {
            self.get(i, j, bin)
        })
    }

    /// The length-`M` subcarrier vector of one antenna at one Doppler bin.
    pub fn antenna_slice(&self, antenna: usize, bin: usize) -> DVector<Complex64> {
        DVector::from_fn(self.n_subcarriers, |j, _| self.get(antenna, j, bin))
    }
}

/// Windowed direct non-uniform DFT
/// `X(f) = Σ_k w(t_k) P_k e^{-J2πf (t_k - t_0)} / Σ_k w(t_k)`, phase
/// referenced to the first sample.
///
/// Rejects grids with bins above `1 / (2 · median Δt)`.
pub fn doppler_transform(
    power: &PowerWindow,
    grid: &DopplerGrid,
    window_fn: WindowFn,
) -> Result<DopplerSpectrum> {
    let t = power.timestamps();
    let nyquist_hz = 0.5 / median_interval(t);
    if grid.max_abs_hz() > nyquist_hz * (1.0 + 1e-12) {
        return Err(Error::AboveNyquist {
            bin_hz: grid.max_abs_hz(),
            nyquist_hz,
        });
    }
    let weights = window_fn.weights(t);
    let gain: f64 = weights.iter().sum();
    let (b, l) = (grid.len(), t.len());
    let series_count = power.n_antennas() * power.n_subcarriers();

    // Kernel rows per bin, columns per sample, weight and gain folded in.
    let mut cos = DMatrix::<f64>::zeros(b, l);
    let mut sin = DMatrix::<f64>::zeros(b, l);
    for (k, (&tk, &wk)) in t.iter().zip(&weights).enumerate() {
        let scale = wk / gain;
        for (r, &f) in grid.bins().iter().enumerate() {
            let (s, c) = (2.0 * PI * f * (tk - t[0])).sin_cos();
            cos[(r, k)] = c * scale;
            sin[(r, k)] = PROPAGATION_SIGN * s * scale;
        }
    }
    // Each series is a column of the L × (N·M) data matrix.
    let data = DMatrix::from_column_slice(l, series_count, power.values());
    let re = &cos * &data;
    let im = &sin * &data;
    let values = re
        .iter()
        .zip(im.iter())
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect();
    Ok(DopplerSpectrum {
        n_antennas: power.n_antennas(),
        n_subcarriers: power.n_subcarriers(),
        values,
        grid: grid.clone(),
    })
}
