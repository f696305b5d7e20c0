//! Doppler and delay evaluation grids.

use crate::config::SPEED_OF_LIGHT;
use crate::error::{Error, Result};

/// Symmetric, uniform Doppler grid with a bin at exactly 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerGrid {
    bins_hz: Vec<f64>,
}

impl DopplerGrid {
    /// `count` bins (odd) spanning `[-half_span_hz, +half_span_hz]`.
    pub fn symmetric(half_span_hz: f64, count: usize) -> Result<Self> {
        if count < 3 || count.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "Doppler bin count must be odd and >= 3, got {count}"
            )));
        }
        if !(half_span_hz.is_finite() && half_span_hz > 0.0) {
            return Err(Error::Config(format!(
                "Doppler half-span must be positive, got {half_span_hz}"
            )));
        }
        let centre = (count / 2) as i64;
        let step = half_span_hz / centre as f64;
        let bins_hz = (0..count as i64)
            .map(|i| (i - centre) as f64 * step)
            .collect();
        Ok(Self { bins_hz })
    }

    /// 257 bins over ±0.5 Hz.
    pub fn water_default() -> Self {
        Self::symmetric(0.5, 257).expect("valid default grid")
    }

    /// Arbitrary bins; must be ascending, uniform and symmetric about 0.
    pub fn from_bins(bins_hz: Vec<f64>) -> Result<Self> {
        let n = bins_hz.len();
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::Config("Doppler grid needs an odd count >= 3".into()));
        }
        let step = bins_hz[1] - bins_hz[0];
        if !(step > 0.0) {
            return Err(Error::Config("Doppler grid must be ascending".into()));
        }
        let tol = 1e-9 * step.max(bins_hz[n - 1].abs());
        for (i, b) in bins_hz.iter().enumerate() {
            let mirror = bins_hz[n - 1 - i];
            if (b + mirror).abs() > tol || (b - (bins_hz[0] + i as f64 * step)).abs() > tol {
                return Err(Error::Config(
                    "Doppler grid must be uniform and symmetric about 0".into(),
                ));
            }
        }
        let mut bins_hz = bins_hz;
        bins_hz[n / 2] = 0.0;
        Ok(Self { bins_hz })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins_hz
    }
    pub fn len(&self) -> usize {
        self.bins_hz.len()
    }
    pub fn is_empty(&self) -> bool {
        self.bins_hz.is_empty()
    }
    pub fn zero_index(&self) -> usize {
        self.bins_hz.len() / 2
    }
    /// Spacing between adjacent bins.
    pub fn resolution_hz(&self) -> f64 {
        self.bins_hz[1] - self.bins_hz[0]
    }
    pub fn max_abs_hz(&self) -> f64 {
        self.bins_hz[self.bins_hz.len() - 1]
    }
    /// Index of the bin mirrored about 0 Hz.
    pub fn mirror_index(&self, index: usize) -> usize {
        self.bins_hz.len() - 1 - index
    }
}

/// Candidate relative delays Δτ > 0 for the water path, uniform spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    bins_s: Vec<f64>,
    subcarrier_spacing_hz: f64,
}

impl DelayGrid {
    /// `oversample`× the Fourier resolution `1/(MΔf)`, covering `(0, 1/(2Δf)]`.
    pub fn for_band(
        num_subcarriers: usize,
        subcarrier_spacing_hz: f64,
        oversample: usize,
    ) -> Result<Self> {
        if num_subcarriers == 0 || oversample == 0 {
            return Err(Error::Config(
                "delay grid needs M >= 1 and oversample >= 1".into(),
            ));
        }
        let step = 1.0 / (oversample as f64 * num_subcarriers as f64 * subcarrier_spacing_hz);
        let max = 0.5 / subcarrier_spacing_hz;
        let count = ((max / step) + 1e-9).floor() as usize;
        Self::uniform(step, step, count.max(1), subcarrier_spacing_hz)
    }

    /// `count` bins starting at `first_s` with spacing `step_s`.
    pub fn uniform(
        first_s: f64,
        step_s: f64,
        count: usize,
        subcarrier_spacing_hz: f64,
    ) -> Result<Self> {
        if !(first_s > 0.0 && step_s > 0.0 && count > 0) {
            return Err(Error::Config(
                "delay grid must start above 0 with positive spacing".into(),
            ));
        }
        if !(subcarrier_spacing_hz > 0.0) {
            return Err(Error::Config("subcarrier spacing must be positive".into()));
        }
        Ok(Self {
            bins_s: (0..count).map(|n| first_s + n as f64 * step_s).collect(),
            subcarrier_spacing_hz,
        })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins_s
    }
    pub fn len(&self) -> usize {
        self.bins_s.len()
    }
    pub fn is_empty(&self) -> bool {
        self.bins_s.is_empty()
    }
    pub fn step_s(&self) -> f64 {
        if self.bins_s.len() > 1 {
            self.bins_s[1] - self.bins_s[0]
        } else {
            self.bins_s[0]
        }
    }
    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.subcarrier_spacing_hz
    }
    pub fn range_m(&self, index: usize) -> f64 {
        SPEED_OF_LIGHT * self.bins_s[index]
    }
    pub fn ranges_m(&self) -> Vec<f64> {
        self.bins_s.iter().map(|t| SPEED_OF_LIGHT * t).collect()
    }
    /// Index of the bin nearest to `delay_s`.
    pub fn nearest(&self, delay_s: f64) -> usize {
        let idx = ((delay_s - self.bins_s[0]) / self.step_s()).round();
        idx.clamp(0.0, (self.bins_s.len() - 1) as f64) as usize
    }
}
