//! CSI and power tensors for one time window.
//!
//! Timestamps are in seconds on any common clock (the simulator uses the
//! scene clock); a window starts at its first sample.
//!
//! Storage is flat and time-minor: entry `(antenna i, subcarrier j, time k)`
//! lives at `(i * M + j) * L + k`, all indices 0-based (the 1-based `i, j, k`
//! of the channel model map to `i - 1, j - 1, k - 1`).

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsiWindow {
    n_antennas: usize,
    n_subcarriers: usize,
    samples: Vec<Complex64>,
    timestamps_s: Vec<f64>,
    pub carrier_freq_hz: f64,
    pub subcarrier_spacing_hz: f64,
}

fn check_timestamps(t: &[f64]) -> Result<()> {
    if t.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a window needs at least 2 samples, got {}",
            t.len()
        )));
    }
    if let Some(k) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(format!(
            "timestamps must be strictly increasing (index {})",
            k + 1
        )));
    }
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite timestamp".into()));
    }
    Ok(())
}

impl CsiWindow {
    pub fn new(
        n_antennas: usize,
        n_subcarriers: usize,
        samples: Vec<Complex64>,
        timestamps_s: Vec<f64>,
        carrier_freq_hz: f64,
        subcarrier_spacing_hz: f64,
    ) -> Result<Self> {
        check_timestamps(&timestamps_s)?;
        if n_antennas == 0 || n_subcarriers == 0 {
            return Err(Error::InvalidInput(
                "empty antenna or subcarrier dimension".into(),
            ));
        }
        let expected = n_antennas * n_subcarriers * timestamps_s.len();
        if samples.len() != expected {
            return Err(Error::InvalidInput(format!(
                "tensor has {} entries, expected {n_antennas}×{n_subcarriers}×{} = {expected}",
                samples.len(),
                timestamps_s.len()
            )));
        }
        if samples
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::InvalidInput("non-finite CSI entry".into()));
        }
        Ok(Self {
            n_antennas,
            n_subcarriers,
            samples,
            timestamps_s,
            carrier_freq_hz,
            subcarrier_spacing_hz,
        })
    }

    /// Time of the first sample; transforms reference phases to it.
    pub fn start_time_s(&self) -> f64 {
        self.timestamps_s[0]
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }
    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }
    pub fn n_samples(&self) -> usize {
        self.timestamps_s.len()
    }
    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps_s
    }
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Time series for one antenna/subcarrier pair.
    pub fn series(&self, antenna: usize, subcarrier: usize) -> &[Complex64] {
        let l = self.n_samples();
        let start = (antenna * self.n_subcarriers + subcarrier) * l;
        &self.samples[start..start + l]
    }

    pub fn get(&self, antenna: usize, subcarrier: usize, k: usize) -> Complex64 {
        self.series(antenna, subcarrier)[k]
    }

    /// Applies `f` to every entry; the result must stay finite.
    pub fn map(&self, mut f: impl FnMut(usize, usize, usize, Complex64) -> Complex64) -> Self {
        let l = self.n_samples();
        let m = self.n_subcarriers;
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(idx, &z)| f(idx / (m * l), (idx / l) % m, idx % l, z))
            .collect();
        Self {
            samples,
            ..self.clone()
        }
    }

    /// Rounds every entry to the nearest `f32`, the file payload precision.
    pub fn quantized_f32(&self) -> Self {
        self.map(|_, _, _, z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64))
    }
}

/// Real-valued tensor with the same layout as [`CsiWindow`].
#[derive(Debug, Clone, PartialEq)]
pub struct PowerWindow {
    pub(crate) n_antennas: usize,
    pub(crate) n_subcarriers: usize,
    pub(crate) values: Vec<f64>,
    pub(crate) timestamps_s: Vec<f64>,
}

impl PowerWindow {
    pub fn new(
        n_antennas: usize,
        n_subcarriers: usize,
        values: Vec<f64>,
        timestamps_s: Vec<f64>,
    ) -> Result<Self> {
        check_timestamps(&timestamps_s)?;
        if values.len() != n_antennas * n_subcarriers * timestamps_s.len() {
            return Err(Error::InvalidInput("power tensor size mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite power entry".into()));
        }
        Ok(Self {
            n_antennas,
            n_subcarriers,
            values,
            timestamps_s,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }
    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }
    pub fn n_samples(&self) -> usize {
        self.timestamps_s.len()
    }
    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps_s
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn series(&self, antenna: usize, subcarrier: usize) -> &[f64] {
        let l = self.n_samples();
        let start = (antenna * self.n_subcarriers + subcarrier) * l;
        &self.values[start..start + l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_time_minor() {
        let samples: Vec<Complex64> = (0..2 * 3 * 4)
            .map(|x| Complex64::new(x as f64, 0.0))
            .collect();
        let w = CsiWindow::new(2, 3, samples, vec![0.0, 1.0, 2.0, 3.0], 1e9, 1e6).unwrap();
        assert_eq!(w.get(1, 2, 3).re, ((1 * 3 + 2) * 4 + 3) as f64);
        let mapped = w.map(|i, j, k, _| Complex64::new((i * 100 + j * 10 + k) as f64, 0.0));
        assert_eq!(mapped.get(1, 2, 3).re, 123.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let z = vec![Complex64::new(1.0, 0.0); 4];
        assert!(CsiWindow::new(1, 2, z.clone(), vec![0.0, 1.0], 1e9, 1e6).is_ok());
        assert!(CsiWindow::new(1, 3, z.clone(), vec![0.0, 1.0], 1e9, 1e6).is_err());
        assert!(CsiWindow::new(1, 2, z.clone(), vec![1.0, 1.0], 1e9, 1e6).is_err());
        assert!(CsiWindow::new(1, 4, z.clone(), vec![0.0], 1e9, 1e6).is_err());
        let mut bad = z;
        bad[0].re = f64::NAN;
        assert!(CsiWindow::new(1, 2, bad, vec![0.0, 1.0], 1e9, 1e6).is_err());
    }
}
