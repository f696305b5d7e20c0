//! Beamformer weights, per-antenna water features, spatial refinement and
//! bin stabilization.

use std::collections::VecDeque;

use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::heatmap::{steering_vector, CovarianceEstimate};
use crate::preprocess::DopplerSpectrum;
use crate::PROPAGATION_SIGN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BeamformerMode {
    #[default]
    Mvdr,
    DelayAndSum,
}

impl std::str::FromStr for BeamformerMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mvdr" => Ok(Self::Mvdr),
            "das" | "delay_and_sum" | "delay-and-sum" => Ok(Self::DelayAndSum),
            other => Err(format!("unknown beamformer {other:?}")),
        }
    }
}

/// Weights with `wᴴ a(Δτ) = 1`: `R⁻¹a / (aᴴR⁻¹a)` for MVDR, `a / M` for
/// delay-and-sum.
pub fn beamformer_weights(
    cov: &CovarianceEstimate,
    delay_s: f64,
    subcarrier_spacing_hz: f64,
    mode: BeamformerMode,
) -> Result<DVector<Complex64>> {
    let m = cov.dim();
    let a = steering_vector(delay_s, m, subcarrier_spacing_hz);
    match mode {
        BeamformerMode::DelayAndSum => Ok(a / Complex64::new(m as f64, 0.0)),
        BeamformerMode::Mvdr => {
            let ria = cov.solve(&a)?;
            let denom = a.dotc(&ria);
            Ok(ria / denom.conj())
        }
    }
}

/// `Y_i = Σ_j w_j* X_{i,j}(f)` at one Doppler bin.
pub fn extract_feature(
    spectrum: &DopplerSpectrum,
    doppler_bin: usize,
    weights: &DVector<Complex64>,
    antenna: usize,
) -> Complex64 {
    weights
        .iter()
        .enumerate()
        .map(|(j, w)| w.conj() * spectrum.get(antenna, j, doppler_bin))
        .sum()
}

/// One water feature per window: a single antenna, or the spatially
/// combined value when `antenna` is `None`.
///
/// `value` is the conjugate of the beamformer output so that its phase
/// follows `+2π f_c (τ^X − τ^S)`: it decreases when the water rises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSample {
    pub window_index: usize,
    pub time_s: f64,
    pub value: Complex64,
    pub amplitude: f64,
    pub phase: f64,
    pub doppler_hz: f64,
    pub range_m: f64,
    pub aoa_deg: Option<f64>,
    pub antenna: Option<usize>,
    pub coasting: bool,
}

impl FeatureSample {
    /// Builds a sample from a raw beamformer output `Y`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_output(
        window_index: usize,
        time_s: f64,
        output: Complex64,
        doppler_hz: f64,
        range_m: f64,
        aoa_deg: Option<f64>,
        antenna: Option<usize>,
        coasting: bool,
    ) -> Self {
        let value = output.conj();
        Self {
            window_index,
            time_s,
            value,
            amplitude: value.norm(),
            phase: value.arg(),
            doppler_hz,
            range_m,
            aoa_deg,
            antenna,
            coasting,
        }
    }
}

/// Default spatial FFT length.
pub const SPATIAL_FFT_LEN: usize = 64;

/// Zero-padded FFT across antennas normalized by `N`; returns the strongest
/// bin and its angle label in degrees. The label is relative to the static
/// reference path, not an absolute AoA.
pub fn spatial_refine(features: &[Complex64], fft_len: usize) -> Result<(Complex64, f64)> {
    let n = features.len();
    if n < 2 {
        return Err(Error::SingleAntenna);
    }
    if fft_len < n {
        return Err(Error::InvalidInput(format!(
            "spatial FFT length {fft_len} is shorter than the {n} antennas"
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    buf[..n].copy_from_slice(features);
    FftPlanner::new()
        .plan_fft_forward(fft_len)
        .process(&mut buf);
    let best = (0..fft_len).fold(0, |b, k| if buf[k].norm() > buf[b].norm() { k } else { b });
    let z = buf[best] / n as f64;
    Ok((z, spatial_bin_angle_deg(best, fft_len)))
}

/// Angle of FFT bin `k`: the steering sequence `e^{-Jπ i sinθ}` peaks at the
/// bin with `sinθ = -2k/K` (signed `k`).
pub fn spatial_bin_angle_deg(bin: usize, fft_len: usize) -> f64 {
    let signed = if bin >= fft_len.div_ceil(2) {
        bin as f64 - fft_len as f64
    } else {
        bin as f64
    };
    let s = (PROPAGATION_SIGN * 2.0 * signed / fft_len as f64).clamp(-1.0, 1.0);
    s.asin().to_degrees()
}

/// Rejects outlier `(doppler, delay)` bin choices against the running
/// median of recent windows.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStabilizer {
    depth: usize,
    gate: usize,
    history: VecDeque<(usize, usize)>,
}

impl Default for BinStabilizer {
    fn default() -> Self {
        Self::new(5, 2)
    }
}

fn lower_median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

impl BinStabilizer {
    pub fn new(depth: usize, gate: usize) -> Self {
        Self {
            depth: depth.max(1),
            gate,
            history: VecDeque::new(),
        }
    }

    pub fn history(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.history.iter()
    }

    /// Median of the recent history, per coordinate.
    pub fn median(&self) -> Option<(usize, usize)> {
        if self.history.is_empty() {
            return None;
        }
        Some((
            lower_median(self.history.iter().map(|p| p.0).collect()),
            lower_median(self.history.iter().map(|p| p.1).collect()),
        ))
    }

    /// Returns the accepted pair and whether the window is coasting. The
    /// candidate always enters the history, so a persistent move is
    /// followed once it holds the majority.
    pub fn stabilize(&mut self, candidate: (usize, usize)) -> ((usize, usize), bool) {
        let out = match self.median() {
            Some(med)
                if med.0.abs_diff(candidate.0) > self.gate
                    || med.1.abs_diff(candidate.1) > self.gate =>
            {
                (med, true)
            }
            _ => (candidate, false),
        };
        self.history.push_back(candidate);
        while self.history.len() > self.depth {
            self.history.pop_front();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    use super::*;
    use crate::grid::DelayGrid;
    use crate::heatmap::{estimate_covariance, CovarianceMode};
    use crate::propagation_phasor;

    const DF: f64 = 1e6;

    #[test]
    fn identity_mvdr_is_delay_and_sum() {
        let m = 8;
        let cov = CovarianceEstimate {
            matrix: DMatrix::identity(m, m),
            loading: 0.0,
            mode: CovarianceMode::MultiAntennaSnapshots,
        };
        let w1 = beamformer_weights(&cov, 77e-9, DF, BeamformerMode::Mvdr).unwrap();
        let w2 = beamformer_weights(&cov, 77e-9, DF, BeamformerMode::DelayAndSum).unwrap();
        assert!((w1 - w2).norm() < 1e-12);
    }

    #[test]
    fn interferer_is_suppressed() {
        let m = 24;
        let grid = DelayGrid::for_band(m, DF, 4).unwrap();
        let (t0, t1) = (grid.bins()[30], grid.bins()[30 + 4 * 3]);
        let target = steering_vector(t0, m, DF);
        let interferer = steering_vector(t1, m, DF);
        let slice = DMatrix::from_columns(&[
            &target + &interferer * Complex64::new(10.0, 0.0),
            &target * Complex64::new(0.0, 1.0) - &interferer * Complex64::new(7.0, 3.0),
        ]);
        let cov = estimate_covariance(&slice, -30.0).unwrap();
        let w = beamformer_weights(&cov, t0, DF, BeamformerMode::Mvdr).unwrap();
        assert!((w.dotc(&target) - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(
            w.dotc(&interferer).norm() <= 0.1,
            "{}",
            w.dotc(&interferer).norm()
        );
    }

    #[test]
    fn spatial_broadside() {
        let y = vec![Complex64::new(0.3, -0.4); 3];
        let (z, angle) = spatial_refine(&y, SPATIAL_FFT_LEN).unwrap();
        assert_abs_diff_eq!(angle, 0.0, epsilon = 1e-12);
        assert!((z - Complex64::new(0.3, -0.4)).norm() < 1e-12);
        assert!(spatial_refine(&y[..1], SPATIAL_FFT_LEN).is_err());
    }

    #[test]
    fn spatial_steering_peak() {
        for theta_deg in [-50.0f64, -12.0, 0.0, 20.0, 41.0] {
            let s = theta_deg.to_radians().sin();
            let y: Vec<Complex64> = (0..4)
                .map(|i| propagation_phasor(PI * i as f64 * s))
                .collect();
            let (_, angle) = spatial_refine(&y, SPATIAL_FFT_LEN).unwrap();
            // One bin is 2/64 in sinθ.
            let bin_sin = 2.0 / SPATIAL_FFT_LEN as f64;
            assert!(
                (angle.to_radians().sin() - s).abs() <= bin_sin,
                "{theta_deg} -> {angle}"
            );
        }
    }

    #[test]
    fn stabilizer_examples() {
        let mut s = BinStabilizer::default();
        assert_eq!(s.stabilize((3, 8)), ((3, 8), false));

        let mut s = BinStabilizer::default();
        for p in [(10, 4), (9, 4), (11, 5), (10, 3), (10, 4)] {
            s.stabilize(p);
        }
        assert_eq!(s.median(), Some((10, 4)));
        assert_eq!(s.stabilize((25, 9)), ((10, 4), true));
        assert_eq!(s.stabilize((10, 4)), ((10, 4), false));
    }
}
