//! Synthetic CSI for scripted scenes.
//!
//! A scene is a set of static paths, an optional water-surface path whose
//! length follows a water-level trajectory, and optional fast "mover" paths
//! (clutter). Transceiver impairments (per-sample TO/CFO phase, per-antenna
//! hardware phase, slow power drift, AWGN) are applied on top.
//!
//! Every path contributes `ρ · e^{-J2π f_j τ} · e^{-Jπ i sinθ}` to antenna `i`
//! (0-based) and subcarrier frequency `f_j = f_c + j Δf`.

mod scene;

pub use scene::SimulationSpec;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{Geometry, SystemConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::propagation_phasor;
use crate::window::CsiWindow;

/// How a water-level change maps to a change of the reflected path length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathModel {
    /// Mirror-image path length `sqrt(d² + (h_bs + h_ue + 2Δh)²)`.
    #[default]
    ExactGeometric,
    /// First-order `2 Δh sin θ`, the exact inverse of the height transform.
    PaperLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticPath {
    pub amplitude: f64,
    pub delay_s: f64,
    pub aoa_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterPath {
    /// Delay at zero level change.
    pub base_delay_s: f64,
    pub aoa_rad: f64,
    pub base_amplitude: f64,
    pub path_model: PathModel,
}

/// A fast-moving reflector: a water-like path whose length changes at a
/// constant rate, independent of the water level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mover {
    pub path: WaterPath,
    pub path_rate_mps: f64,
}

/// Piecewise-linear water level (positive = rise) over absolute time; held
/// constant past the last breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterTrajectory {
    breakpoints: Vec<(f64, f64)>,
}

impl WaterTrajectory {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        match breakpoints.first() {
            Some(&(t, h)) if t == 0.0 && h == 0.0 => {}
            _ => {
                return Err(Error::InvalidInput(
                    "trajectory must start with the breakpoint (0, 0)".into(),
                ))
            }
        }
        if breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidInput(
                "trajectory times must be strictly increasing".into(),
            ));
        }
        if breakpoints
            .iter()
            .any(|(t, h)| !(t.is_finite() && h.is_finite()))
        {
            return Err(Error::InvalidInput(
                "non-finite trajectory breakpoint".into(),
            ));
        }
        Ok(Self { breakpoints })
    }

    pub fn flat() -> Self {
        Self {
            breakpoints: vec![(0.0, 0.0)],
        }
    }

    /// Constant-rate change reaching `delta_m` at `duration_s`, continuing at
    /// the same rate until `until_s`.
    pub fn linear(delta_m: f64, duration_s: f64, until_s: f64) -> Result<Self> {
        let end = until_s.max(duration_s);
        Self::new(vec![(0.0, 0.0), (end, delta_m * end / duration_s)])
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn level(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0].0 {
            return bp[0].1;
        }
        for w in bp.windows(2) {
            let ((t0, h0), (t1, h1)) = (w[0], w[1]);
            if t <= t1 {
                return h0 + (h1 - h0) * (t - t0) / (t1 - t0);
            }
        }
        bp[bp.len() - 1].1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToCfo {
    Off,
    /// Per sample: CFO phase uniform in `[0, 2π)` and a time offset
    /// `δt ~ U[0, max_time_offset_s)` giving `φ^TO_j = 2π f_j δt`.
    RandomPerSample {
        seed: u64,
        max_time_offset_s: f64,
    },
}

/// Slow transmit-power / AGC gain `γ(t) = 1 + A sin(2π t / T + φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDrift {
    pub amplitude: f64,
    pub period_s: f64,
    pub phase_rad: f64,
}

impl PowerDrift {
    pub fn gain(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (2.0 * PI * t / self.period_s + self.phase_rad).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Awgn {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Impairments {
    pub to_cfo: ToCfo,
    pub hw_phase_per_antenna: Vec<f64>,
    pub power_drift: Option<PowerDrift>,
    pub awgn: Option<Awgn>,
}

impl Impairments {
    pub fn none() -> Self {
        Self {
            to_cfo: ToCfo::Off,
            hw_phase_per_antenna: Vec::new(),
            power_drift: None,
            awgn: None,
        }
    }

    /// Random hardware phase per antenna, as after a receiver power-up.
    pub fn random_hw_phases(n_antennas: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_antennas)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub static_paths: Vec<StaticPath>,
    pub water: Option<WaterPath>,
    pub trajectory: Option<WaterTrajectory>,
    pub movers: Vec<Mover>,
}

impl Scene {
    /// Delay of the strongest static path, which anchors Δτ.
    pub fn reference_delay(&self) -> Option<f64> {
        self.static_paths
            .iter()
            .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
            .map(|p| p.delay_s)
    }

    pub fn validate(&self) -> Result<()> {
        let reference = self.reference_delay().ok_or_else(|| {
            Error::InvalidInput("scene needs at least one static path as delay reference".into())
        })?;
        for p in &self.static_paths {
            if !(p.amplitude.is_finite() && p.amplitude > 0.0 && p.delay_s >= 0.0) {
                return Err(Error::InvalidInput(format!("invalid static path {p:?}")));
            }
            if p.aoa_rad.abs() >= PI / 2.0 {
                return Err(Error::InvalidInput(format!(
                    "static path AoA {} rad outside (-π/2, π/2)",
                    p.aoa_rad
                )));
            }
        }
        for w in self.water.iter().chain(self.movers.iter().map(|m| &m.path)) {
            if !(w.base_amplitude > 0.0 && w.base_delay_s > reference) {
                return Err(Error::InvalidInput(format!(
                    "dynamic path must be positive and later than the reference delay {reference} s: {w:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Path-length change for a surface drop of `drop_m` (positive = the water
/// falls and the reflected path lengthens).
pub fn height_to_path_delta(geometry: &Geometry, drop_m: f64, model: PathModel) -> Result<f64> {
    if drop_m == 0.0 {
        return Ok(0.0);
    }
    match model {
        PathModel::PaperLinear => Ok(2.0 * drop_m * geometry.reflection_angle().sin()),
        PathModel::ExactGeometric => {
            let heights = geometry.bs_height_m + geometry.ue_height_m;
            let moved = heights + 2.0 * drop_m;
            if moved <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "level change of {} m puts the water above the antennas",
                    -drop_m
                )));
            }
            let d = geometry.horizontal_distance_m;
            Ok(d.hypot(moved) - d.hypot(heights))
        }
    }
}

struct PathState {
    amplitude: f64,
    delay_s: f64,
    aoa_rad: f64,
}

fn dynamic_state(path: &WaterPath, extra_length_m: f64) -> PathState {
    let base_length = SPEED_OF_LIGHT * path.base_delay_s;
    let length = base_length + extra_length_m;
    PathState {
        amplitude: path.base_amplitude * base_length / length,
        delay_s: length / SPEED_OF_LIGHT,
        aoa_rad: path.aoa_rad,
    }
}

/// Synthesizes one window. `schedule` holds timestamps relative to
/// `window_start_s`; the window carries absolute scene times.
pub fn generate_csi(
    config: &SystemConfig,
    scene: &Scene,
    impairments: &Impairments,
    window_start_s: f64,
    schedule: &[f64],
) -> Result<CsiWindow> {
    config.validate()?;
    scene.validate()?;
    let (n, m, l) = (config.num_antennas, config.num_subcarriers, schedule.len());
    if !impairments.hw_phase_per_antenna.is_empty() && impairments.hw_phase_per_antenna.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} hardware phases for {n} antennas",
            impairments.hw_phase_per_antenna.len()
        )));
    }
    if let Some(drift) = &impairments.power_drift {
        if !(drift.amplitude >= 0.0 && drift.amplitude <= 0.2)
            || drift.period_s < config.window_duration_s / 2.0
        {
            return Err(Error::InvalidInput(format!(
                "power drift needs amplitude <= 0.2 and period >= window/2, got {drift:?}"
            )));
        }
    }

    // Per-sample path states.
    let mut states: Vec<Vec<PathState>> = Vec::with_capacity(l);
    for &rel in schedule {
        let t = window_start_s + rel;
        let mut paths: Vec<PathState> = scene
            .static_paths
            .iter()
            .map(|p| PathState {
                amplitude: p.amplitude,
                delay_s: p.delay_s,
                aoa_rad: p.aoa_rad,
            })
            .collect();
        if let Some(water) = &scene.water {
            let level = scene.trajectory.as_ref().map_or(0.0, |tr| tr.level(t));
            let extra = height_to_path_delta(&config.geometry, -level, water.path_model)?;
            paths.push(dynamic_state(water, extra));
        }
        for mover in &scene.movers {
            paths.push(dynamic_state(&mover.path, mover.path_rate_mps * t));
        }
        states.push(paths);
    }

    // Antenna-dependent AoA phasors, fixed per path.
    let n_paths = states.first().map_or(0, Vec::len);
    let aoa: Vec<Vec<Complex64>> = (0..n_paths)
        .map(|p| {
            let sin = states[0][p].aoa_rad.sin();
            (0..n)
                .map(|i| propagation_phasor(PI * i as f64 * sin))
                .collect()
        })
        .collect();

    // Per-sample TO/CFO draws.
    let offsets: Option<Vec<(f64, f64)>> = match impairments.to_cfo {
        ToCfo::Off => None,
        ToCfo::RandomPerSample {
            seed,
            max_time_offset_s,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(
                (0..l)
                    .map(|_| {
                        let dt = if max_time_offset_s > 0.0 {
                            rng.random_range(0.0..max_time_offset_s)
                        } else {
                            0.0
                        };
                        (dt, rng.random_range(0.0..2.0 * PI))
                    })
                    .collect(),
            )
        }
    };

    let gains: Vec<f64> = schedule
        .iter()
        .map(|&rel| {
            impairments
                .power_drift
                .as_ref()
                .map_or(1.0, |d| d.gain(window_start_s + rel))
        })
        .collect();
    let hw: Vec<Complex64> = (0..n)
        .map(|i| {
            impairments
                .hw_phase_per_antenna
                .get(i)
                .map_or(Complex64::new(1.0, 0.0), |&phi| propagation_phasor(phi))
        })
        .collect();

    let mut samples = vec![Complex64::new(0.0, 0.0); n * m * l];
    let mut per_path = vec![Complex64::new(0.0, 0.0); n_paths];
    for j in 0..m {
        let fj = config.subcarrier_freq(j);
        for k in 0..l {
            for (p, st) in states[k].iter().enumerate() {
                per_path[p] = st.amplitude * propagation_phasor(2.0 * PI * fj * st.delay_s);
            }
            let mut common = Complex64::new(gains[k], 0.0);
            if let Some(off) = &offsets {
                let (dt, cfo) = off[k];
                common *= propagation_phasor(2.0 * PI * fj * dt + cfo);
            }
            for i in 0..n {
                let sum: Complex64 = per_path.iter().zip(&aoa).map(|(d, a)| d * a[i]).sum();
                samples[(i * m + j) * l + k] = common * hw[i] * sum;
            }
        }
    }

    let window = CsiWindow::new(
        n,
        m,
        samples,
        schedule.iter().map(|t| window_start_s + t).collect(),
        config.carrier_freq_hz,
        config.subcarrier_spacing_hz,
    )?;
    Ok(match impairments.awgn {
        Some(Awgn { snr_db, seed }) => add_awgn(&window, snr_db, seed),
        None => window,
    })
}

/// Adds circular complex Gaussian noise with per-entry power
/// `P_noise = P_CSI / 10^(snr_db / 10)`, `P_CSI` the window's mean `|CSI|²`.
/// `snr_db = +∞` returns the input unchanged.
pub fn add_awgn(window: &CsiWindow, snr_db: f64, seed: u64) -> CsiWindow {
    if snr_db == f64::INFINITY {
        return window.clone();
    }
    let p_csi =
        window.samples().iter().map(|z| z.norm_sqr()).sum::<f64>() / window.samples().len() as f64;
    let sigma = (p_csi / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    window.map(|_, _, _, z| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        z + Complex64::new(re, im) * sigma
    })
}
