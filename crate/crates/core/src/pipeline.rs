//! Window-by-window orchestration: preprocess → heatmap → detect →
//! features → track.
//!
//! The per-window DSP (Doppler transform, heatmap, CFAR) runs in parallel
//! over a batch of windows; bin stabilization, feature extraction and
//! Kalman tracking then run sequentially in window order, so outputs are
//! deterministic regardless of thread count.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::SystemConfig;
use crate::detect::{detect, CfarConfig, DetectionResult};
use crate::error::{Error, Result};
use crate::features::{
    beamformer_weights, extract_feature, spatial_refine, BeamformerMode, BinStabilizer,
    FeatureSample, SPATIAL_FFT_LEN,
};
use crate::grid::{DelayGrid, DopplerGrid};
use crate::heatmap::{build_heatmap, estimate_covariance, DopplerRangeHeatmap, DEFAULT_LOADING_DB};
use crate::io::{DetectionRecord, HeightRecord};
use crate::keyvalue::KeyValues;
use crate::preprocess::{csi_power, doppler_transform, remove_mean, DopplerSpectrum, WindowFn};
use crate::track::{phase_to_height, HeightSeries, KalmanConfig, KalmanUnwrapper};
use crate::window::CsiWindow;

pub(crate) const PIPELINE_KEYS: &[&str] = &[
    "doppler_half_span_hz",
    "doppler_bins",
    "window_fn",
    "loading_db",
    "delay_oversample",
    "cfar_reference_cells",
    "cfar_guard_cells",
    "cfar_threshold_factor",
    "beamformer",
    "spatial_refine",
    "spatial_fft_len",
    "stabilizer_depth",
    "stabilizer_gate",
    "kalman_q",
    "kalman_r",
    "kalman_p0",
    "reflection_angle_deg",
    "track_undetected",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub doppler_half_span_hz: f64,
    pub doppler_bins: usize,
    pub window_fn: WindowFn,
    pub loading_db: f64,
    pub delay_oversample: usize,
    pub cfar: CfarConfig,
    pub beamformer: BeamformerMode,
    pub spatial_refine: bool,
    pub spatial_fft_len: usize,
    pub stabilizer_depth: usize,
    pub stabilizer_gate: usize,
    pub kalman: KalmanConfig,
    /// Fixed reflection angle; the geometry's angle is used when absent.
    pub reflection_angle_deg: Option<f64>,
    /// Keep tracking through windows CFAR rejects. The candidate cell is the
    /// maximum of the heatmap summed over the last `stabilizer_depth`
    /// windows; such windows are marked coasting and logged as not detected.
    pub track_undetected: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            doppler_half_span_hz: 0.5,
            doppler_bins: 257,
            window_fn: WindowFn::Hamming,
            loading_db: DEFAULT_LOADING_DB,
            delay_oversample: 4,
            cfar: CfarConfig::default(),
            beamformer: BeamformerMode::Mvdr,
            spatial_refine: false,
            spatial_fft_len: SPATIAL_FFT_LEN,
            stabilizer_depth: 5,
            stabilizer_gate: 2,
            kalman: KalmanConfig::default(),
            reflection_angle_deg: None,
            track_undetected: true,
        }
    }
}

fn parse_switch(entry: &crate::keyvalue::Entry) -> Result<bool> {
    match entry.value.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(entry.error(format!("`{}` expects on/off", entry.key))),
    }
}

impl PipelineConfig {
    pub fn known_keys() -> &'static [&'static str] {
        PIPELINE_KEYS
    }

    /// Applies any pipeline keys present in `kv` on top of `self`.
    pub fn apply(mut self, kv: &KeyValues) -> Result<Self> {
        macro_rules! set {
            ($($field:ident).+, $key:literal) => {
                if let Some(v) = kv.parsed($key)? {
                    self.$($field).+ = v;
                }
            };
        }
        set!(doppler_half_span_hz, "doppler_half_span_hz");
        set!(doppler_bins, "doppler_bins");
        set!(loading_db, "loading_db");
        set!(delay_oversample, "delay_oversample");
        set!(cfar.reference_cells, "cfar_reference_cells");
        set!(cfar.guard_cells, "cfar_guard_cells");
        set!(cfar.threshold_factor, "cfar_threshold_factor");
        set!(spatial_fft_len, "spatial_fft_len");
        set!(stabilizer_depth, "stabilizer_depth");
        set!(stabilizer_gate, "stabilizer_gate");
        set!(kalman.q, "kalman_q");
        set!(kalman.r, "kalman_r");
        set!(kalman.p0, "kalman_p0");
        for (key, target) in [("window_fn", 0), ("beamformer", 1)] {
            if let Some(e) = kv.get(key) {
                match target {
                    0 => self.window_fn = e.value.parse().map_err(|m| e.error(m))?,
                    _ => self.beamformer = e.value.parse().map_err(|m| e.error(m))?,
                }
            }
        }
        if let Some(e) = kv.get("spatial_refine") {
            self.spatial_refine = parse_switch(e)?;
        }
        if let Some(e) = kv.get("track_undetected") {
            self.track_undetected = parse_switch(e)?;
        }
        if let Some(e) = kv.get("reflection_angle_deg") {
            self.reflection_angle_deg = match e.value.as_str() {
                "geometry" | "auto" => None,
                _ => Some(e.parse()?),
            };
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfar.validate()?;
        DopplerGrid::symmetric(self.doppler_half_span_hz, self.doppler_bins)?;
        if self.delay_oversample == 0 {
            return Err(Error::Config("delay_oversample must be >= 1".into()));
        }
        if self.loading_db.is_nan() {
            return Err(Error::Config("loading_db must be a number".into()));
        }
        if let Some(a) = self.reflection_angle_deg {
            if !(a > 0.0 && a < 90.0) {
                return Err(Error::Config(format!(
                    "reflection_angle_deg must lie in (0, 90), got {a}"
                )));
            }
        }
        KalmanUnwrapper::new(self.kalman)?;
        Ok(())
    }
}

/// Result of the parallel per-window stage.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub window_index: usize,
    pub start_time_s: f64,
    pub spectrum: DopplerSpectrum,
    pub heatmap: DopplerRangeHeatmap,
    pub detection: DetectionResult,
}

/// Everything the pipeline produced for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub detection: DetectionRecord,
    pub features: Vec<FeatureSample>,
    pub heights: Vec<HeightRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineReport {
    pub detections: Vec<DetectionRecord>,
    pub features: Vec<FeatureSample>,
    pub heights: Vec<HeightRecord>,
    /// `(window_index, message)` for windows that failed and were skipped.
    pub failures: Vec<(usize, String)>,
}

impl PipelineReport {
    fn absorb(&mut self, r: WindowReport) {
        self.detections.push(r.detection);
        self.features.extend(r.features);
        self.heights.extend(r.heights);
    }

    /// Level-change series of one stream (`None` = spatially combined).
    pub fn level_series(&self, antenna: Option<usize>) -> Result<HeightSeries> {
        let rows: Vec<&HeightRecord> = self
            .heights
            .iter()
            .filter(|h| h.antenna == antenna)
            .collect();
        HeightSeries::new(
            rows.iter().map(|h| h.time_s).collect(),
            rows.iter().map(|h| h.level_change_m).collect(),
            rows.iter().map(|h| h.coasting).collect(),
        )
    }

    /// Median across streams per window.
    pub fn median_level_series(&self) -> Result<HeightSeries> {
        let mut times: Vec<f64> = Vec::new();
        let mut heights = Vec::new();
        for h in &self.heights {
            if times.last() != Some(&h.time_s) {
                times.push(h.time_s);
                heights.push(h.level_change_median_m);
            }
        }
        let n = times.len();
        HeightSeries::new(times, heights, vec![false; n])
    }

    /// Distinct stream labels in first-seen order.
    pub fn streams(&self) -> Vec<Option<usize>> {
        let mut out = Vec::new();
        for h in &self.heights {
            if !out.contains(&h.antenna) {
                out.push(h.antenna);
            }
        }
        out
    }
}

struct Stream {
    label: Option<usize>,
    unwrapper: KalmanUnwrapper,
    first_phase: Option<f64>,
}

/// Per-stream Kalman unwrapping and phase-to-height conversion. Streams are
/// keyed by the feature's antenna label and created on first sight.
pub struct HeightTracker {
    kalman: KalmanConfig,
    wavelength_m: f64,
    theta: f64,
    streams: Vec<Stream>,
}

impl HeightTracker {
    pub fn new(kalman: KalmanConfig, wavelength_m: f64, theta_rad: f64) -> Result<Self> {
        KalmanUnwrapper::new(kalman)?;
        if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
            return Err(Error::Config(format!(
                "wavelength must be positive, got {wavelength_m}"
            )));
        }
        Ok(Self {
            kalman,
            wavelength_m,
            theta: theta_rad,
            streams: Vec::new(),
        })
    }

    /// Tracks the features of one window and returns one height per feature,
    /// each carrying the median level change over the window's streams.
    pub fn push(&mut self, features: &[FeatureSample]) -> Result<Vec<HeightRecord>> {
        let mut heights = Vec::with_capacity(features.len());
        for f in features {
            let idx = match self.streams.iter().position(|s| s.label == f.antenna) {
                Some(idx) => idx,
                None => {
                    self.streams.push(Stream {
                        label: f.antenna,
                        unwrapper: KalmanUnwrapper::new(self.kalman)?,
                        first_phase: None,
                    });
                    self.streams.len() - 1
                }
            };
            let stream = &mut self.streams[idx];
            let phase = stream.unwrapper.push(f.phase.clamp(-PI, PI))?;
            let first = *stream.first_phase.get_or_insert(phase);
            let delta_h = phase_to_height(first, phase, self.wavelength_m, self.theta)?;
            heights.push(HeightRecord {
                window_index: f.window_index,
                time_s: f.time_s,
                antenna: f.antenna,
                phase_unwrapped_rad: phase,
                delta_h_m: delta_h,
                level_change_m: -delta_h,
                level_change_median_m: 0.0,
                coasting: f.coasting,
            });
        }
        if !heights.is_empty() {
            let med = median(heights.iter().map(|h| h.level_change_m).collect());
            heights
                .iter_mut()
                .for_each(|h| h.level_change_median_m = med);
        }
        Ok(heights)
    }

    /// Tracks a whole feature log, grouping consecutive rows by window.
    pub fn track_all(&mut self, features: &[FeatureSample]) -> Result<Vec<HeightRecord>> {
        let mut out = Vec::with_capacity(features.len());
        for group in features.chunk_by(|a, b| a.window_index == b.window_index) {
            out.extend(self.push(group)?);
        }
        Ok(out)
    }
}

/// Stateful pipeline for one sequence of windows.
pub struct Pipeline {
    system: SystemConfig,
    cfg: PipelineConfig,
    doppler: DopplerGrid,
    delays: DelayGrid,
    theta: f64,
    stabilizer: BinStabilizer,
    tracker: HeightTracker,
    /// Heatmaps of the last `stabilizer_depth` windows.
    recent: VecDeque<Vec<f64>>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl Pipeline {
    pub fn new(system: SystemConfig, cfg: PipelineConfig) -> Result<Self> {
        system.validate()?;
        cfg.validate()?;
        let doppler = DopplerGrid::symmetric(cfg.doppler_half_span_hz, cfg.doppler_bins)?;
        let delays = DelayGrid::for_band(
            system.num_subcarriers,
            system.subcarrier_spacing_hz,
            cfg.delay_oversample,
        )?;
        let theta = match cfg.reflection_angle_deg {
            Some(deg) => deg.to_radians(),
            None => system.geometry.reflection_angle(),
        };
        let stabilizer = BinStabilizer::new(cfg.stabilizer_depth, cfg.stabilizer_gate);
        let tracker = HeightTracker::new(cfg.kalman, system.wavelength(), theta)?;
        Ok(Self {
            system,
            cfg,
            doppler,
            delays,
            theta,
            stabilizer,
            tracker,
            recent: VecDeque::new(),
        })
    }

    pub fn system(&self) -> &SystemConfig {
        &self.system
    }
    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }
    pub fn doppler_grid(&self) -> &DopplerGrid {
        &self.doppler
    }
    pub fn delay_grid(&self) -> &DelayGrid {
        &self.delays
    }
    pub fn reflection_angle(&self) -> f64 {
        self.theta
    }

    /// Stateless per-window stage: Doppler spectrum, heatmap and CFAR.
    pub fn analyze(&self, window_index: usize, window: &CsiWindow) -> Result<WindowAnalysis> {
        let (n, m) = (self.system.num_antennas, self.system.num_subcarriers);
        if window.n_antennas() != n || window.n_subcarriers() != m {
            return Err(Error::InvalidInput(format!(
                "window {window_index} is {}×{} (antennas × subcarriers), configuration expects {n}×{m}",
                window.n_antennas(),
                window.n_subcarriers()
            )));
        }
        let power = remove_mean(&csi_power(window));
        let spectrum = doppler_transform(&power, &self.doppler, self.cfg.window_fn)?;
        let heatmap = build_heatmap(&spectrum, &self.delays, self.cfg.loading_db)?;
        let detection = detect(&heatmap, &self.cfg.cfar)?;
        Ok(WindowAnalysis {
            window_index,
            start_time_s: window.start_time_s(),
            spectrum,
            heatmap,
            detection,
        })
    }

    /// Sequential stage: bin stabilization, features and tracking.
    pub fn finish(&mut self, a: &WindowAnalysis) -> Result<WindowReport> {
        let det = &a.detection;
        let peak = det
            .chosen_cell
            .and_then(|(row, _)| det.peaks.iter().find(|p| p.row == row).copied());
        let detection = DetectionRecord {
            window_index: a.window_index,
            detected: det.detected,
            doppler_hz: det.chosen_cell.map(|(row, _)| a.heatmap.doppler_hz(row)),
            range_m: det.chosen_cell.map(|(_, col)| self.delays.range_m(col)),
            power: peak.map(|p| p.power),
            threshold: peak.map(|p| p.threshold),
        };
        self.recent.push_back(a.heatmap.power().to_vec());
        while self.recent.len() > self.cfg.stabilizer_depth.max(1) {
            self.recent.pop_front();
        }
        let candidate = match det.chosen_cell {
            Some(cell) => Some(cell),
            None if self.cfg.track_undetected => self.recent_argmax(a.heatmap.n_cols()),
            None => None,
        };
        let Some((row, col)) = candidate else {
            return Ok(WindowReport {
                detection,
                features: Vec::new(),
                heights: Vec::new(),
            });
        };
        let ((bin, col), held) = self
            .stabilizer
            .stabilize((a.heatmap.doppler_index(row), col));
        let coasting = held || !det.detected;
        let doppler_hz = self.doppler.bins()[bin];
        let range_m = self.delays.range_m(col);
        let delay = self.delays.bins()[col];
        let cov = estimate_covariance(&a.spectrum.slice(bin), self.cfg.loading_db)?;
        let df = self.system.subcarrier_spacing_hz;
        let weights = match beamformer_weights(&cov, delay, df, self.cfg.beamformer) {
            Ok(w) => w,
            Err(e) => {
                log::warn!(
                    "window {}: {e}; falling back to delay-and-sum",
                    a.window_index
                );
                beamformer_weights(&cov, delay, df, BeamformerMode::DelayAndSum)?
            }
        };
        let outputs: Vec<Complex64> = (0..a.spectrum.n_antennas())
            .map(|i| extract_feature(&a.spectrum, bin, &weights, i))
            .collect();

        let mut features = Vec::new();
        if self.cfg.spatial_refine && outputs.len() >= 2 {
            let (z, aoa) = spatial_refine(&outputs, self.cfg.spatial_fft_len)?;
            features.push(FeatureSample::from_output(
                a.window_index,
                a.start_time_s,
                z,
                doppler_hz,
                range_m,
                Some(aoa),
                None,
                coasting,
            ));
        } else {
            for (i, y) in outputs.iter().enumerate() {
                features.push(FeatureSample::from_output(
                    a.window_index,
                    a.start_time_s,
                    *y,
                    doppler_hz,
                    range_m,
                    None,
                    Some(i),
                    coasting,
                ));
            }
        }

        let heights = self.tracker.push(&features)?;
        Ok(WindowReport {
            detection,
            features,
            heights,
        })
    }

    /// Strongest cell of the summed recent heatmaps, if any power is left.
    /// Water cells persist across windows while noise maxima wander.
    fn recent_argmax(&self, n_cols: usize) -> Option<(usize, usize)> {
        let len = self.recent.back()?.len();
        let sum: Vec<f64> = (0..len)
            .map(|k| {
                self.recent
                    .iter()
                    .filter(|h| h.len() == len)
                    .map(|h| h[k])
                    .sum()
            })
            .collect();
        let best = (0..len).fold(0, |b, k| if sum[k] > sum[b] { k } else { b });
        (sum[best] > 0.0).then_some((best / n_cols, best % n_cols))
    }

    /// Both stages for a single window.
    pub fn process_window(
        &mut self,
        window_index: usize,
        window: &CsiWindow,
    ) -> Result<WindowReport> {
        let a = self.analyze(window_index, window)?;
        self.finish(&a)
    }

    /// Processes windows in batches: analysis in parallel, then the
    /// sequential stage in input order. Failing windows are logged, recorded
    /// and skipped.
    pub fn run<I>(&mut self, windows: I) -> PipelineReport
    where
        I: IntoIterator<Item = (usize, Result<CsiWindow>)>,
    {
        let batch_size = 2 * rayon::current_num_threads().max(1);
        let mut report = PipelineReport::default();
        let mut iter = windows.into_iter().peekable();
        while iter.peek().is_some() {
            let batch: Vec<(usize, Result<CsiWindow>)> = iter.by_ref().take(batch_size).collect();
            let analyses: Vec<(usize, Result<WindowAnalysis>)> = batch
                .into_par_iter()
                .map(|(idx, w)| (idx, w.and_then(|w| self.analyze(idx, &w))))
                .collect();
            for (idx, a) in analyses {
                match a.and_then(|a| self.finish(&a)) {
                    Ok(r) => report.absorb(r),
                    Err(e) => {
                        log::error!("window {idx}: {e}");
                        report.failures.push((idx, e.to_string()));
                    }
                }
            }
        }
        report
    }
}

/// Runs a fresh pipeline over the windows of a simulation spec.
pub fn run_simulation(
    spec: &crate::simulator::SimulationSpec,
    cfg: PipelineConfig,
) -> Result<PipelineReport> {
    let mut pipeline = Pipeline::new(spec.system.clone(), cfg)?;
    Ok(pipeline.run((0..spec.num_windows).map(|i| (i, spec.simulate_window(i)))))
}

/// Ground-truth level at each window start of a simulation.
pub fn simulation_truth(spec: &crate::simulator::SimulationSpec) -> Result<HeightSeries> {
    let times: Vec<f64> = (0..spec.num_windows)
        .map(|i| spec.window_start(i))
        .collect();
    let heights = times.iter().map(|&t| spec.level_at(t)).collect();
    HeightSeries::from_pairs(times, heights)
}
