//! Simulator-driven checks of the DSP chain: power expansion, Doppler
//! concentration, heatmap peaks and feature phase behaviour.

use std::f64::consts::PI;

use num_complex::Complex64;
use watersense::detect::doppler_profile;
use watersense::features::{beamformer_weights, extract_feature, BeamformerMode};
use watersense::heatmap::{
    build_heatmap, estimate_covariance, steering_vector, DEFAULT_LOADING_DB,
};
use watersense::pipeline::{run_simulation, Pipeline, PipelineConfig};
use watersense::preprocess::{
    csi_power, doppler_transform, remove_mean, DopplerSpectrum, WindowFn,
};
use watersense::schedule::make_sampling_schedule;
use watersense::simulator::{
    generate_csi, Impairments, PathModel, Scene, SimulationSpec, StaticPath, WaterPath,
};
use watersense::{wrap_phase, DelayGrid, DopplerGrid, PowerWindow, SystemConfig, SPEED_OF_LIGHT};

const EXCESS: f64 = 150e-9;

/// One contiguous session covering the window at 2 Hz: no session comb, so
/// spectral peaks are not replicated at multiples of the session period.
fn contiguous(mut system: SystemConfig) -> SystemConfig {
    system.session_duration_s = system.window_duration_s - 1.0;
    system.gap_duration_s = 1.0;
    system.intra_session_rate_hz = 2.0;
    system
}

fn clean_lab(system: SystemConfig, rise_m: f64) -> SimulationSpec {
    let mut spec =
        SimulationSpec::lab(system, rise_m, 480.0, PathModel::PaperLinear, EXCESS).unwrap();
    spec.to_cfo = false;
    spec.hw_phase = false;
    spec
}

/// `f^D = v f_c / c` for the lab rise.
fn water_doppler(system: &SystemConfig, rise_m: f64) -> f64 {
    let path_rate = 2.0 * rise_m / 480.0 * system.geometry.reflection_angle().sin();
    path_rate * system.carrier_freq_hz / SPEED_OF_LIGHT
}

fn spectrum_of(spec: &SimulationSpec, grid: &DopplerGrid) -> DopplerSpectrum {
    let w = spec.simulate_window(0).unwrap();
    doppler_transform(&remove_mean(&csi_power(&w)), grid, WindowFn::Hamming).unwrap()
}

#[test]
fn power_matches_two_path_expansion() {
    let system = SystemConfig::lte_lab();
    let (a, b) = (1.0, 0.3);
    let (tau_s, tau_x) = (20e-9, 170e-9);
    let (th_s, th_x) = (0.0f64, 20f64.to_radians());
    let scene = Scene {
        static_paths: vec![StaticPath {
            amplitude: a,
            delay_s: tau_s,
            aoa_rad: th_s,
        }],
        water: Some(WaterPath {
            base_delay_s: tau_x,
            aoa_rad: th_x,
            base_amplitude: b,
            path_model: PathModel::PaperLinear,
        }),
        trajectory: None,
        movers: Vec::new(),
    };
    let w = generate_csi(&system, &scene, &Impairments::none(), 0.0, &[0.0, 0.5, 1.0]).unwrap();
    let p = csi_power(&w);
    for i in 0..3 {
        for j in 0..system.num_subcarriers {
            let f = system.subcarrier_freq(j);
            let dphi = 2.0 * PI * f * (tau_x - tau_s) + PI * i as f64 * (th_x.sin() - th_s.sin());
            let want = a * a + b * b + 2.0 * a * b * dphi.cos();
            for &v in p.series(i, j) {
                assert!(
                    (v - want).abs() <= 1e-9 * want,
                    "i={i} j={j}: {v} vs {want}"
                );
            }
        }
    }
}

#[test]
fn doppler_energy_concentrates_at_water_doppler() {
    let system = contiguous(SystemConfig::mmwave_lab());
    let spec = clean_lab(system.clone(), 0.035);
    let grid = DopplerGrid::water_default();
    let x = spectrum_of(&spec, &grid);
    let fd = water_doppler(&system, 0.035);
    let target = grid
        .bins()
        .iter()
        .position(|&f| (f - fd).abs() <= grid.resolution_hz() / 2.0)
        .unwrap();

    let energy = |bin: usize| -> f64 {
        (0..x.n_subcarriers())
            .map(|j| x.get(0, j, bin).norm_sqr())
            .sum()
    };
    let positive: f64 = (grid.zero_index() + 1..grid.len()).map(energy).sum();
    let near: f64 = (target - 1..=target + 1).map(energy).sum();
    assert!(near / positive >= 0.8, "fraction {}", near / positive);
}

#[test]
fn heatmap_peak_at_true_cell() {
    let system = contiguous(SystemConfig::mmwave_lab());
    let spec = clean_lab(system.clone(), 0.035);
    let grid = DopplerGrid::water_default();
    let delays =
        DelayGrid::for_band(system.num_subcarriers, system.subcarrier_spacing_hz, 4).unwrap();
    let map = build_heatmap(&spectrum_of(&spec, &grid), &delays, DEFAULT_LOADING_DB).unwrap();
    let (row, col) = map.argmax();
    let fd = water_doppler(&system, 0.035);
    let res = grid.resolution_hz();
    assert!(
        (map.doppler_hz(row).abs() - fd).abs() <= 1.5 * res,
        "doppler {}",
        map.doppler_hz(row)
    );
    assert!(
        col.abs_diff(delays.nearest(EXCESS)) <= 1,
        "delay col {col} vs {}",
        delays.nearest(EXCESS)
    );
}

#[test]
fn static_scene_heatmap_has_no_outstanding_cell() {
    let mut spec = clean_lab(SystemConfig::lte_lab(), 0.0);
    spec.scene.water = None;
    spec.snr_db = Some(0.0);
    let pipeline = Pipeline::new(spec.system.clone(), PipelineConfig::default()).unwrap();
    let a = pipeline
        .analyze(0, &spec.simulate_window(0).unwrap())
        .unwrap();
    let mut cells = a.heatmap.power().to_vec();
    cells.sort_by(f64::total_cmp);
    let median = cells[cells.len() / 2];
    let max = cells[cells.len() - 1];
    assert!(max <= 3.0 * median, "max {max} vs median {median}");
    assert!(!a.detection.detected);
}

/// -3 dB width (seconds) of the delay peak in the strongest heatmap row.
fn delay_peak_width(system: SystemConfig) -> f64 {
    let spec = clean_lab(contiguous(system.clone()), 0.035);
    let delays =
        DelayGrid::for_band(system.num_subcarriers, system.subcarrier_spacing_hz, 16).unwrap();
    let map = build_heatmap(
        &spectrum_of(&spec, &DopplerGrid::water_default()),
        &delays,
        DEFAULT_LOADING_DB,
    )
    .unwrap();
    let (row, col) = map.argmax();
    let r = map.row(row);
    let half = r[col] / 2.0;
    let lo = (0..col).rev().find(|&k| r[k] < half).unwrap_or(0);
    let hi = (col..r.len()).find(|&k| r[k] < half).unwrap_or(r.len() - 1);
    (hi - lo) as f64 * delays.step_s()
}

#[test]
fn wider_band_gives_narrower_delay_peak() {
    let mm = delay_peak_width(SystemConfig::mmwave_lab());
    let lte = delay_peak_width(SystemConfig::lte_lab());
    assert!(mm < lte, "mmWave {mm:e} s vs LTE {lte:e} s");
}

#[test]
fn doppler_profile_peaks_away_from_dc_for_moving_water() {
    let system = contiguous(SystemConfig::mmwave_lab());
    let spec = clean_lab(system.clone(), 0.035);
    let delays =
        DelayGrid::for_band(system.num_subcarriers, system.subcarrier_spacing_hz, 4).unwrap();
    let map = build_heatmap(
        &spectrum_of(&spec, &DopplerGrid::water_default()),
        &delays,
        DEFAULT_LOADING_DB,
    )
    .unwrap();
    let profile = doppler_profile(&map);
    let best = (0..profile.len()).fold(0, |b, k| if profile[k] > profile[b] { k } else { b });
    let fd = water_doppler(&system, 0.035);
    assert!((map.doppler_hz(best).abs() - fd).abs() <= 1.5 * map.doppler_grid().resolution_hz());
}

#[test]
fn single_path_feature_phase() {
    // P_j(t) = cos(2πft + φ0 + arg a_j) has X_j(f) = e^{Jφ0} a_j / 2 on an
    // FFT bin with a rectangular window, so Y = wᴴX = e^{Jφ0}/2.
    let (m, df, tau, phi0) = (24, 1e6, 130e-9, 0.7);
    let l = 64;
    let t: Vec<f64> = (0..l).map(|k| k as f64 * 0.5).collect();
    let bins: Vec<f64> = (-8..=8).map(|k| k as f64 / (l as f64 * 0.5)).collect();
    let grid = DopplerGrid::from_bins(bins).unwrap();
    let bin = 8 + 3;
    let f = grid.bins()[bin];
    let a = steering_vector(tau, m, df);
    let mut values = Vec::with_capacity(m * l);
    for j in 0..m {
        values.extend(
            t.iter()
                .map(|&tk| (2.0 * PI * f * tk + phi0 + a[j].arg()).cos()),
        );
    }
    let x = doppler_transform(
        &PowerWindow::new(1, m, values, t).unwrap(),
        &grid,
        WindowFn::Rect,
    )
    .unwrap();
    let cov = estimate_covariance(&x.slice(bin), DEFAULT_LOADING_DB).unwrap();
    for mode in [BeamformerMode::Mvdr, BeamformerMode::DelayAndSum] {
        let w = beamformer_weights(&cov, tau, df, mode).unwrap();
        let y = extract_feature(&x, bin, &w, 0);
        assert!(
            wrap_phase(y.arg() - phi0).abs() <= 0.01,
            "{mode:?}: {}",
            y.arg()
        );
        assert!((y.norm() - 0.5).abs() < 1e-6);
    }
}

fn feature_phase_after(spec: &SimulationSpec, index: usize) -> (f64, f64, f64) {
    let mut p = Pipeline::new(spec.system.clone(), PipelineConfig::default()).unwrap();
    let r = p
        .process_window(index, &spec.simulate_window(index).unwrap())
        .unwrap();
    let f = r.features[0];
    (f.phase, f.doppler_hz, f.range_m)
}

#[test]
fn half_wavelength_shortening_flips_phase() {
    let mut spec = SimulationSpec::lab(
        SystemConfig::mmwave_lab(),
        0.035,
        480.0,
        PathModel::PaperLinear,
        EXCESS,
    )
    .unwrap();
    let lambda = spec.system.wavelength();
    let path_rate = 2.0 * 0.035 / 480.0 * spec.system.geometry.reflection_angle().sin();
    for (shortening, want) in [(lambda / 2.0, -PI), (lambda / 4.0, -PI / 2.0)] {
        spec.system.window_step_s = shortening / path_rate;
        let (p0, f0, r0) = feature_phase_after(&spec, 0);
        let (p1, f1, r1) = feature_phase_after(&spec, 1);
        assert_eq!((f0, r0), (f1, r1), "same cell expected");
        let d = wrap_phase(p1 - p0);
        assert!(
            wrap_phase(d - want).abs() <= 0.05,
            "shortening {shortening}: {d} vs {want}"
        );
    }
}

fn unwrapped_phases(rise_m: f64) -> Vec<f64> {
    let mut spec = SimulationSpec::lab(
        SystemConfig::mmwave_lab(),
        rise_m,
        480.0,
        PathModel::PaperLinear,
        EXCESS,
    )
    .unwrap();
    spec.num_windows = 30;
    let report = run_simulation(&spec, PipelineConfig::default()).unwrap();
    report
        .heights
        .iter()
        .map(|h| h.phase_unwrapped_rad)
        .collect()
}

#[test]
fn phase_falls_when_water_rises_and_rises_when_it_falls() {
    let up = unwrapped_phases(0.035);
    assert_eq!(up.len(), 30);
    assert!(up.windows(2).all(|w| w[1] < w[0]), "{up:?}");
    let down = unwrapped_phases(-0.035);
    assert!(down.windows(2).all(|w| w[1] > w[0]), "{down:?}");
}

fn detrended_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = y
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64 - xm) * (v - ym))
        .sum();
    let sxx: f64 = (0..y.len()).map(|k| (k as f64 - xm).powi(2)).sum();
    let slope = sxy / sxx;
    y.iter()
        .enumerate()
        .map(|(k, v)| (v - ym - slope * (k as f64 - xm)).powi(2))
        .sum::<f64>()
        / n
}

#[test]
fn spatial_refinement_reduces_phase_noise() {
    let mut system = SystemConfig::lte_lab();
    system.intra_session_rate_hz = 20.0;
    let mut spec =
        SimulationSpec::lab(system, 0.035, 480.0, PathModel::PaperLinear, EXCESS).unwrap();
    spec.num_windows = 50;
    spec.snr_db = Some(-10.0);
    // Same bin spacing as the default grid over a narrower span.
    let cfg = PipelineConfig {
        doppler_half_span_hz: 0.125,
        doppler_bins: 65,
        ..PipelineConfig::default()
    };
    let per_antenna = run_simulation(&spec, cfg.clone()).unwrap();
    let combined = run_simulation(
        &spec,
        PipelineConfig {
            spatial_refine: true,
            ..cfg
        },
    )
    .unwrap();
    let phases = |r: &watersense::pipeline::PipelineReport, s: Option<usize>| -> Vec<f64> {
        r.heights
            .iter()
            .filter(|h| h.antenna == s)
            .map(|h| h.phase_unwrapped_rad)
            .collect()
    };
    assert_eq!(phases(&combined, None).len(), 50);
    let z = detrended_variance(&phases(&combined, None));
    for i in 0..3 {
        let v = detrended_variance(&phases(&per_antenna, Some(i)));
        assert!(z <= v, "combined {z} vs antenna {i} {v}");
    }
}

#[test]
fn feature_scales_linearly() {
    let spec = clean_lab(contiguous(SystemConfig::mmwave_lab()), 0.035);
    let grid = DopplerGrid::water_default();
    let x = spectrum_of(&spec, &grid);
    let bin = grid.zero_index() + 2;
    let cov = estimate_covariance(&x.slice(bin), DEFAULT_LOADING_DB).unwrap();
    let w = beamformer_weights(
        &cov,
        EXCESS,
        spec.system.subcarrier_spacing_hz,
        BeamformerMode::Mvdr,
    )
    .unwrap();
    let y = extract_feature(&x, bin, &w, 0);
    // Scaling the power scales the spectrum; keep the weights fixed.
    let w2 = spec.simulate_window(0).unwrap();
    let p = csi_power(&w2);
    let scaled = PowerWindow::new(
        1,
        p.n_subcarriers(),
        p.values().iter().map(|v| 3.5 * v).collect(),
        p.timestamps().to_vec(),
    )
    .unwrap();
    let x2 = doppler_transform(&remove_mean(&scaled), &grid, WindowFn::Hamming).unwrap();
    let y2 = extract_feature(&x2, bin, &w, 0);
    assert!((y2 - y * Complex64::new(3.5, 0.0)).norm() <= 1e-9 * y.norm().max(1e-300));
    assert!(wrap_phase(y2.arg() - y.arg()).abs() < 1e-9);
}

#[test]
fn lab_schedule_has_fourteen_sessions() {
    let t = make_sampling_schedule(&SystemConfig::mmwave_lab()).unwrap();
    assert_eq!(watersense::schedule::count_sessions(&t), 14);
}
