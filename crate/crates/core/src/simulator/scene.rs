//! Multi-window simulation specs and the scene file format.
//!
//! Scene files use the config key-value syntax plus:
//!
//! ```text
//! static_path = 1.0, 20, 0          # amplitude, delay_ns, aoa_deg (repeatable)
//! water_path  = 0.3, 170, 10, linear  # model: exact | linear (default exact)
//! mover       = 0.2, 90, -30, 0.05  # ..., path rate in m/s (repeatable)
//! trajectory  = 0:0; 480:0.035      # time_s:level_m (rise positive)
//! to_cfo = on
//! hw_phase = random
//! power_drift = 0.05, 600           # amplitude, period_s
//! snr_db = 0
//! seed = 7
//! num_windows = 40
//! ```
//!
//! Without any of `static_path`, `water_path`, `mover` or `trajectory` the
//! lab scene of [`SimulationSpec::lab`] is used (3.5 cm rise over 480 s).

use crate::config::{SystemConfig, SYSTEM_KEYS};
use crate::error::{Error, Result};
use crate::keyvalue::{Entry, KeyValues};
use crate::schedule::make_sampling_schedule;
use crate::window::CsiWindow;

use super::{
    generate_csi, Awgn, Impairments, Mover, PathModel, PowerDrift, Scene, StaticPath, ToCfo,
    WaterPath, WaterTrajectory,
};

pub(crate) const SCENE_KEYS: &[&str] = &[
    "static_path",
    "water_path",
    "mover",
    "trajectory",
    "to_cfo",
    "hw_phase",
    "power_drift",
    "snr_db",
    "seed",
    "num_windows",
    "max_time_offset_ns",
];

/// A scene simulated over consecutive windows, `window_step_s` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub system: SystemConfig,
    pub scene: Scene,
    pub to_cfo: bool,
    pub max_time_offset_s: f64,
    pub hw_phase: bool,
    pub power_drift: Option<PowerDrift>,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub num_windows: usize,
}

/// Splits a 64-bit seed stream per window and purpose.
fn derive_seed(seed: u64, window: usize, purpose: u64) -> u64 {
    // SplitMix64 finalizer over the packed inputs.
    let mut z = seed
        ^ (window as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SimulationSpec {
    /// Lab-analog scene: a dominant static path, a weaker water reflection
    /// `excess_delay_s` later and a level change of `rise_m` over `rise_s`
    /// (continued at the same rate to the end of the last window).
    pub fn lab(
        system: SystemConfig,
        rise_m: f64,
        rise_s: f64,
        model: PathModel,
        excess_delay_s: f64,
    ) -> Result<Self> {
        let num_windows = (rise_s / system.window_step_s).floor() as usize + 1;
        let end = (num_windows - 1) as f64 * system.window_step_s + system.window_duration_s;
        let trajectory = if rise_m == 0.0 {
            WaterTrajectory::flat()
        } else {
            WaterTrajectory::linear(rise_m, rise_s, end)?
        };
        let reference = 20e-9;
        Ok(Self {
            scene: Scene {
                static_paths: vec![StaticPath {
                    amplitude: 1.0,
                    delay_s: reference,
                    aoa_rad: 0.0,
                }],
                water: Some(WaterPath {
                    base_delay_s: reference + excess_delay_s,
                    aoa_rad: 20f64.to_radians(),
                    base_amplitude: 0.3,
                    path_model: model,
                }),
                trajectory: Some(trajectory),
                movers: Vec::new(),
            },
            system,
            to_cfo: true,
            max_time_offset_s: 50e-9,
            hw_phase: true,
            power_drift: None,
            snr_db: None,
            seed: 1,
            num_windows,
        })
    }

    pub fn window_start(&self, index: usize) -> f64 {
        index as f64 * self.system.window_step_s
    }

    pub fn impairments(&self, index: usize) -> Impairments {
        Impairments {
            to_cfo: if self.to_cfo {
                ToCfo::RandomPerSample {
                    seed: derive_seed(self.seed, index, 1),
                    max_time_offset_s: self.max_time_offset_s,
                }
            } else {
                ToCfo::Off
            },
            hw_phase_per_antenna: if self.hw_phase {
                Impairments::random_hw_phases(
                    self.system.num_antennas,
                    derive_seed(self.seed, 0, 2),
                )
            } else {
                Vec::new()
            },
            power_drift: self.power_drift,
            awgn: self.snr_db.map(|snr_db| Awgn {
                snr_db,
                seed: derive_seed(self.seed, index, 3),
            }),
        }
    }

    pub fn simulate_window(&self, index: usize) -> Result<CsiWindow> {
        let schedule = make_sampling_schedule(&self.system)?;
        generate_csi(
            &self.system,
            &self.scene,
            &self.impairments(index),
            self.window_start(index),
            &schedule,
        )
    }

    /// Ground-truth level at absolute time `t`.
    pub fn level_at(&self, t: f64) -> f64 {
        self.scene.trajectory.as_ref().map_or(0.0, |tr| tr.level(t))
    }

    /// Keys understood by [`SimulationSpec::from_key_values`].
    pub fn known_keys() -> Vec<&'static str> {
        SYSTEM_KEYS.iter().chain(SCENE_KEYS).copied().collect()
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let system = SystemConfig::from_key_values(kv)?;
        if ["static_path", "water_path", "mover", "trajectory"]
            .iter()
            .all(|k| kv.get(k).is_none())
        {
            // No scene given: the lab scene for this system.
            let lab = Self::lab(system.clone(), 0.035, 480.0, PathModel::PaperLinear, 150e-9)?;
            return Self::with_run_keys(system, lab.scene, kv, lab.num_windows);
        }
        let mut scene = Scene::default();
        for e in kv.all("static_path") {
            let v = e.floats()?;
            if v.len() != 3 {
                return Err(e.error("static_path expects amp,delay_ns,aoa_deg".into()));
            }
            scene.static_paths.push(StaticPath {
                amplitude: v[0],
                delay_s: v[1] * 1e-9,
                aoa_rad: v[2].to_radians(),
            });
        }
        if let Some(e) = kv.get("water_path") {
            scene.water = Some(parse_water(e)?);
        }
        for e in kv.all("mover") {
            let v = e.floats()?;
            if v.len() != 4 {
                return Err(e.error("mover expects amp,delay_ns,aoa_deg,rate_mps".into()));
            }
            scene.movers.push(Mover {
                path: WaterPath {
                    base_delay_s: v[1] * 1e-9,
                    aoa_rad: v[2].to_radians(),
                    base_amplitude: v[0],
                    path_model: PathModel::ExactGeometric,
                },
                path_rate_mps: v[3],
            });
        }
        if let Some(e) = kv.get("trajectory") {
            scene.trajectory = Some(parse_trajectory(e)?);
        }
        scene.validate().map_err(|err| {
            let line = kv
                .get("water_path")
                .or(kv.get("static_path"))
                .map_or(0, |e| e.line);
            Error::Parse {
                line,
                message: err.to_string(),
            }
        })?;

        Self::with_run_keys(system, scene, kv, 1)
    }

    /// Impairment, noise and run-length keys on top of a scene.
    fn with_run_keys(
        system: SystemConfig,
        scene: Scene,
        kv: &KeyValues,
        default_windows: usize,
    ) -> Result<Self> {
        let power_drift = match kv.get("power_drift") {
            Some(e) => {
                let v = e.floats()?;
                if v.len() != 2 {
                    return Err(e.error("power_drift expects amplitude,period_s".into()));
                }
                Some(PowerDrift {
                    amplitude: v[0],
                    period_s: v[1],
                    phase_rad: 0.0,
                })
            }
            None => None,
        };
        let snr_db = match kv.get("snr_db") {
            Some(e)
                if e.value.eq_ignore_ascii_case("inf") || e.value.eq_ignore_ascii_case("off") =>
            {
                None
            }
            Some(e) => Some(e.parse::<f64>()?),
            None => None,
        };
        Ok(Self {
            system,
            scene,
            to_cfo: parse_switch(kv.get("to_cfo"), "on", true)?,
            max_time_offset_s: kv
                .parsed::<f64>("max_time_offset_ns")?
                .map_or(50e-9, |ns| ns * 1e-9),
            hw_phase: parse_switch(kv.get("hw_phase"), "random", true)?,
            power_drift,
            snr_db,
            seed: kv.parsed("seed")?.unwrap_or(1),
            num_windows: kv.parsed("num_windows")?.unwrap_or(default_windows),
        })
    }
}

fn parse_switch(entry: Option<&Entry>, on_word: &str, default: bool) -> Result<bool> {
    match entry {
        None => Ok(default),
        Some(e) => match e.value.to_ascii_lowercase().as_str() {
            v if v == on_word || v == "on" || v == "true" => Ok(true),
            "off" | "false" => Ok(false),
            _ => Err(e.error(format!("`{}` expects {on_word} or off", e.key))),
        },
    }
}

fn parse_water(e: &Entry) -> Result<WaterPath> {
    let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(e.error("water_path expects amp,delay_ns,aoa_deg[,exact|linear]".into()));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| e.error(format!("water_path: {s:?} is not a number")))
    };
    let path_model = match parts.get(3).copied() {
        None | Some("exact") => PathModel::ExactGeometric,
        Some("linear") => PathModel::PaperLinear,
        Some(other) => return Err(e.error(format!("unknown path model {other:?}"))),
    };
    Ok(WaterPath {
        base_amplitude: num(parts[0])?,
        base_delay_s: num(parts[1])? * 1e-9,
        aoa_rad: num(parts[2])?.to_radians(),
        path_model,
    })
}

fn parse_trajectory(e: &Entry) -> Result<WaterTrajectory> {
    let mut points = Vec::new();
    for item in e.value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (t, h) = item
            .split_once(':')
            .ok_or_else(|| e.error(format!("trajectory point {item:?} is not t:h")))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| e.error(format!("bad time in {item:?}")))?;
        let h: f64 = h
            .trim()
            .parse()
            .map_err(|_| e.error(format!("bad height in {item:?}")))?;
        points.push((t, h));
    }
    WaterTrajectory::new(points).map_err(|err| e.error(err.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = "\
carrier_freq_hz = 28e9
num_antennas = 2
static_path = 1.0, 20, 0
static_path = 0.4, 35, 15
water_path = 0.3, 170, 10, linear
mover = 0.1, 90, -30, 0.5
trajectory = 0:0; 480:0.035; 600:0.035
to_cfo = off
power_drift = 0.05, 600
snr_db = 3
seed = 9
num_windows = 4
";

    #[test]
    fn parses_scene_file() {
        let kv = KeyValues::parse(SCENE).unwrap();
        kv.reject_unknown(&SimulationSpec::known_keys()).unwrap();
        let spec = SimulationSpec::from_key_values(&kv).unwrap();
        assert_eq!(spec.system.num_antennas, 2);
        assert_eq!(spec.scene.static_paths.len(), 2);
        assert_eq!(spec.scene.reference_delay(), Some(20e-9));
        let water = spec.scene.water.unwrap();
        assert_eq!(water.path_model, PathModel::PaperLinear);
        assert!((water.base_delay_s - 170e-9).abs() < 1e-18);
        assert_eq!(spec.scene.movers.len(), 1);
        assert!((spec.level_at(240.0) - 0.0175).abs() < 1e-12);
        assert!((spec.level_at(1000.0) - 0.035).abs() < 1e-12);
        assert!(!spec.to_cfo && spec.hw_phase);
        assert_eq!(spec.snr_db, Some(3.0));
        assert_eq!(spec.num_windows, 4);
    }

    #[test]
    fn missing_scene_falls_back_to_lab() {
        let kv = KeyValues::parse("system = lte\nseed = 4\nsnr_db = 0\n").unwrap();
        let spec = SimulationSpec::from_key_values(&kv).unwrap();
        let mut lab = SimulationSpec::lab(
            SystemConfig::lte_lab(),
            0.035,
            480.0,
            PathModel::PaperLinear,
            150e-9,
        )
        .unwrap();
        lab.seed = 4;
        lab.snr_db = Some(0.0);
        assert_eq!(spec, lab);
        let kv = KeyValues::parse("num_windows = 3\n").unwrap();
        assert_eq!(SimulationSpec::from_key_values(&kv).unwrap().num_windows, 3);
    }

    #[test]
    fn scene_errors_carry_lines() {
        let kv = KeyValues::parse("static_path = 1, 2\n").unwrap();
        let err = SimulationSpec::from_key_values(&kv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let kv = KeyValues::parse("static_path = 1, 20, 0\ntrajectory = 5:0; 10:1\n").unwrap();
        let err = SimulationSpec::from_key_values(&kv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let kv = KeyValues::parse("static_path = 1, 20, 0\nwater_path = 0.3, 10, 0\n").unwrap();
        assert!(SimulationSpec::from_key_values(&kv).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0, 1);
        assert_ne!(a, derive_seed(1, 1, 1));
        assert_ne!(a, derive_seed(1, 0, 3));
        assert_ne!(a, derive_seed(2, 0, 1));
        assert_eq!(a, derive_seed(1, 0, 1));
    }
}
