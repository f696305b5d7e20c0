//! System parameters shared by every pipeline stage.

use crate::error::{Error, Result};
use crate::keyvalue::KeyValues;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Transceiver geometry above the water surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub horizontal_distance_m: f64,
}

impl Geometry {
    pub fn new(bs_height_m: f64, ue_height_m: f64, horizontal_distance_m: f64) -> Result<Self> {
        let g = Self {
            bs_height_m,
            ue_height_m,
            horizontal_distance_m,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bs_height_m", self.bs_height_m),
            ("ue_height_m", self.ue_height_m),
            ("horizontal_distance_m", self.horizontal_distance_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Specular reflection angle off the water, measured from the vertical:
    /// `atan(d / (h_bs + h_ue))`.
    pub fn reflection_angle(&self) -> f64 {
        (self.horizontal_distance_m / (self.bs_height_m + self.ue_height_m)).atan()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub carrier_freq_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_subcarriers: usize,
    pub num_antennas: usize,
    /// Element spacing in half-wavelengths. Only 1.0 is supported.
    pub antenna_spacing: f64,
    pub geometry: Geometry,
    pub window_duration_s: f64,
    pub session_duration_s: f64,
    pub gap_duration_s: f64,
    pub intra_session_rate_hz: f64,
    /// Start-to-start offset between consecutive windows.
    pub window_step_s: f64,
}

pub(crate) const SYSTEM_KEYS: &[&str] = &[
    "system",
    "carrier_freq_hz",
    "subcarrier_spacing_hz",
    "num_subcarriers",
    "num_antennas",
    "antenna_spacing",
    "bs_height_m",
    "ue_height_m",
    "horizontal_distance_m",
    "window_duration_s",
    "session_duration_s",
    "gap_duration_s",
    "intra_session_rate_hz",
    "window_step_s",
];

impl Default for SystemConfig {
    fn default() -> Self {
        Self::mmwave_lab()
    }
}

impl SystemConfig {
    /// 28 GHz, 70 MHz over 46 subcarriers, one antenna, 100 Hz sessions.
    pub fn mmwave_lab() -> Self {
        Self {
            carrier_freq_hz: 28e9,
            subcarrier_spacing_hz: 70e6 / 46.0,
            num_subcarriers: 46,
            num_antennas: 1,
            antenna_spacing: 1.0,
            geometry: Geometry {
                bs_height_m: 1.0,
                ue_height_m: 1.0,
                horizontal_distance_m: 2.0,
            },
            window_duration_s: 300.0,
            session_duration_s: 2.0,
            gap_duration_s: 20.0,
            intra_session_rate_hz: 100.0,
            window_step_s: 4.0,
        }
    }

    /// 3.1 GHz, 20 MHz over 100 subcarriers, three antennas, 200 Hz sessions.
    pub fn lte_lab() -> Self {
        Self {
            carrier_freq_hz: 3.1e9,
            subcarrier_spacing_hz: 20e6 / 100.0,
            num_subcarriers: 100,
            num_antennas: 3,
            intra_session_rate_hz: 200.0,
            window_step_s: 22.0,
            ..Self::mmwave_lab()
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.subcarrier_spacing_hz * self.num_subcarriers as f64
    }

    /// Frequency of subcarrier `j` (0-based): `f_c + j Δf`.
    pub fn subcarrier_freq(&self, j: usize) -> f64 {
        self.carrier_freq_hz + j as f64 * self.subcarrier_spacing_hz
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("window_duration_s", self.window_duration_s),
            ("session_duration_s", self.session_duration_s),
            ("intra_session_rate_hz", self.intra_session_rate_hz),
            ("window_step_s", self.window_step_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gap_duration_s.is_finite() && self.gap_duration_s >= 0.0) {
            return Err(Error::Config(format!(
                "gap_duration_s must be nonnegative, got {}",
                self.gap_duration_s
            )));
        }
        if self.num_subcarriers == 0 || self.num_antennas == 0 {
            return Err(Error::Config(
                "num_subcarriers and num_antennas must be positive".into(),
            ));
        }
        if self.antenna_spacing != 1.0 {
            return Err(Error::Config(format!(
                "antenna_spacing must be 1.0 (half-wavelength ULA), got {}",
                self.antenna_spacing
            )));
        }
        if self.window_duration_s < self.session_duration_s + self.gap_duration_s {
            return Err(Error::Config(format!(
                "window_duration_s ({}) must cover one session plus gap ({})",
                self.window_duration_s,
                self.session_duration_s + self.gap_duration_s
            )));
        }
        self.geometry.validate()
    }

    /// Preset named by the `system` key (`mmwave` or `lte`, default
    /// `mmwave`) with the remaining system keys applied on top.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let base = match kv.get("system") {
            None => Self::mmwave_lab(),
            Some(e) => match e.value.to_ascii_lowercase().as_str() {
                "mmwave" => Self::mmwave_lab(),
                "lte" => Self::lte_lab(),
                other => {
                    return Err(e.error(format!(
                        "unknown system preset {other:?}, expected mmwave or lte"
                    )))
                }
            },
        };
        base.apply(kv)
    }

    /// Applies any system keys present in `kv` on top of `self`.
    pub fn apply(mut self, kv: &KeyValues) -> Result<Self> {
        macro_rules! set {
            ($($field:ident).+, $key:literal) => {
                if let Some(v) = kv.parsed($key)? {
                    self.$($field).+ = v;
                }
            };
        }
        set!(carrier_freq_hz, "carrier_freq_hz");
        set!(subcarrier_spacing_hz, "subcarrier_spacing_hz");
        set!(num_subcarriers, "num_subcarriers");
        set!(num_antennas, "num_antennas");
        set!(antenna_spacing, "antenna_spacing");
        set!(geometry.bs_height_m, "bs_height_m");
        set!(geometry.ue_height_m, "ue_height_m");
        set!(geometry.horizontal_distance_m, "horizontal_distance_m");
        set!(window_duration_s, "window_duration_s");
        set!(session_duration_s, "session_duration_s");
        set!(gap_duration_s, "gap_duration_s");
        set!(intra_session_rate_hz, "intra_session_rate_hz");
        set!(window_step_s, "window_step_s");
        self.validate().map_err(|e| match e {
            Error::Config(msg) => {
                // Point at the line that set the offending key when we can.
                let line = SYSTEM_KEYS
                    .iter()
                    .filter(|k| msg.starts_with(**k))
                    .find_map(|k| kv.get(k))
                    .map(|entry| entry.line);
                match line {
                    Some(line) => Error::Parse { line, message: msg },
                    None => Error::Config(msg),
                }
            }
            other => other,
        })?;
        Ok(self)
    }
}
