//! Range-averaged Doppler profile and cell-averaging CFAR.

use crate::error::{Error, Result};
use crate::heatmap::DopplerRangeHeatmap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarConfig {
    /// Reference cells on each side of the cell under test.
    pub reference_cells: usize,
    /// Guard cells on each side, skipped by the noise estimate.
    pub guard_cells: usize,
    /// Factors `<= 1` divide the noise estimate (0.25 is a 6 dB margin,
    /// 0.01 a 20 dB one); larger values multiply it.
    pub threshold_factor: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            reference_cells: 4,
            guard_cells: 2,
            threshold_factor: 0.25,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reference_cells < 2 {
            return Err(Error::Config(format!(
                "CFAR needs at least 2 reference cells per side, got {}",
                self.reference_cells
            )));
        }
        if !(self.threshold_factor.is_finite() && self.threshold_factor > 0.0) {
            return Err(Error::Config(format!(
                "CFAR threshold factor must be positive, got {}",
                self.threshold_factor
            )));
        }
        Ok(())
    }

    /// Multiplier applied to the reference mean.
    pub fn scale(&self) -> f64 {
        if self.threshold_factor <= 1.0 {
            1.0 / self.threshold_factor
        } else {
            self.threshold_factor
        }
    }

    pub fn min_profile_len(&self) -> usize {
        2 * (self.reference_cells + self.guard_cells) + 2
    }
}

/// A CFAR detection on the Doppler profile (indices are heatmap rows).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub power: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionResult {
    pub detected: bool,
    pub peaks: Vec<Peak>,
    /// `(row, delay column)` of the strongest heatmap cell among detected rows.
    pub chosen_cell: Option<(usize, usize)>,
}

/// Mean of every heatmap row across the delay bins.
pub fn doppler_profile(heatmap: &DopplerRangeHeatmap) -> Vec<f64> {
    (0..heatmap.n_rows())
        .map(|r| heatmap.row(r).iter().sum::<f64>() / heatmap.n_cols() as f64)
        .collect()
}

/// Per-cell CFAR threshold. Reference windows are truncated at the profile
/// edges (one-sided there), never wrapped.
pub fn cfar_thresholds(profile: &[f64], cfg: &CfarConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let min = cfg.min_profile_len();
    if profile.len() < min {
        return Err(Error::ProfileTooShort {
            len: profile.len(),
            min,
        });
    }
    let n = profile.len() as i64;
    let (g, r) = (cfg.guard_cells as i64, cfg.reference_cells as i64);
    let scale = cfg.scale();
    Ok((0..n)
        .map(|c| {
            let left = (c - g - r).max(0)..(c - g).max(0);
            let right = (c + g + 1).min(n)..(c + g + r + 1).min(n);
            let cells: Vec<f64> = left.chain(right).map(|k| profile[k as usize]).collect();
            scale * cells.iter().sum::<f64>() / cells.len() as f64
        })
        .collect())
}

/// Cells above their threshold that are also local maxima.
pub fn ca_cfar(profile: &[f64], cfg: &CfarConfig) -> Result<Vec<Peak>> {
    let thresholds = cfar_thresholds(profile, cfg)?;
    let n = profile.len();
    Ok((0..n)
        .filter(|&c| {
            let left_ok = c == 0 || profile[c] > profile[c - 1];
            let right_ok = c + 1 == n || profile[c] >= profile[c + 1];
            profile[c] > thresholds[c] && left_ok && right_ok
        })
        .map(|c| Peak {
            row: c,
            power: profile[c],
            threshold: thresholds[c],
        })
        .collect())
}

/// Profile, CFAR and cell choice for one heatmap. Among detected rows the
/// strongest heatmap cell wins; equal power prefers the smaller |Doppler|.
pub fn detect(heatmap: &DopplerRangeHeatmap, cfg: &CfarConfig) -> Result<DetectionResult> {
    let profile = doppler_profile(heatmap);
    let peaks = ca_cfar(&profile, cfg)?;
    let mut chosen: Option<(usize, usize, f64)> = None;
    for p in &peaks {
        let row = heatmap.row(p.row);
        let col = (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best });
        let better = match chosen {
            None => true,
            Some((r, _, power)) => {
                row[col] > power
                    || (row[col] == power
                        && heatmap.doppler_hz(p.row).abs() < heatmap.doppler_hz(r).abs())
            }
        };
        if better {
            chosen = Some((p.row, col, row[col]));
        }
    }
    Ok(DetectionResult {
        detected: !peaks.is_empty(),
        peaks,
        chosen_cell: chosen.map(|(r, c, _)| (r, c)),
    })
}
