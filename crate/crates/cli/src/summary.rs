//! Run summary: height error against truth and detection counts.

use std::fmt::Write as _;
use std::io::Write;

use anyhow::Result;

use watersense::io::DetectionRecord;
use watersense::track::{HeightSeries, Score};

/// Levels closer than this count as unchanged.
const STATIC_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCounts {
    pub varying: usize,
    pub true_positives: usize,
    pub static_windows: usize,
    pub false_positives: usize,
    /// Detection rows with no matching truth row.
    pub unmatched: usize,
}

impl DetectionCounts {
    /// Window `i` is matched to truth row `i`. It counts as varying when the
    /// truth level moves between its start and the next window's start (the
    /// last window looks back instead).
    pub fn classify(detections: &[DetectionRecord], truth: &HeightSeries) -> Self {
        let h = &truth.heights_m;
        let varies = |i: usize| -> Option<bool> {
            let j = if i + 1 < h.len() {
                i + 1
            } else {
                i.checked_sub(1)?
            };
            (i < h.len()).then(|| (h[j] - h[i]).abs() > STATIC_TOLERANCE_M)
        };
        let mut c = Self {
            varying: 0,
            true_positives: 0,
            static_windows: 0,
            false_positives: 0,
            unmatched: 0,
        };
        for d in detections {
            match varies(d.window_index) {
                Some(true) => {
                    c.varying += 1;
                    c.true_positives += usize::from(d.detected);
                }
                Some(false) => {
                    c.static_windows += 1;
                    c.false_positives += usize::from(d.detected);
                }
                None => c.unmatched += 1,
            }
        }
        c
    }

    pub fn tp_rate(&self) -> Option<f64> {
        (self.varying > 0).then(|| self.true_positives as f64 / self.varying as f64)
    }

    pub fn fp_rate(&self) -> Option<f64> {
        (self.static_windows > 0).then(|| self.false_positives as f64 / self.static_windows as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub stream: String,
    pub samples: usize,
    pub mae_m: f64,
    pub std_m: f64,
    pub detections: Option<DetectionCounts>,
}

fn percent(rate: Option<f64>) -> String {
    rate.map_or_else(|| "n/a".to_string(), |r| format!("{:.2}%", 100.0 * r))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl Summary {
    pub fn new(
        stream: &str,
        score: &Score,
        detections: Option<&[DetectionRecord]>,
        truth: &HeightSeries,
    ) -> Self {
        Self {
            stream: stream.to_string(),
            samples: score.truth.len(),
            mae_m: score.mean_abs_error_m,
            std_m: score.std_m,
            detections: detections.map(|d| DetectionCounts::classify(d, truth)),
        }
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "estimate        {}", self.stream);
        let _ = writeln!(s, "aligned samples {}", self.samples);
        let _ = writeln!(s, "MAE             {:.4} cm", 100.0 * self.mae_m);
        let _ = writeln!(s, "std             {:.4} cm", 100.0 * self.std_m);
        if let Some(c) = &self.detections {
            let _ = writeln!(
                s,
                "varying windows {} detected {} (TP {})",
                c.varying,
                c.true_positives,
                percent(c.tp_rate())
            );
            let _ = writeln!(
                s,
                "static windows  {} detected {} (FP {})",
                c.static_windows,
                c.false_positives,
                percent(c.fp_rate())
            );
            if c.unmatched > 0 {
                let _ = writeln!(
                    s,
                    "unmatched       {} detection rows without truth",
                    c.unmatched
                );
            }
        }
        s
    }

    /// One header row and one value row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["stream", "samples", "mae_m", "std_m"];
        let mut row = vec![
            self.stream.clone(),
            self.samples.to_string(),
            self.mae_m.to_string(),
            self.std_m.to_string(),
        ];
        if let Some(c) = &self.detections {
            header.extend([
                "varying_windows",
                "true_positives",
                "tp_rate",
                "static_windows",
                "false_positives",
                "fp_rate",
                "unmatched",
            ]);
            row.extend([
                c.varying.to_string(),
                c.true_positives.to_string(),
                opt(c.tp_rate()),
                c.static_windows.to_string(),
                c.false_positives.to_string(),
                opt(c.fp_rate()),
                c.unmatched.to_string(),
            ]);
        }
        w.write_record(&header)?;
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    }
}
