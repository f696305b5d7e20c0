//! CSV reports and ground-truth files.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::FeatureSample;
use crate::track::HeightSeries;

/// One line of the detection log.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub window_index: usize,
    pub detected: bool,
    pub doppler_hz: Option<f64>,
    pub range_m: Option<f64>,
    pub power: Option<f64>,
    pub threshold: Option<f64>,
}

/// One height estimate. `antenna` is `None` for spatially combined features.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightRecord {
    pub window_index: usize,
    pub time_s: f64,
    pub antenna: Option<usize>,
    pub phase_unwrapped_rad: f64,
    /// Cumulative Δh since the stream's first window (positive = water fell).
    pub delta_h_m: f64,
    /// `-delta_h_m`: positive = water rose.
    pub level_change_m: f64,
    /// Median level change over all streams at this window.
    pub level_change_median_m: f64,
    pub coasting: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn antenna_label(a: Option<usize>) -> String {
    a.map_or_else(|| "combined".to_string(), |i| i.to_string())
}

pub fn write_detections<W: Write>(out: W, records: &[DetectionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "window_index",
        "detected",
        "doppler_hz",
        "range_m",
        "power",
        "threshold",
    ])?;
    for r in records {
        w.write_record([
            r.window_index.to_string(),
            r.detected.to_string(),
            opt(r.doppler_hz),
            opt(r.range_m),
            opt(r.power),
            opt(r.threshold),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_features<W: Write>(out: W, samples: &[FeatureSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "window_index",
        "antenna",
        "re",
        "im",
        "amplitude",
        "phase",
        "doppler_hz",
        "range_m",
        "aoa_deg",
        "coasting",
        "time_s",
    ])?;
    for s in samples {
        w.write_record([
            s.window_index.to_string(),
            antenna_label(s.antenna),
            s.value.re.to_string(),
            s.value.im.to_string(),
            s.amplitude.to_string(),
            s.phase.to_string(),
            s.doppler_hz.to_string(),
            s.range_m.to_string(),
            opt(s.aoa_deg),
            s.coasting.to_string(),
            s.time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_heights<W: Write>(out: W, records: &[HeightRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "time_s",
        "antenna",
        "phase_unwrapped_rad",
        "delta_h_m",
        "level_change_m",
        "coasting",
        "level_change_median_m",
    ])?;
    for r in records {
        w.write_record([
            r.time_s.to_string(),
            antenna_label(r.antenna),
            r.phase_unwrapped_rad.to_string(),
            r.delta_h_m.to_string(),
            r.level_change_m.to_string(),
            r.coasting.to_string(),
            r.level_change_median_m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ground_truth<W: Write>(out: W, series: &HeightSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_s", "height_m"])?;
    for (t, h) in series.times_s.iter().zip(&series.heights_m) {
        w.write_record([t.to_string(), h.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Header-addressed CSV rows with line-numbered field errors.
struct Rows<R: Read> {
    reader: csv::Reader<R>,
    columns: Vec<String>,
}

struct Row<'a> {
    rec: csv::StringRecord,
    columns: &'a [String],
    line: usize,
}

impl<R: Read> Rows<R> {
    fn new(input: R, required: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if let Some(missing) = required.iter().find(|c| !columns.iter().any(|h| h == *c)) {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing column {missing:?}"),
            });
        }
        Ok(Self { reader, columns })
    }

    fn for_each(mut self, mut f: impl FnMut(&Row) -> Result<()>) -> Result<()> {
        for (idx, rec) in self.reader.records().enumerate() {
            let row = Row {
                rec: rec?,
                columns: &self.columns,
                line: idx + 2,
            };
            f(&row)?;
        }
        Ok(())
    }
}

impl Row<'_> {
    fn raw(&self, column: &str) -> Option<&str> {
        let k = self.columns.iter().position(|h| h == column)?;
        self.rec.get(k)
    }

    fn error(&self, column: &str) -> Error {
        Error::Parse {
            line: self.line,
            message: format!("bad {column} value {:?}", self.raw(column).unwrap_or("")),
        }
    }

    fn value<T: std::str::FromStr>(&self, column: &str) -> Result<T> {
        self.raw(column)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.error(column))
    }

    fn optional(&self, column: &str) -> Result<Option<f64>> {
        match self.raw(column) {
            None | Some("") => Ok(None),
            Some(_) => self.value(column).map(Some),
        }
    }

    fn antenna(&self) -> Result<Option<usize>> {
        match self.raw("antenna") {
            Some("combined") => Ok(None),
            _ => self.value("antenna").map(Some),
        }
    }
}

pub fn read_detections<R: Read>(input: R) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    Rows::new(input, &["window_index", "detected"])?.for_each(|r| {
        out.push(DetectionRecord {
            window_index: r.value("window_index")?,
            detected: r.value("detected")?,
            doppler_hz: r.optional("doppler_hz")?,
            range_m: r.optional("range_m")?,
            power: r.optional("power")?,
            threshold: r.optional("threshold")?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Reads a feature log. Amplitude and phase are recomputed from `re, im`.
pub fn read_features<R: Read>(input: R) -> Result<Vec<FeatureSample>> {
    let mut out = Vec::new();
    Rows::new(
        input,
        &[
            "window_index",
            "antenna",
            "re",
            "im",
            "doppler_hz",
            "range_m",
            "time_s",
        ],
    )?
    .for_each(|r| {
        let value = Complex64::new(r.value("re")?, r.value("im")?);
        out.push(FeatureSample {
            window_index: r.value("window_index")?,
            time_s: r.value("time_s")?,
            value,
            amplitude: value.norm(),
            phase: value.arg(),
            doppler_hz: r.value("doppler_hz")?,
            range_m: r.value("range_m")?,
            aoa_deg: r.optional("aoa_deg")?,
            antenna: r.antenna()?,
            coasting: r
                .raw("coasting")
                .map_or(Ok(false), |_| r.value("coasting"))?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Reads a height log. `window_index` is not stored and is left at 0.
pub fn read_heights<R: Read>(input: R) -> Result<Vec<HeightRecord>> {
    let mut out = Vec::new();
    Rows::new(input, &["time_s", "antenna", "level_change_m"])?.for_each(|r| {
        let level: f64 = r.value("level_change_m")?;
        out.push(HeightRecord {
            window_index: 0,
            time_s: r.value("time_s")?,
            antenna: r.antenna()?,
            phase_unwrapped_rad: r.optional("phase_unwrapped_rad")?.unwrap_or(f64::NAN),
            delta_h_m: r.optional("delta_h_m")?.unwrap_or(-level),
            level_change_m: level,
            level_change_median_m: r.optional("level_change_median_m")?.unwrap_or(level),
            coasting: r
                .raw("coasting")
                .map_or(Ok(false), |_| r.value("coasting"))?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Reads `time_s,height_m` rows (header required).
pub fn read_ground_truth<R: Read>(input: R) -> Result<HeightSeries> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut times = Vec::new();
    let mut heights = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        let field = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("expected two numeric columns, got {rec:?}"),
                })
        };
        times.push(field(0)?);
        heights.push(field(1)?);
    }
    HeightSeries::from_pairs(times, heights)
}
