//! Binary CSI window files.
//!
//! ```text
//! offset  size      field
//! 0       8         magic "WSCSI001"
//! 8       4         n_antennas (u32 LE)
//! 12      4         n_subcarriers (u32 LE)
//! 16      4         n_samples (u32 LE)
//! 20      8         carrier_freq_hz (f64 LE)
//! 28      8         subcarrier_spacing_hz (f64 LE)
//! 36      8·L       timestamps in seconds (f64 LE)
//! ...     8·N·M·L   CSI as (re, im) f32 LE pairs, antenna-major, time-minor
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::window::CsiWindow;

pub const CSI_MAGIC: &[u8; 8] = b"WSCSI001";
pub const CSI_HEADER_LEN: usize = 36;

/// Serializes a window; CSI entries are rounded to `f32`.
pub fn encode_csi(window: &CsiWindow) -> Vec<u8> {
    let l = window.n_samples();
    let mut out = Vec::with_capacity(CSI_HEADER_LEN + 8 * l + 8 * window.samples().len());
    out.extend_from_slice(CSI_MAGIC);
    for dim in [window.n_antennas(), window.n_subcarriers(), l] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&window.carrier_freq_hz.to_le_bytes());
    out.extend_from_slice(&window.subcarrier_spacing_hz.to_le_bytes());
    for t in window.timestamps() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for z in window.samples() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], pos: usize) -> u32 {
    u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], pos: usize) -> f64 {
    f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap())
}

fn f32_at(bytes: &[u8], pos: usize) -> f64 {
    f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as f64
}

/// Parses a window. `base_offset` is added to reported byte offsets (for
/// bodies embedded in larger buffers).
pub fn decode_csi(bytes: &[u8], base_offset: u64) -> Result<CsiWindow> {
    if bytes.len() < CSI_MAGIC.len() || &bytes[..8] != CSI_MAGIC {
        return Err(Error::BadMagic {
            offset: base_offset,
            expected: "WSCSI001",
        });
    }
    if bytes.len() < CSI_HEADER_LEN {
        return Err(Error::SizeMismatch {
            expected: CSI_HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let n = u32_at(bytes, 8) as u64;
    let m = u32_at(bytes, 12) as u64;
    let l = u32_at(bytes, 16) as u64;
    for (value, pos, what) in [
        (n, 8, "antennas"),
        (m, 12, "subcarriers"),
        (l, 16, "samples"),
    ] {
        if value == 0 {
            return Err(Error::EmptyDimension {
                offset: base_offset + pos,
                what,
            });
        }
    }
    let fc = f64_at(bytes, 20);
    let df = f64_at(bytes, 28);
    if !(fc.is_finite() && fc > 0.0 && df.is_finite() && df > 0.0) {
        return Err(Error::InvalidInput(format!(
            "header at byte offset {} has non-positive frequencies ({fc}, {df})",
            base_offset + 20
        )));
    }
    let expected = CSI_HEADER_LEN as u64 + 8 * l + 8 * n * m * l;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let (n, m, l) = (n as usize, m as usize, l as usize);
    let mut timestamps = Vec::with_capacity(l);
    for k in 0..l {
        let pos = CSI_HEADER_LEN + 8 * k;
        let t = f64_at(bytes, pos);
        if !t.is_finite() || timestamps.last().is_some_and(|&prev| !(t > prev)) {
            return Err(Error::NonMonotoneTimestamps {
                index: k,
                offset: base_offset + pos as u64,
            });
        }
        timestamps.push(t);
    }
    if l < 2 {
        return Err(Error::InvalidInput(
            "a CSI window needs at least 2 samples".into(),
        ));
    }
    let payload = CSI_HEADER_LEN + 8 * l;
    let samples = (0..n * m * l)
        .map(|e| {
            Complex64::new(
                f32_at(bytes, payload + 8 * e),
                f32_at(bytes, payload + 8 * e + 4),
            )
        })
        .collect();
    CsiWindow::new(n, m, samples, timestamps, fc, df)
}

pub fn write_csi_file(window: &CsiWindow, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_csi(window))?;
    Ok(())
}

pub fn read_csi_file(path: impl AsRef<Path>) -> Result<CsiWindow> {
    decode_csi(&fs::read(path)?, 0)
}
