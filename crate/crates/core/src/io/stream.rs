//! Session datagrams and window reassembly.
//!
//! A frame is a 16-byte header (`"WSFRM001"`, window id u32 LE, session id
//! u16 LE, flags u16 LE, flags reserved) followed by a CSI-file body holding
//! one session's samples.

use std::io::ErrorKind;
use std::net::UdpSocket;
use std::time::Duration;

use num_complex::Complex64;

use super::csi_file::{decode_csi, encode_csi};
use crate::error::{Error, Result};
use crate::schedule::median_interval;
use crate::window::CsiWindow;

pub const FRAME_MAGIC: &[u8; 8] = b"WSFRM001";
pub const FRAME_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamFrame {
    pub window_id: u32,
    pub session_id: u16,
    pub flags: u16,
    pub body: CsiWindow,
}

impl StreamFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN);
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&self.window_id.to_le_bytes());
        out.extend_from_slice(&self.session_id.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        out.extend(encode_csi(&self.body));
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_LEN || &bytes[..8] != FRAME_MAGIC {
            return Err(Error::BadMagic {
                offset: 0,
                expected: "WSFRM001",
            });
        }
        Ok(Self {
            window_id: u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            session_id: u16::from_le_bytes(bytes[12..14].try_into().unwrap()),
            flags: u16::from_le_bytes(bytes[14..16].try_into().unwrap()),
            body: decode_csi(&bytes[FRAME_HEADER_LEN..], FRAME_HEADER_LEN as u64)?,
        })
    }
}

/// Splits a window into one frame per session (a gap longer than twice the
/// median sample interval starts a new session).
pub fn split_sessions(window: &CsiWindow, window_id: u32) -> Result<Vec<StreamFrame>> {
    let t = window.timestamps();
    let limit = 2.0 * median_interval(t);
    let mut bounds = vec![0];
    bounds.extend((1..t.len()).filter(|&k| t[k] - t[k - 1] > limit));
    bounds.push(t.len());
    let (n, m) = (window.n_antennas(), window.n_subcarriers());
    let mut frames = Vec::new();
    for (s, span) in bounds.windows(2).enumerate() {
        let (a, b) = (span[0], span[1]);
        let mut samples = Vec::with_capacity(n * m * (b - a));
        for i in 0..n {
            for j in 0..m {
                samples.extend_from_slice(&window.series(i, j)[a..b]);
            }
        }
        frames.push(StreamFrame {
            window_id,
            session_id: s as u16,
            flags: 0,
            body: CsiWindow::new(
                n,
                m,
                samples,
                t[a..b].to_vec(),
                window.carrier_freq_hz,
                window.subcarrier_spacing_hz,
            )?,
        });
    }
    Ok(frames)
}

/// Collects session frames into windows. A window closes when a frame for
/// a later window id arrives or on [`StreamAssembler::flush`]. Invalid,
/// late, inconsistent or overlapping frames are dropped and counted.
#[derive(Debug, Default)]
pub struct StreamAssembler {
    current: Option<u32>,
    pending: Vec<StreamFrame>,
    dropped: usize,
}

impl StreamAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Feeds one datagram; returns a completed window if this frame closed one.
    pub fn push_datagram(&mut self, bytes: &[u8]) -> Option<(u32, CsiWindow)> {
        match StreamFrame::decode(bytes) {
            Ok(frame) => self.push_frame(frame),
            Err(e) => {
                log::warn!("dropping frame: {e}");
                self.dropped += 1;
                None
            }
        }
    }

    pub fn push_frame(&mut self, frame: StreamFrame) -> Option<(u32, CsiWindow)> {
        match self.current {
            Some(id) if frame.window_id < id => {
                log::warn!(
                    "dropping late frame for window {} (assembling {id})",
                    frame.window_id
                );
                self.dropped += 1;
                None
            }
            Some(id) if frame.window_id == id => {
                self.pending.push(frame);
                None
            }
            _ => {
                let done = self.flush();
                self.current = Some(frame.window_id);
                self.pending.push(frame);
                done
            }
        }
    }

    /// Emits whatever the current window holds.
    pub fn flush(&mut self) -> Option<(u32, CsiWindow)> {
        let id = self.current?;
        let mut frames = std::mem::take(&mut self.pending);
        if frames.is_empty() {
            return None;
        }
        frames.sort_by(|a, b| a.body.timestamps()[0].total_cmp(&b.body.timestamps()[0]));
        let first = &frames[0].body;
        let shape = (
            first.n_antennas(),
            first.n_subcarriers(),
            first.carrier_freq_hz,
            first.subcarrier_spacing_hz,
        );
        let mut kept: Vec<&CsiWindow> = Vec::new();
        for f in &frames {
            let b = &f.body;
            let same = (
                b.n_antennas(),
                b.n_subcarriers(),
                b.carrier_freq_hz,
                b.subcarrier_spacing_hz,
            ) == shape;
            let after = kept
                .last()
                .is_none_or(|k| b.timestamps()[0] > k.timestamps()[k.n_samples() - 1]);
            if same && after {
                kept.push(b);
            } else {
                log::warn!(
                    "dropping inconsistent session {} of window {id}",
                    f.session_id
                );
                self.dropped += 1;
            }
        }
        let (n, m) = (shape.0, shape.1);
        let timestamps: Vec<f64> = kept
            .iter()
            .flat_map(|b| b.timestamps().iter().copied())
            .collect();
        let mut samples: Vec<Complex64> = Vec::with_capacity(n * m * timestamps.len());
        for i in 0..n {
            for j in 0..m {
                for b in &kept {
                    samples.extend_from_slice(b.series(i, j));
                }
            }
        }
        match CsiWindow::new(n, m, samples, timestamps, shape.2, shape.3) {
            Ok(w) => Some((id, w)),
            Err(e) => {
                log::warn!("dropping window {id}: {e}");
                None
            }
        }
    }
}

/// Reassembles a finite sequence of datagrams; returns windows and the drop count.
pub fn ingest_frames<I, B>(datagrams: I) -> (Vec<(u32, CsiWindow)>, usize)
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    let mut asm = StreamAssembler::new();
    let mut out: Vec<(u32, CsiWindow)> = datagrams
        .into_iter()
        .filter_map(|d| asm.push_datagram(d.as_ref()))
        .collect();
    out.extend(asm.flush());
    (out, asm.dropped())
}

/// Receives datagrams until no frame arrives for `idle_timeout`, handing
/// each completed window to `sink`. Returns the drop count.
pub fn ingest_udp(
    socket: &UdpSocket,
    idle_timeout: Duration,
    mut sink: impl FnMut(u32, CsiWindow),
) -> Result<usize> {
    socket.set_read_timeout(Some(idle_timeout))?;
    let mut asm = StreamAssembler::new();
    let mut buf = vec![0u8; 65_536];
    loop {
        match socket.recv(&mut buf) {
            Ok(len) => {
                if let Some((id, w)) = asm.push_datagram(&buf[..len]) {
                    sink(id, w);
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => break,
            Err(e) => return Err(e.into()),
        }
    }
    if let Some((id, w)) = asm.flush() {
        sink(id, w);
    }
    Ok(asm.dropped())
}
