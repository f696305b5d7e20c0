//! Session framing, reassembly and UDP ingestion.

use std::net::UdpSocket;
use std::time::Duration;

use watersense::io::{
    ingest_frames, ingest_udp, read_csi_file, split_sessions, write_csi_file, StreamAssembler,
    StreamFrame, FRAME_HEADER_LEN,
};
use watersense::schedule::count_sessions;
use watersense::simulator::{PathModel, SimulationSpec};
use watersense::{CsiWindow, SystemConfig};

fn lab_window(system: SystemConfig, index: usize) -> CsiWindow {
    let spec = SimulationSpec::lab(system, 0.035, 480.0, PathModel::PaperLinear, 150e-9).unwrap();
    spec.simulate_window(index).unwrap().quantized_f32()
}

fn datagrams(window: &CsiWindow, id: u32) -> Vec<Vec<u8>> {
    split_sessions(window, id)
        .unwrap()
        .iter()
        .map(StreamFrame::encode)
        .collect()
}

#[test]
fn fourteen_sessions_make_one_window() {
    let w = lab_window(SystemConfig::mmwave_lab(), 0);
    let frames = datagrams(&w, 7);
    assert_eq!(frames.len(), 14);
    let (windows, dropped) = ingest_frames(&frames);
    assert_eq!(dropped, 0);
    assert_eq!(windows.len(), 1);
    assert_eq!(windows[0].0, 7);
    assert_eq!(windows[0].1, w);
    assert_eq!(count_sessions(windows[0].1.timestamps()), 14);
}

#[test]
fn session_order_does_not_matter() {
    let w = lab_window(SystemConfig::mmwave_lab(), 1);
    let mut frames = datagrams(&w, 1);
    let (in_order, _) = ingest_frames(&frames);
    frames.swap(0, 2);
    frames.swap(5, 11);
    frames.reverse();
    let (shuffled, dropped) = ingest_frames(&frames);
    assert_eq!(dropped, 0);
    assert_eq!(in_order, shuffled);
}

#[test]
fn corrupted_frame_is_dropped_and_counted() {
    let w = lab_window(SystemConfig::mmwave_lab(), 0);
    let mut frames = datagrams(&w, 3);
    let per_session = w.n_samples() / 14;
    // Break the body magic of one session.
    frames[6][FRAME_HEADER_LEN] ^= 0xff;
    let (windows, dropped) = ingest_frames(&frames);
    assert_eq!(dropped, 1);
    assert_eq!(windows.len(), 1);
    assert_eq!(windows[0].1.n_samples(), 13 * per_session);
    assert_eq!(count_sessions(windows[0].1.timestamps()), 13);

    // A truncated datagram is counted the same way.
    let mut frames = datagrams(&w, 3);
    let len = frames[2].len();
    frames[2].truncate(len - 5);
    assert_eq!(ingest_frames(&frames).1, 1);
}

#[test]
fn windows_close_on_later_id_and_late_frames_drop() {
    let a = lab_window(SystemConfig::mmwave_lab(), 0);
    let b = lab_window(SystemConfig::mmwave_lab(), 1);
    let mut frames = datagrams(&a, 0);
    let late = frames.pop().unwrap();
    frames.extend(datagrams(&b, 1));
    frames.push(late);
    let (windows, dropped) = ingest_frames(&frames);
    assert_eq!(dropped, 1);
    assert_eq!(windows.iter().map(|w| w.0).collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(windows[0].1.n_samples(), a.n_samples() / 14 * 13);
    assert_eq!(windows[1].1, b);
}

#[test]
fn mismatched_session_shape_is_dropped() {
    let a = lab_window(SystemConfig::mmwave_lab(), 0);
    let mut other = SystemConfig::mmwave_lab();
    other.num_subcarriers = 8;
    let b = lab_window(other, 0);
    let mut asm = StreamAssembler::new();
    for f in split_sessions(&a, 0).unwrap() {
        assert!(asm.push_frame(f).is_none());
    }
    let mut odd = split_sessions(&b, 0).unwrap().remove(3);
    odd.session_id = 99;
    assert!(asm.push_frame(odd).is_none());
    let (_, w) = asm.flush().unwrap();
    assert_eq!(asm.dropped(), 1);
    assert_eq!(w, a);
}

#[test]
fn empty_stream_yields_nothing() {
    let (windows, dropped) = ingest_frames(Vec::<Vec<u8>>::new());
    assert!(windows.is_empty());
    assert_eq!(dropped, 0);
}

#[test]
fn csi_file_round_trip_through_disk() {
    let w = lab_window(SystemConfig::lte_lab(), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csi");
    write_csi_file(&w, &path).unwrap();
    assert_eq!(read_csi_file(&path).unwrap(), w);
}

#[test]
fn udp_loopback() {
    // Keep each session datagram well under the 65507-byte UDP limit.
    let mut system = SystemConfig::mmwave_lab();
    system.num_subcarriers = 8;
    let windows: Vec<CsiWindow> = (0..2).map(|i| lab_window(system.clone(), i)).collect();

    let rx = UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = rx.local_addr().unwrap();
    let receiver = std::thread::spawn(move || {
        let mut got = Vec::new();
        let dropped =
            ingest_udp(&rx, Duration::from_millis(500), |id, w| got.push((id, w))).unwrap();
        (got, dropped)
    });
    let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
    tx.connect(addr).unwrap();
    for (id, w) in windows.iter().enumerate() {
        for d in datagrams(w, id as u32) {
            assert!(d.len() < 65_507);
            tx.send(&d).unwrap();
            // Pace the sender so the loopback buffer never overflows.
            std::thread::sleep(Duration::from_millis(2));
        }
    }
    tx.send(b"not a frame").unwrap();
    let (got, dropped) = receiver.join().unwrap();
    assert_eq!(dropped, 1);
    assert_eq!(got.len(), 2);
    for (id, w) in got {
        assert_eq!(w, windows[id as usize]);
    }
}
