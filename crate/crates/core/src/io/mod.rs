//! File formats, stream ingestion and CSV reports.

mod csi_file;
mod reports;
mod stream;

pub use csi_file::{
    decode_csi, encode_csi, read_csi_file, write_csi_file, CSI_HEADER_LEN, CSI_MAGIC,
};
pub use reports::{
    read_detections, read_features, read_ground_truth, read_heights, write_detections,
    write_features, write_ground_truth, write_heights, DetectionRecord, HeightRecord,
};
pub use stream::{
    ingest_frames, ingest_udp, split_sessions, StreamAssembler, StreamFrame, FRAME_HEADER_LEN,
    FRAME_MAGIC,
};
