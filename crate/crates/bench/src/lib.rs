//! Inputs shared by the benchmarks.

use v2xviz_core::j2735::{decode_frame, MessageFrame};
use v2xviz_core::scenario::*;
use v2xviz_core::CaptureFile;

/// 30 s of four-way traffic, three vehicles per side and a pedestrian.
pub fn traffic_capture() -> CaptureFile {
    let cfg = TrafficIntersectionConfig {
        include_pedestrian: true,
        approaches: [ApproachTraffic { count: 3, ..Default::default() }; 4],
        ..Default::default()
    };
    synth_traffic_intersection(&cfg).expect("valid config")
}

/// 30 s of the signalized crossing with one walk request.
pub fn signal_capture() -> CaptureFile {
    let cfg = SignalIntersectionConfig { duration_s: 30.0, button_presses: vec![5.0], ..Default::default() };
    synth_signal_intersection(&cfg).expect("valid config")
}

/// The first frame of each message type in `c`.
pub fn one_of_each(c: &CaptureFile) -> Vec<MessageFrame> {
    let mut out: Vec<MessageFrame> = Vec::new();
    for r in &c.records {
        let f = decode_frame(&r.payload).expect("synthetic records decode");
        if !out.iter().any(|o| o.message_id() == f.message_id()) {
            out.push(f);
        }
    }
    out
}
