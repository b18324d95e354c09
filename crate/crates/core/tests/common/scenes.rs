//! Fixed scenes shared by the render, IMA and acceptance tests.

use std::collections::BTreeMap;

use v2xviz_core::geo::{from_local, GeoPoint, LocalPoint};
use v2xviz_core::j2735::{decode_frame, encode_frame, BsmCore, MapData, MessageFrame, Role, SpatData, TemporaryId};
use v2xviz_core::pcap::{CaptureFile, CaptureRecord, TimeResolution};
use v2xviz_core::render::{render_intersection_frame, render_users_frame, Frame, Viewport};
use v2xviz_core::scenario::*;

use super::data_dir;

/// Compares `actual` with the checked-in file, rewriting it first when
/// `V2XVIZ_BLESS` is set.
pub fn assert_golden(name: &str, actual: &str) {
    let path = data_dir().join(name);
    if std::env::var_os("V2XVIZ_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(golden == actual, "{name} drifted from the golden file (rerun with V2XVIZ_BLESS=1 after review)");
}

/// Latest MAP, SPaT and per-user BSM at or before `t_ns` after the capture start.
pub fn state_at(c: &CaptureFile, t_ns: u64) -> (Option<MapData>, Option<SpatData>, Vec<BsmCore>) {
    let t0 = c.timestamp_nanos(0);
    let (mut map, mut spat, mut users) = (None, None, BTreeMap::new());
    for (i, r) in c.records.iter().enumerate() {
        if c.timestamp_nanos(i) - t0 > t_ns {
            break;
        }
        match decode_frame(&r.payload).unwrap() {
            MessageFrame::Map(m) => map = Some(m),
            MessageFrame::Spat(s) => spat = Some(s),
            MessageFrame::Bsm(b) => {
                users.insert(b.temporary_id, b);
            }
        }
    }
    (map, spat, users.into_values().collect())
}

/// Mid-block crossing five seconds into a walk requested at t = 2 s.
pub fn intersection_frame() -> Frame {
    let cfg = SignalIntersectionConfig { duration_s: 10.0, button_presses: vec![2.0], ..Default::default() };
    let c = synth_signal_intersection(&cfg).unwrap();
    let (map, spat, _) = state_at(&c, 7_000_000_000);
    let vp = Viewport::new(cfg.reference, 0.2, 800, 400).unwrap();
    render_intersection_frame(&map.unwrap(), &spat.unwrap(), &vp).unwrap()
}

/// Four-way intersection three seconds in: one vehicle per approach and a
/// pedestrian on the north crosswalk.
pub fn users_frame() -> Frame {
    let cfg = TrafficIntersectionConfig {
        include_pedestrian: true,
        approaches: [ApproachTraffic { count: 1, start_m: 60.0, ..Default::default() }; 4],
        ..Default::default()
    };
    let c = synth_traffic_intersection(&cfg).unwrap();
    let (map, _, users) = state_at(&c, 3_000_000_000);
    let vp = Viewport::new(cfg.reference, 0.25, 800, 800).unwrap();
    render_users_frame(&users, &map.unwrap(), &vp)
}

pub fn count(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}

pub const STALE_REFERENCE: GeoPoint = GeoPoint { lat_deg: 40.0, lon_deg: -83.0, elev_m: 250.0 };
pub const STOPPING_ID: TemporaryId = TemporaryId([0xA0, 0, 0, 1]);
pub const STEADY_ID: TemporaryId = TemporaryId([0xA0, 0, 0, 2]);
/// The stopping vehicle's last BSM, seconds after the capture start.
pub const STOPPING_LAST_S: f64 = 3.0;

fn parked(id: TemporaryId, east_m: f64, sec_mark: u16) -> BsmCore {
    let (lat, lon) = from_local(&STALE_REFERENCE, &LocalPoint::new(east_m, 20.0, 0.0)).lat_lon_counts();
    BsmCore {
        msg_count: 0,
        temporary_id: id,
        sec_mark,
        latitude: lat as i32,
        longitude: lon as i32,
        elevation: 2500,
        speed: 250,
        heading: 0,
        role: Role::Vehicle,
    }
}

/// Two vehicles at 10 Hz; the first goes silent after 3.0 s, the second
/// keeps publishing until 6.0 s.
pub fn stopping_vehicle_capture() -> CaptureFile {
    let base = 1_600_000_000u64 * 1_000_000_000;
    let mut c = CaptureFile::new(147);
    for k in 0..=60u64 {
        let t = k * 100_000_000;
        let sm = sec_mark_for(base + t);
        if k <= 30 {
            c.records.push(CaptureRecord::at_nanos(base + t, TimeResolution::Micro, encode_frame(&MessageFrame::Bsm(parked(STOPPING_ID, -10.0, sm))).unwrap()));
        }
        c.records.push(CaptureRecord::at_nanos(base + t, TimeResolution::Micro, encode_frame(&MessageFrame::Bsm(parked(STEADY_ID, 10.0, sm))).unwrap()));
    }
    c
}

pub const GRID_DISTANCES: std::ops::RangeInclusive<u32> = 0..=40;
pub const GRID_SPEEDS: std::ops::RangeInclusive<u32> = 1..=20;

/// Exact integer form of the warning inequality with t_safety = 3 s:
/// |d_h/v_h - d_r/v_r| < 3/2  <=>  2|d_h*v_r - d_r*v_h| < 3*v_h*v_r.
pub fn grid_oracle(d_h: i64, v_h: i64, d_r: i64, v_r: i64) -> bool {
    2 * (d_h * v_r - d_r * v_h).abs() < 3 * v_h * v_r
}

/// Runs every grid point through BSM encoding, decoding, tracking and
/// evaluation (remote on the north approach, host on the east approach)
/// and returns the points where the warning disagrees with the oracle.
pub fn ima_grid_mismatches() -> (usize, Vec<(u32, u32, u32, u32)>) {
    use v2xviz_core::ima::{HostState, ImaApp, ImaConfig};
    let reference = GeoPoint::new(40.0, -83.0, 250.0);
    let hosts: Vec<(u32, u32, HostState)> = GRID_DISTANCES
        .flat_map(|k| GRID_SPEEDS.map(move |v| (5 * k, v)))
        .map(|(d, v)| (d, v, HostState::new(from_local(&reference, &LocalPoint::new(f64::from(d), 0.0, 0.0)), f64::from(v), 270.0).unwrap()))
        .collect();
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for k in GRID_DISTANCES {
        let d_r = 5 * k;
        for v_r in GRID_SPEEDS {
            let (lat, lon) = from_local(&reference, &LocalPoint::new(0.0, f64::from(d_r), 0.0)).lat_lon_counts();
            let bsm = BsmCore {
                msg_count: 0,
                temporary_id: TemporaryId::from_u32(0x5A00_0000 | d_r << 8 | v_r),
                sec_mark: 0,
                latitude: lat as i32,
                longitude: lon as i32,
                elevation: 2500,
                speed: (v_r * 50) as u16,
                heading: 14_400,
                role: Role::Vehicle,
            };
            let wire = encode_frame(&MessageFrame::Bsm(bsm)).unwrap();
            let MessageFrame::Bsm(received) = decode_frame(&wire).unwrap() else { panic!("not a BSM") };
            let mut app = ImaApp::new(ImaConfig::new(reference, 3.0, 2.0).unwrap());
            app.observe(&received, 0.0);
            for (d_h, v_h, host) in &hosts {
                let warned = app.evaluate(host, 0.0).warning;
                if warned != grid_oracle(i64::from(*d_h), i64::from(*v_h), i64::from(d_r), i64::from(v_r)) {
                    mismatches.push((*d_h, *v_h, d_r, v_r));
                }
                checked += 1;
            }
        }
    }
    (checked, mismatches)
}

pub struct Loopback {
    pub report: v2xviz_core::replay::ReplayReport,
    pub frames: Vec<MessageFrame>,
    pub stats: v2xviz_core::replay::ListenStats,
}

/// Replays `capture` to a listener on 127.0.0.1 and collects what arrives.
/// `before` datagrams are sent first from a separate socket.
pub fn loopback(capture: &CaptureFile, speed: f64, before: &[&[u8]]) -> Loopback {
    use v2xviz_core::pcap::Encapsulation;
    use v2xviz_core::replay::{replay, Listener, ReplayConfig, StopHandle};
    let listener = Listener::bind_addr("127.0.0.1:0".parse().unwrap()).unwrap();
    let addr = listener.local_addr().unwrap();
    let stop = StopHandle::new();
    let rx = {
        let stop = stop.clone();
        std::thread::spawn(move || {
            let mut frames = Vec::new();
            let stats = listener.run(|m| frames.push(m.frame), &stop).unwrap();
            (frames, stats)
        })
    };
    let probe = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    for d in before {
        probe.send_to(d, addr).unwrap();
    }
    let report = replay(capture, &ReplayConfig::new(addr, speed, 1).unwrap(), Encapsulation::default()).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(200));
    stop.stop();
    let (frames, stats) = rx.join().unwrap();
    Loopback { report, frames, stats }
}

/// `n` BSMs spaced `spacing_ms` apart.
pub fn bsm_train(n: u32, spacing_ms: u64) -> CaptureFile {
    let base = 1_600_000_000u64 * 1_000_000_000;
    let mut c = CaptureFile::new(147);
    for k in 0..u64::from(n) {
        let t = base + k * spacing_ms * 1_000_000;
        let mut b = parked(TemporaryId::from_u32(0x5A00_0000 + k as u32), 5.0 * k as f64, sec_mark_for(t));
        b.msg_count = (k % 128) as u8;
        c.records.push(CaptureRecord::at_nanos(t, TimeResolution::Micro, encode_frame(&MessageFrame::Bsm(b)).unwrap()));
    }
    c
}
