//! Turning captures into test scenarios: isolate BSM traffic, move it to
//! another intersection, keep only one approach, and synthesize captures of
//! a pedestrian-actuated mid-block crossing and of a four-way intersection.

use thiserror::Error;

use crate::geo::{self, angular_distance, bearing_deg, from_local, to_local, GeoError, GeoPoint, LocalPoint};
use crate::j2735::{
    decode_frame, encode_frame, BsmCore, CodecError, Lane, LaneType, MapData, MessageFrame, MovementPhase, MovementState,
    NodeXY, Position3D, Role, SpatData, TemporaryId, DEG_PER_HEADING_COUNT, ELEVATION_UNAVAILABLE, HEADING_UNAVAILABLE,
    MIN_END_TIME_MAX, MPS_PER_SPEED_COUNT,
};
use crate::pcap::{extract_payload, rewrap_payload, CaptureFile, CaptureRecord, Encapsulation, PcapError, TimeResolution, LINKTYPE_USER0};

const NANOS_PER_S: u64 = 1_000_000_000;
const TENTH_NS: u64 = 100_000_000;
const HEADING_COUNTS: i64 = 28_800;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("record {index} is not a BSM")]
    NotBsm { index: usize },
    #[error("duration must be positive")]
    InvalidDuration,
    #[error("button press at {0} s is outside the capture duration")]
    InvalidPressTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Pcap(#[from] PcapError),
}

/// Rigid move of a recorded constellation: rotate clockwise by
/// `delta_heading_deg` about `src_ref`, then translate `src_ref` onto `dst_ref`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelocationSpec {
    pub src_ref: GeoPoint,
    pub dst_ref: GeoPoint,
    pub delta_heading_deg: f64,
}

impl RelocationSpec {
    pub fn new(src_ref: GeoPoint, dst_ref: GeoPoint, delta_heading_deg: f64) -> Result<Self, ScenarioError> {
        if !(0.0..360.0).contains(&delta_heading_deg) {
            return Err(ScenarioError::InvalidParameter(format!("delta heading {delta_heading_deg} not in [0, 360)")));
        }
        Ok(RelocationSpec { src_ref, dst_ref, delta_heading_deg })
    }
}

/// Sector of compass bearings (seen from the intersection) to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachFilter {
    pub center_bearing_deg: f64,
    pub half_width_deg: f64,
}

impl ApproachFilter {
    pub fn new(center_bearing_deg: f64, half_width_deg: f64) -> Result<Self, ScenarioError> {
        if !(half_width_deg > 0.0 && half_width_deg <= 180.0) {
            return Err(ScenarioError::InvalidParameter(format!("half width {half_width_deg} not in (0, 180]")));
        }
        Ok(ApproachFilter { center_bearing_deg, half_width_deg })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IsolateSummary {
    pub kept: usize,
    pub other_messages: usize,
    pub undecodable: usize,
}

fn decode_record(record: &CaptureRecord, encap: Encapsulation) -> Option<MessageFrame> {
    extract_payload(record, encap).ok().and_then(|p| decode_frame(p).ok())
}

/// Keeps the records carrying a BSM, in order and with their timestamps.
pub fn isolate_bsm(capture: &CaptureFile, encap: Encapsulation) -> (CaptureFile, IsolateSummary) {
    let mut out = capture.empty_like();
    let mut summary = IsolateSummary::default();
    for r in &capture.records {
        match decode_record(r, encap) {
            Some(MessageFrame::Bsm(_)) => {
                summary.kept += 1;
                out.records.push(r.clone());
            }
            Some(_) => summary.other_messages += 1,
            None => summary.undecodable += 1,
        }
    }
    (out, summary)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RelocateSummary {
    pub relocated: usize,
    /// BSMs without a position, passed through unchanged.
    pub unavailable_position: usize,
}

/// Applies `spec` to one BSM. Positions round to the nearest 1e-7 deg and
/// headings to the nearest count, ties away from zero.
pub fn relocate_bsm(bsm: &BsmCore, spec: &RelocationSpec) -> Result<BsmCore, ScenarioError> {
    let p = GeoPoint::from_counts(bsm.latitude, bsm.longitude, 0);
    let mut lp = to_local(&GeoPoint { elev_m: 0.0, ..spec.src_ref }, &p)?;
    lp.up_m = 0.0;
    let q = from_local(&GeoPoint { elev_m: 0.0, ..spec.dst_ref }, &lp.rotated(spec.delta_heading_deg));
    let (lat, mut lon) = q.lat_lon_counts();
    if lon == -1_800_000_000 {
        lon = 1_800_000_000;
    }
    let mut out = *bsm;
    out.latitude = i32::try_from(lat).map_err(|_| CodecError::OutOfRange { field: "latitude", detail: lat.to_string() })?;
    out.longitude = i32::try_from(lon).map_err(|_| CodecError::OutOfRange { field: "longitude", detail: lon.to_string() })?;
    if bsm.elevation != ELEVATION_UNAVAILABLE {
        let d = ((spec.dst_ref.elev_m - spec.src_ref.elev_m) * 10.0).round() as i64;
        let e = i64::from(bsm.elevation) + d;
        out.elevation = i32::try_from(e).map_err(|_| CodecError::OutOfRange { field: "elevation", detail: e.to_string() })?;
    }
    if bsm.heading != HEADING_UNAVAILABLE {
        let d = (spec.delta_heading_deg / DEG_PER_HEADING_COUNT).round() as i64;
        out.heading = (i64::from(bsm.heading) + d).rem_euclid(HEADING_COUNTS) as u16;
    }
    Ok(out)
}

/// Moves every BSM in `capture` per `spec` and re-encodes it in place.
pub fn relocate(capture: &CaptureFile, spec: &RelocationSpec, encap: Encapsulation) -> Result<(CaptureFile, RelocateSummary), ScenarioError> {
    let mut out = capture.empty_like();
    let mut summary = RelocateSummary::default();
    for (index, r) in capture.records.iter().enumerate() {
        let bsm = match decode_record(r, encap) {
            Some(MessageFrame::Bsm(b)) => b,
            _ => return Err(ScenarioError::NotBsm { index }),
        };
        if !bsm.has_position() {
            summary.unavailable_position += 1;
            out.records.push(r.clone());
            continue;
        }
        let moved = relocate_bsm(&bsm, spec)?;
        let bytes = encode_frame(&MessageFrame::Bsm(moved))?;
        out.records.push(rewrap_payload(r, encap, &bytes)?);
        summary.relocated += 1;
    }
    Ok((out, summary))
}

/// True when the BSM lies inside the filter's sector around `intersection_ref`
/// and its heading is within 90 degrees of the bearing back to the intersection.
pub fn is_approaching(bsm: &BsmCore, intersection_ref: &GeoPoint, filter: &ApproachFilter) -> bool {
    let (Some(lat), Some(lon), Some(heading)) = (bsm.lat_deg(), bsm.lon_deg(), bsm.heading_deg()) else {
        return false;
    };
    let Ok(lp) = to_local(intersection_ref, &GeoPoint::new(lat, lon, intersection_ref.elev_m)) else {
        return false;
    };
    let Ok(from_center) = bearing_deg(&LocalPoint::default(), &lp) else {
        return false;
    };
    if angular_distance(from_center, filter.center_bearing_deg) > filter.half_width_deg {
        return false;
    }
    angular_distance(heading, geo::normalize_deg(from_center + 180.0)) < 90.0
}

/// Keeps the BSM records whose road user approaches from the filter's sector.
pub fn filter_approaching(capture: &CaptureFile, intersection_ref: &GeoPoint, filter: &ApproachFilter, encap: Encapsulation) -> CaptureFile {
    let mut out = capture.empty_like();
    out.records = capture
        .records
        .iter()
        .filter(|r| matches!(decode_record(r, encap), Some(MessageFrame::Bsm(b)) if is_approaching(&b, intersection_ref, filter)))
        .cloned()
        .collect();
    out
}

/// Milliseconds within the minute for an epoch timestamp.
pub fn sec_mark_for(nanos: u64) -> u16 {
    ((nanos / 1_000_000) % 60_000) as u16
}

fn duration_ns(duration_s: f64) -> Result<u64, ScenarioError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(ScenarioError::InvalidDuration);
    }
    Ok((duration_s * 1e9).round() as u64)
}

fn push_frame(capture: &mut CaptureFile, nanos: u64, frame: &MessageFrame) -> Result<(), ScenarioError> {
    let bytes = encode_frame(frame)?;
    capture.records.push(CaptureRecord::at_nanos(nanos, TimeResolution::Micro, bytes));
    Ok(())
}

fn node(east_m: f64, north_m: f64) -> NodeXY {
    NodeXY { x_cm: (east_m * 100.0).round() as i16, y_cm: (north_m * 100.0).round() as i16 }
}

fn position3d(p: &GeoPoint) -> Position3D {
    let (lat, lon) = p.lat_lon_counts();
    Position3D { latitude: lat as i32, longitude: lon as i32, elevation: (p.elev_m * 10.0).round() as i32 }
}

/// What the idle (no pedestrian request) green reports as remaining time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PedestalBehavior {
    /// Whole seconds since the green started, 0, 10, 20, ... tenths, wrapping
    /// back to zero after `wrap_s` seconds.
    CountUp { wrap_s: u32 },
    /// Counts down from one second to zero, then jumps back up to one second.
    OneSecondCycle,
}

impl Default for PedestalBehavior {
    fn default() -> Self {
        PedestalBehavior::CountUp { wrap_s: 60 }
    }
}

/// Straight road with a pedestrian-actuated crosswalk.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalIntersectionConfig {
    pub duration_s: f64,
    pub pedestal: PedestalBehavior,
    /// Seconds from the capture start.
    pub button_presses: Vec<f64>,
    pub walk_s: f64,
    pub reference: GeoPoint,
    pub intersection_id: u16,
    pub start_epoch_s: u32,
}

impl Default for SignalIntersectionConfig {
    fn default() -> Self {
        SignalIntersectionConfig {
            duration_s: 60.0,
            pedestal: PedestalBehavior::default(),
            button_presses: Vec::new(),
            walk_s: 10.0,
            reference: GeoPoint::new(39.9586, -83.0601, 230.0),
            intersection_id: 1201,
            start_epoch_s: 1_600_000_020,
        }
    }
}

pub const CROSSWALK_SIGNAL_GROUP: u8 = 1;
pub const VEHICLE_SIGNAL_GROUP: u8 = 2;

const LANE_WIDTH_M: f64 = 3.6;

/// MAP of the mid-block crossing: the road runs east-west; two westbound
/// approach lanes east of the crosswalk, two eastbound approach lanes west of
/// it, and the crosswalk itself across the road.
pub fn signal_intersection_map(reference: &GeoPoint, intersection_id: u16) -> MapData {
    let w = LANE_WIDTH_M;
    let mut lanes = Vec::new();
    for (i, y) in [0.5 * w, 1.5 * w].into_iter().enumerate() {
        lanes.push(Lane { lane_id: 1 + i as u8, lane_type: LaneType::Vehicle, nodes: vec![node(4.0, y), node(30.0, y), node(60.0, y)] });
    }
    for (i, y) in [-0.5 * w, -1.5 * w].into_iter().enumerate() {
        lanes.push(Lane { lane_id: 3 + i as u8, lane_type: LaneType::Vehicle, nodes: vec![node(-4.0, y), node(-30.0, y), node(-60.0, y)] });
    }
    lanes.push(Lane { lane_id: 5, lane_type: LaneType::Crosswalk, nodes: vec![node(0.0, -2.5 * w), node(0.0, 2.5 * w)] });
    MapData { intersection_id, ref_point: position3d(reference), lane_width: (w * 100.0) as u16, lanes }
}

/// Signal state of the crossing at `t_ns` after the start, with presses
/// already resolved into walk intervals `(start, end]` in nanoseconds.
fn crossing_phase(cfg: &SignalIntersectionConfig, walks: &[(u64, u64)], t_ns: u64) -> [MovementState; 2] {
    if let Some(&(_, end)) = walks.iter().find(|&&(s, e)| s < t_ns && t_ns <= e) {
        let remaining = (end - t_ns).div_ceil(TENTH_NS).min(u64::from(MIN_END_TIME_MAX)) as u16;
        return [
            MovementState { signal_group: CROSSWALK_SIGNAL_GROUP, event_state: MovementPhase::PermissiveMovementAllowed, min_end_time: remaining },
            MovementState { signal_group: VEHICLE_SIGNAL_GROUP, event_state: MovementPhase::StopAndRemain, min_end_time: remaining },
        ];
    }
    let idle_start = walks.iter().map(|&(_, e)| e).filter(|&e| e < t_ns).max().unwrap_or(0);
    let idle = t_ns - idle_start;
    let value = match cfg.pedestal {
        PedestalBehavior::CountUp { wrap_s } => (idle / NANOS_PER_S) % u64::from(wrap_s.max(1)) * 10,
        PedestalBehavior::OneSecondCycle => 10 - (idle / TENTH_NS) % 11,
    }
    .min(u64::from(MIN_END_TIME_MAX)) as u16;
    [
        MovementState { signal_group: CROSSWALK_SIGNAL_GROUP, event_state: MovementPhase::StopAndRemain, min_end_time: value },
        MovementState { signal_group: VEHICLE_SIGNAL_GROUP, event_state: MovementPhase::ProtectedMovementAllowed, min_end_time: value },
    ]
}

/// Walk intervals triggered by the presses; a press during an active walk is ignored.
fn walk_intervals(cfg: &SignalIntersectionConfig, total_ns: u64) -> Result<Vec<(u64, u64)>, ScenarioError> {
    if !(cfg.walk_s.is_finite() && cfg.walk_s > 0.0) {
        return Err(ScenarioError::InvalidParameter(format!("walk interval {} s", cfg.walk_s)));
    }
    let walk_ns = (cfg.walk_s * 1e9).round() as u64;
    let mut presses = Vec::with_capacity(cfg.button_presses.len());
    for &p in &cfg.button_presses {
        if !(p.is_finite() && p >= 0.0 && (p * 1e9).round() as u64 <= total_ns) {
            return Err(ScenarioError::InvalidPressTime(p));
        }
        presses.push((p * 1e9).round() as u64);
    }
    presses.sort_unstable();
    let mut walks: Vec<(u64, u64)> = Vec::new();
    for p in presses {
        if walks.last().is_some_and(|&(_, e)| p < e) {
            continue;
        }
        walks.push((p, p + walk_ns));
    }
    Ok(walks)
}

/// MAP once per second and SPaT at 10 Hz for the pedestrian-actuated crossing.
pub fn synth_signal_intersection(cfg: &SignalIntersectionConfig) -> Result<CaptureFile, ScenarioError> {
    let total = duration_ns(cfg.duration_s)?;
    let walks = walk_intervals(cfg, total)?;
    let map = MessageFrame::Map(signal_intersection_map(&cfg.reference, cfg.intersection_id));
    let base = u64::from(cfg.start_epoch_s) * NANOS_PER_S;
    let mut capture = CaptureFile::new(LINKTYPE_USER0);
    let mut t = 0;
    let mut k = 0u64;
    while t < total {
        if t % NANOS_PER_S == 0 {
            push_frame(&mut capture, base + t, &map)?;
        }
        let spat = SpatData {
            intersection_id: cfg.intersection_id,
            revision: (k % 128) as u8,
            movements: crossing_phase(cfg, &walks, t).to_vec(),
        };
        push_frame(&mut capture, base + t, &MessageFrame::Spat(spat))?;
        k += 1;
        t = k * TENTH_NS;
    }
    Ok(capture)
}

/// Vehicles entering from one side of the four-way intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachTraffic {
    pub count: usize,
    pub speed_mps: f64,
    /// Distance of the first vehicle from the reference point at t = 0.
    pub start_m: f64,
    /// Gap between consecutive vehicles.
    pub spacing_m: f64,
}

impl ApproachTraffic {
    pub fn vehicles(count: usize) -> Self {
        ApproachTraffic { count, ..Default::default() }
    }
}

impl Default for ApproachTraffic {
    fn default() -> Self {
        ApproachTraffic { count: 0, speed_mps: 10.0, start_m: 150.0, spacing_m: 25.0 }
    }
}

/// Four-way intersection publishing BSMs for approaching road users.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficIntersectionConfig {
    pub duration_s: f64,
    /// North, east, south, west.
    pub approaches: [ApproachTraffic; 4],
    pub include_pedestrian: bool,
    pub reference: GeoPoint,
    pub intersection_id: u16,
    pub start_epoch_s: u32,
}

impl Default for TrafficIntersectionConfig {
    fn default() -> Self {
        TrafficIntersectionConfig {
            duration_s: 30.0,
            approaches: [ApproachTraffic::default(); 4],
            include_pedestrian: false,
            reference: GeoPoint::new(40.2364, -83.3671, 300.0),
            intersection_id: 4301,
            start_epoch_s: 1_600_000_020,
        }
    }
}

pub const SIDE_BEARINGS: [f64; 4] = [0.0, 90.0, 180.0, 270.0];
pub const PEDESTRIAN_SPEED_MPS: f64 = 1.4;
const CROSSWALK_OFFSET_M: f64 = 9.0;
const STOP_BAR_M: f64 = 12.0;

fn side_axes(bearing: f64) -> (LocalPoint, LocalPoint) {
    let out = LocalPoint::new(0.0, 1.0, 0.0).rotated(bearing);
    let right = out.rotated(90.0);
    (out, right)
}

fn along(out: &LocalPoint, right: &LocalPoint, a: f64, r: f64) -> NodeXY {
    node(out.east_m * a + right.east_m * r, out.north_m * a + right.north_m * r)
}

/// MAP of the four-way intersection: per side two approach lanes, one
/// departure lane and a crosswalk.
pub fn traffic_intersection_map(reference: &GeoPoint, intersection_id: u16) -> MapData {
    let w = LANE_WIDTH_M;
    let mut lanes = Vec::new();
    for (side, &b) in SIDE_BEARINGS.iter().enumerate() {
        let (o, r) = side_axes(b);
        let base = 10 * (side as u8 + 1);
        for (i, off) in [-0.5 * w, -1.5 * w].into_iter().enumerate() {
            lanes.push(Lane { lane_id: base + i as u8, lane_type: LaneType::Vehicle, nodes: vec![along(&o, &r, STOP_BAR_M, off), along(&o, &r, 80.0, off)] });
        }
        lanes.push(Lane { lane_id: base + 2, lane_type: LaneType::Vehicle, nodes: vec![along(&o, &r, STOP_BAR_M, 0.5 * w), along(&o, &r, 80.0, 0.5 * w)] });
        lanes.push(Lane {
            lane_id: base + 3,
            lane_type: LaneType::Crosswalk,
            nodes: vec![along(&o, &r, CROSSWALK_OFFSET_M, -2.5 * w), along(&o, &r, CROSSWALK_OFFSET_M, 1.5 * w)],
        });
    }
    MapData { intersection_id, ref_point: position3d(reference), lane_width: (w * 100.0) as u16, lanes }
}

/// Identifier of vehicle `index` entering from `side` (0 = north).
pub fn vehicle_id(side: usize, index: usize) -> TemporaryId {
    TemporaryId::from_u32(0x5A00_0000 | (side as u32) << 16 | index as u32)
}

pub const PEDESTRIAN_ID: TemporaryId = TemporaryId([0x9E, 0, 0, 1]);

struct Stream {
    id: TemporaryId,
    role: Role,
    speed_mps: f64,
    heading_deg: f64,
    start: LocalPoint,
    /// Unit direction of travel.
    dir: LocalPoint,
    /// Distance after which the stream stops publishing.
    max_travel_m: f64,
}

fn bsm_counts(speed_mps: f64, heading_deg: f64) -> (u16, u16) {
    let speed = (speed_mps / MPS_PER_SPEED_COUNT).round().min(8190.0) as u16;
    let heading = ((heading_deg / DEG_PER_HEADING_COUNT).round() as i64).rem_euclid(HEADING_COUNTS) as u16;
    (speed, heading)
}

/// MAP once per second and 10 Hz BSMs for constant-speed vehicles driving
/// straight at the reference point, plus an optional pedestrian on the north
/// crosswalk. A stream stops once its user reaches the reference point (or
/// the far curb, for the pedestrian).
pub fn synth_traffic_intersection(cfg: &TrafficIntersectionConfig) -> Result<CaptureFile, ScenarioError> {
    let total = duration_ns(cfg.duration_s)?;
    let mut streams = Vec::new();
    for (side, a) in cfg.approaches.iter().enumerate() {
        if a.count > 0 && !(a.speed_mps > 0.0 && a.start_m > 0.0 && a.spacing_m >= 0.0) {
            return Err(ScenarioError::InvalidParameter(format!("approach {side}: {a:?}")));
        }
        let (o, _) = side_axes(SIDE_BEARINGS[side]);
        for i in 0..a.count {
            let d0 = a.start_m + i as f64 * a.spacing_m;
            streams.push(Stream {
                id: vehicle_id(side, i),
                role: Role::Vehicle,
                speed_mps: a.speed_mps,
                heading_deg: geo::normalize_deg(SIDE_BEARINGS[side] + 180.0),
                start: LocalPoint::new(o.east_m * d0, o.north_m * d0, 0.0),
                dir: LocalPoint::new(-o.east_m, -o.north_m, 0.0),
                max_travel_m: d0,
            });
        }
    }
    if cfg.include_pedestrian {
        let w = LANE_WIDTH_M;
        streams.push(Stream {
            id: PEDESTRIAN_ID,
            role: Role::Pedestrian,
            speed_mps: PEDESTRIAN_SPEED_MPS,
            heading_deg: 90.0,
            start: LocalPoint::new(-2.5 * w, CROSSWALK_OFFSET_M, 0.0),
            dir: LocalPoint::new(1.0, 0.0, 0.0),
            max_travel_m: 4.0 * w,
        });
    }

    let map = MessageFrame::Map(traffic_intersection_map(&cfg.reference, cfg.intersection_id));
    let base = u64::from(cfg.start_epoch_s) * NANOS_PER_S;
    let elevation = (cfg.reference.elev_m * 10.0).round() as i32;
    let mut capture = CaptureFile::new(LINKTYPE_USER0);
    let mut k = 0u64;
    let mut t = 0;
    while t < total {
        if t % NANOS_PER_S == 0 {
            push_frame(&mut capture, base + t, &map)?;
        }
        let secs = t as f64 / 1e9;
        for s in &streams {
            let travelled = s.speed_mps * secs;
            if travelled >= s.max_travel_m {
                continue;
            }
            let lp = LocalPoint::new(s.start.east_m + s.dir.east_m * travelled, s.start.north_m + s.dir.north_m * travelled, 0.0);
            let (lat, lon) = from_local(&cfg.reference, &lp).lat_lon_counts();
            let (speed, heading) = bsm_counts(s.speed_mps, s.heading_deg);
            let bsm = BsmCore {
                msg_count: (k % 128) as u8,
                temporary_id: s.id,
                sec_mark: sec_mark_for(base + t),
                latitude: lat as i32,
                longitude: lon as i32,
                elevation,
                speed,
                heading,
                role: s.role,
            };
            push_frame(&mut capture, base + t, &MessageFrame::Bsm(bsm))?;
        }
        k += 1;
        t = k * TENTH_NS;
    }
    Ok(capture)
}
