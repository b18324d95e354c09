//! SPaT, MAP and BSM messages over a frozen subset of the J2735 schema,
//! encoded with Unaligned PER.
//!
//! A [`MessageFrame`] is encoded as `SEQUENCE { messageId INTEGER (0..32767),
//! value OCTET STRING }`, where `value` holds the complete UPER encoding of the
//! body (an open type). The subset schema lives next to the integration tests
//! as `v2x_subset.asn`.

pub mod export;
pub mod uper;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use uper::{BitReader, BitWriter};

pub use export::{bsm_to_csv, map_to_text, BSM_CSV_HEADER};

pub const MSG_ID_MAP: u16 = 18;
pub const MSG_ID_SPAT: u16 = 19;
pub const MSG_ID_BSM: u16 = 20;

pub const LATITUDE_MIN: i32 = -900_000_000;
pub const LATITUDE_UNAVAILABLE: i32 = 900_000_001;
pub const LONGITUDE_MIN: i32 = -1_799_999_999;
pub const LONGITUDE_UNAVAILABLE: i32 = 1_800_000_001;
pub const ELEVATION_UNAVAILABLE: i32 = -4096;
pub const ELEVATION_MAX: i32 = 61_439;
pub const SPEED_UNAVAILABLE: u16 = 8191;
pub const HEADING_UNAVAILABLE: u16 = 28_800;
pub const MIN_END_TIME_MAX: u16 = 36_001;

/// Degrees per latitude/longitude count.
pub const DEG_PER_COUNT: f64 = 1e-7;
/// Meters per elevation count.
pub const M_PER_ELEV_COUNT: f64 = 0.1;
/// Meters per second per speed count.
pub const MPS_PER_SPEED_COUNT: f64 = 0.02;
/// Degrees per heading count.
pub const DEG_PER_HEADING_COUNT: f64 = 0.0125;

const MAX_LANES: usize = 255;
const MAX_NODES: usize = 63;
const MAX_MOVEMENTS: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("{field} out of range: {detail}")]
    OutOfRange { field: &'static str, detail: String },
    #[error("unknown message id {0}")]
    UnknownMessageId(u16),
    #[error("bit stream ends at bit {bit} in the middle of a field")]
    Truncated { bit: usize },
    #[error("{field} violates its constraint: {detail}")]
    ConstraintViolation { field: &'static str, detail: String },
}

/// BSM temporary identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TemporaryId(pub [u8; 4]);

impl TemporaryId {
    pub fn from_u32(v: u32) -> Self {
        TemporaryId(v.to_be_bytes())
    }

    pub fn as_u32(self) -> u32 {
        u32::from_be_bytes(self.0)
    }
}

impl fmt::Display for TemporaryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08X}", self.as_u32())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Role {
    #[default]
    Vehicle,
    Pedestrian,
    Motorcycle,
    Emergency,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Vehicle, Role::Pedestrian, Role::Motorcycle, Role::Emergency];

    pub fn name(self) -> &'static str {
        match self {
            Role::Vehicle => "vehicle",
            Role::Pedestrian => "pedestrian",
            Role::Motorcycle => "motorcycle",
            Role::Emergency => "emergency",
        }
    }
}

/// Core state of one road user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BsmCore {
    pub msg_count: u8,
    pub temporary_id: TemporaryId,
    /// Milliseconds within the minute.
    pub sec_mark: u16,
    /// 1e-7 degrees.
    pub latitude: i32,
    /// 1e-7 degrees.
    pub longitude: i32,
    /// 0.1 m.
    pub elevation: i32,
    /// 0.02 m/s.
    pub speed: u16,
    /// 0.0125 degrees, clockwise from north.
    pub heading: u16,
    pub role: Role,
}

impl BsmCore {
    pub fn has_position(&self) -> bool {
        self.latitude != LATITUDE_UNAVAILABLE && self.longitude != LONGITUDE_UNAVAILABLE
    }

    pub fn lat_deg(&self) -> Option<f64> {
        (self.latitude != LATITUDE_UNAVAILABLE).then(|| f64::from(self.latitude) * DEG_PER_COUNT)
    }

    pub fn lon_deg(&self) -> Option<f64> {
        (self.longitude != LONGITUDE_UNAVAILABLE).then(|| f64::from(self.longitude) * DEG_PER_COUNT)
    }

    pub fn elev_m(&self) -> Option<f64> {
        (self.elevation != ELEVATION_UNAVAILABLE).then(|| f64::from(self.elevation) * M_PER_ELEV_COUNT)
    }

    pub fn speed_mps(&self) -> Option<f64> {
        (self.speed != SPEED_UNAVAILABLE).then(|| f64::from(self.speed) * MPS_PER_SPEED_COUNT)
    }

    pub fn heading_deg(&self) -> Option<f64> {
        (self.heading != HEADING_UNAVAILABLE).then(|| f64::from(self.heading) * DEG_PER_HEADING_COUNT)
    }
}

/// Signal phase of one movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MovementPhase {
    StopAndRemain,
    PermissiveMovementAllowed,
    ProtectedMovementAllowed,
    PermissiveClearance,
    ProtectedClearance,
    Dark,
}

impl MovementPhase {
    pub const ALL: [MovementPhase; 6] = [
        MovementPhase::StopAndRemain,
        MovementPhase::PermissiveMovementAllowed,
        MovementPhase::ProtectedMovementAllowed,
        MovementPhase::PermissiveClearance,
        MovementPhase::ProtectedClearance,
        MovementPhase::Dark,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&p| p == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            MovementPhase::StopAndRemain => "stop-And-Remain",
            MovementPhase::PermissiveMovementAllowed => "permissive-Movement-Allowed",
            MovementPhase::ProtectedMovementAllowed => "protected-Movement-Allowed",
            MovementPhase::PermissiveClearance => "permissive-clearance",
            MovementPhase::ProtectedClearance => "protected-clearance",
            MovementPhase::Dark => "dark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MovementState {
    pub signal_group: u8,
    pub event_state: MovementPhase,
    /// Remaining time in tenths of a second.
    pub min_end_time: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatData {
    pub intersection_id: u16,
    pub revision: u8,
    pub movements: Vec<MovementState>,
}

impl SpatData {
    pub fn movement(&self, signal_group: u8) -> Option<&MovementState> {
        self.movements.iter().find(|m| m.signal_group == signal_group)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position3D {
    pub latitude: i32,
    pub longitude: i32,
    pub elevation: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaneType {
    Vehicle,
    Crosswalk,
}

/// Node offset from the reference point, in centimeters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeXY {
    pub x_cm: i16,
    pub y_cm: i16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lane {
    pub lane_id: u8,
    pub lane_type: LaneType,
    pub nodes: Vec<NodeXY>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapData {
    pub intersection_id: u16,
    pub ref_point: Position3D,
    /// Centimeters.
    pub lane_width: u16,
    pub lanes: Vec<Lane>,
}

/// One decoded message. The message id is implied by the variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageFrame {
    Map(MapData),
    Spat(SpatData),
    Bsm(BsmCore),
}

impl MessageFrame {
    pub fn message_id(&self) -> u16 {
        match self {
            MessageFrame::Map(_) => MSG_ID_MAP,
            MessageFrame::Spat(_) => MSG_ID_SPAT,
            MessageFrame::Bsm(_) => MSG_ID_BSM,
        }
    }

    pub fn as_bsm(&self) -> Option<&BsmCore> {
        match self {
            MessageFrame::Bsm(b) => Some(b),
            _ => None,
        }
    }
}

/// Encodes a frame. Equal frames always produce equal bytes.
pub fn encode_frame(frame: &MessageFrame) -> Result<Vec<u8>, CodecError> {
    let body = match frame {
        MessageFrame::Map(m) => encode_map(m)?,
        MessageFrame::Spat(s) => encode_spat(s)?,
        MessageFrame::Bsm(b) => encode_bsm(b)?,
    };
    let mut w = BitWriter::new();
    w.write_constrained("message_id", i64::from(frame.message_id()), 0, 32767)?;
    w.write_unconstrained_octets(&body);
    Ok(w.finish())
}

pub fn decode_frame(bytes: &[u8]) -> Result<MessageFrame, CodecError> {
    let mut r = BitReader::new(bytes);
    let id = r.read_constrained("message_id", 0, 32767)? as u16;
    if ![MSG_ID_MAP, MSG_ID_SPAT, MSG_ID_BSM].contains(&id) {
        return Err(CodecError::UnknownMessageId(id));
    }
    let body = r.read_unconstrained_octets("value")?;
    expect_end(&r, "message_frame")?;
    let mut br = BitReader::new(&body);
    let frame = match id {
        MSG_ID_MAP => MessageFrame::Map(decode_map(&mut br)?),
        MSG_ID_SPAT => MessageFrame::Spat(decode_spat(&mut br)?),
        _ => MessageFrame::Bsm(decode_bsm(&mut br)?),
    };
    expect_end(&br, "value")?;
    Ok(frame)
}

/// Only padding (fewer than eight bits) may follow the last field.
fn expect_end(r: &BitReader<'_>, field: &'static str) -> Result<(), CodecError> {
    if r.remaining_bits() >= 8 {
        return Err(CodecError::ConstraintViolation {
            field,
            detail: format!("{} trailing bits", r.remaining_bits()),
        });
    }
    Ok(())
}

pub fn encode_bsm(b: &BsmCore) -> Result<Vec<u8>, CodecError> {
    let mut w = BitWriter::new();
    write_bsm(&mut w, b)?;
    Ok(w.finish())
}

pub fn encode_spat(s: &SpatData) -> Result<Vec<u8>, CodecError> {
    let mut w = BitWriter::new();
    write_spat(&mut w, s)?;
    Ok(w.finish())
}

pub fn encode_map(m: &MapData) -> Result<Vec<u8>, CodecError> {
    let mut w = BitWriter::new();
    write_map(&mut w, m)?;
    Ok(w.finish())
}

fn write_lat_lon(w: &mut BitWriter, lat: i32, lon: i32) -> Result<(), CodecError> {
    w.write_constrained("latitude", lat.into(), LATITUDE_MIN.into(), LATITUDE_UNAVAILABLE.into())?;
    w.write_constrained("longitude", lon.into(), LONGITUDE_MIN.into(), LONGITUDE_UNAVAILABLE.into())
}

fn write_elevation(w: &mut BitWriter, elev: i32) -> Result<(), CodecError> {
    w.write_constrained("elevation", elev.into(), ELEVATION_UNAVAILABLE.into(), ELEVATION_MAX.into())
}

fn write_bsm(w: &mut BitWriter, b: &BsmCore) -> Result<(), CodecError> {
    w.write_constrained("msg_count", b.msg_count.into(), 0, 127)?;
    w.write_octets(&b.temporary_id.0);
    w.write_constrained("sec_mark", b.sec_mark.into(), 0, 65535)?;
    write_lat_lon(w, b.latitude, b.longitude)?;
    write_elevation(w, b.elevation)?;
    w.write_constrained("speed", b.speed.into(), 0, SPEED_UNAVAILABLE.into())?;
    w.write_constrained("heading", b.heading.into(), 0, HEADING_UNAVAILABLE.into())?;
    w.write_enumerated(b.role as usize, Role::ALL.len());
    Ok(())
}

fn read_lat_lon(r: &mut BitReader<'_>) -> Result<(i32, i32), CodecError> {
    let lat = r.read_constrained("latitude", LATITUDE_MIN.into(), LATITUDE_UNAVAILABLE.into())? as i32;
    let lon = r.read_constrained("longitude", LONGITUDE_MIN.into(), LONGITUDE_UNAVAILABLE.into())? as i32;
    Ok((lat, lon))
}

fn read_elevation(r: &mut BitReader<'_>) -> Result<i32, CodecError> {
    Ok(r.read_constrained("elevation", ELEVATION_UNAVAILABLE.into(), ELEVATION_MAX.into())? as i32)
}

fn decode_bsm(r: &mut BitReader<'_>) -> Result<BsmCore, CodecError> {
    let msg_count = r.read_constrained("msg_count", 0, 127)? as u8;
    let id = r.read_octets(4)?;
    let sec_mark = r.read_constrained("sec_mark", 0, 65535)? as u16;
    let (latitude, longitude) = read_lat_lon(r)?;
    let elevation = read_elevation(r)?;
    let speed = r.read_constrained("speed", 0, SPEED_UNAVAILABLE.into())? as u16;
    let heading = r.read_constrained("heading", 0, HEADING_UNAVAILABLE.into())? as u16;
    let role = Role::ALL[r.read_enumerated("role", Role::ALL.len())?];
    Ok(BsmCore {
        msg_count,
        temporary_id: TemporaryId([id[0], id[1], id[2], id[3]]),
        sec_mark,
        latitude,
        longitude,
        elevation,
        speed,
        heading,
        role,
    })
}

fn write_spat(w: &mut BitWriter, s: &SpatData) -> Result<(), CodecError> {
    let mut seen = HashSet::new();
    if let Some(dup) = s.movements.iter().find(|m| !seen.insert(m.signal_group)) {
        return Err(CodecError::OutOfRange { field: "signal_group", detail: format!("duplicate signal group {}", dup.signal_group) });
    }
    w.write_constrained("intersection_id", s.intersection_id.into(), 0, 65535)?;
    w.write_constrained("revision", s.revision.into(), 0, 127)?;
    w.write_constrained_length("movements", s.movements.len(), 1, MAX_MOVEMENTS)?;
    for m in &s.movements {
        w.write_constrained("signal_group", m.signal_group.into(), 1, 255)?;
        w.write_enumerated(m.event_state.index(), MovementPhase::ALL.len());
        w.write_constrained("min_end_time", m.min_end_time.into(), 0, MIN_END_TIME_MAX.into())?;
    }
    Ok(())
}

fn decode_spat(r: &mut BitReader<'_>) -> Result<SpatData, CodecError> {
    let intersection_id = r.read_constrained("intersection_id", 0, 65535)? as u16;
    let revision = r.read_constrained("revision", 0, 127)? as u8;
    let n = r.read_constrained_length("movements", 1, MAX_MOVEMENTS)?;
    let mut movements = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    for _ in 0..n {
        let signal_group = r.read_constrained("signal_group", 1, 255)? as u8;
        if !seen.insert(signal_group) {
            return Err(CodecError::ConstraintViolation { field: "signal_group", detail: format!("duplicate signal group {signal_group}") });
        }
        let event_state = MovementPhase::ALL[r.read_enumerated("event_state", MovementPhase::ALL.len())?];
        let min_end_time = r.read_constrained("min_end_time", 0, MIN_END_TIME_MAX.into())? as u16;
        movements.push(MovementState { signal_group, event_state, min_end_time });
    }
    Ok(SpatData { intersection_id, revision, movements })
}

fn write_map(w: &mut BitWriter, m: &MapData) -> Result<(), CodecError> {
    let mut seen = HashSet::new();
    if let Some(dup) = m.lanes.iter().find(|l| !seen.insert(l.lane_id)) {
        return Err(CodecError::OutOfRange { field: "lane_id", detail: format!("duplicate lane id {}", dup.lane_id) });
    }
    w.write_constrained("intersection_id", m.intersection_id.into(), 0, 65535)?;
    write_lat_lon(w, m.ref_point.latitude, m.ref_point.longitude)?;
    write_elevation(w, m.ref_point.elevation)?;
    w.write_constrained("lane_width", m.lane_width.into(), 0, 32767)?;
    w.write_constrained_length("lanes", m.lanes.len(), 1, MAX_LANES)?;
    for lane in &m.lanes {
        w.write_constrained("lane_id", lane.lane_id.into(), 0, 255)?;
        w.write_enumerated(lane.lane_type as usize, 2);
        w.write_constrained_length("nodes", lane.nodes.len(), 2, MAX_NODES)?;
        for n in &lane.nodes {
            w.write_constrained("x_cm", n.x_cm.into(), -32768, 32767)?;
            w.write_constrained("y_cm", n.y_cm.into(), -32768, 32767)?;
        }
    }
    Ok(())
}

fn decode_map(r: &mut BitReader<'_>) -> Result<MapData, CodecError> {
    let intersection_id = r.read_constrained("intersection_id", 0, 65535)? as u16;
    let (latitude, longitude) = read_lat_lon(r)?;
    let elevation = read_elevation(r)?;
    let lane_width = r.read_constrained("lane_width", 0, 32767)? as u16;
    let n = r.read_constrained_length("lanes", 1, MAX_LANES)?;
    let mut lanes = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    for _ in 0..n {
        let lane_id = r.read_constrained("lane_id", 0, 255)? as u8;
        if !seen.insert(lane_id) {
            return Err(CodecError::ConstraintViolation { field: "lane_id", detail: format!("duplicate lane id {lane_id}") });
        }
        let lane_type = [LaneType::Vehicle, LaneType::Crosswalk][r.read_enumerated("lane_type", 2)?];
        let k = r.read_constrained_length("nodes", 2, MAX_NODES)?;
        let nodes = (0..k)
            .map(|_| {
                let x_cm = r.read_constrained("x_cm", -32768, 32767)? as i16;
                let y_cm = r.read_constrained("y_cm", -32768, 32767)? as i16;
                Ok(NodeXY { x_cm, y_cm })
            })
            .collect::<Result<Vec<_>, CodecError>>()?;
        lanes.push(Lane { lane_id, lane_type, nodes });
    }
    Ok(MapData {
        intersection_id,
        ref_point: Position3D { latitude, longitude, elevation },
        lane_width,
        lanes,
    })
}
