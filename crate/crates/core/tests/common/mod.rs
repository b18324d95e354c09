//! Helpers shared by integration tests: oracle corpus loading and a
//! test-only geodesic inverse.
#![allow(dead_code)]

use std::path::PathBuf;

use serde_json::Value;
use v2xviz_core::j2735::{BsmCore, Lane, LaneType, MapData, MessageFrame, MovementPhase, MovementState, NodeXY, Position3D, Role, SpatData, TemporaryId};

pub fn data_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data"))
}

pub fn load_json(name: &str) -> Value {
    let path = data_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).expect("valid json")
}

pub fn unhex(s: &str) -> Vec<u8> {
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).expect("hex")).collect()
}

pub fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn int(v: &Value, k: &str) -> i64 {
    v[k].as_i64().unwrap_or_else(|| panic!("missing {k} in {v}"))
}

fn variant<T: Copy>(v: &Value, k: &str, all: &[T], names: &[&str]) -> T {
    let s = v[k].as_str().expect("enum name");
    all[names.iter().position(|n| *n == s).unwrap_or_else(|| panic!("unknown {k} {s}"))]
}

pub fn bsm_from_json(v: &Value) -> BsmCore {
    let id = unhex(v["id"].as_str().unwrap());
    BsmCore {
        msg_count: int(v, "msgCnt") as u8,
        temporary_id: TemporaryId([id[0], id[1], id[2], id[3]]),
        sec_mark: int(v, "secMark") as u16,
        latitude: int(v, "lat") as i32,
        longitude: int(v, "long") as i32,
        elevation: int(v, "elev") as i32,
        speed: int(v, "speed") as u16,
        heading: int(v, "heading") as u16,
        role: variant(v, "role", &Role::ALL, &["vehicle", "pedestrian", "motorcycle", "emergency"]),
    }
}

pub fn spat_from_json(v: &Value) -> SpatData {
    let names = ["stopAndRemain", "permissiveMovementAllowed", "protectedMovementAllowed", "permissiveClearance", "protectedClearance", "dark"];
    SpatData {
        intersection_id: int(v, "intersectionId") as u16,
        revision: int(v, "revision") as u8,
        movements: v["movements"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| MovementState {
                signal_group: int(m, "signalGroup") as u8,
                event_state: variant(m, "eventState", &MovementPhase::ALL, &names),
                min_end_time: int(m, "minEndTime") as u16,
            })
            .collect(),
    }
}

pub fn map_from_json(v: &Value) -> MapData {
    let rp = &v["refPoint"];
    MapData {
        intersection_id: int(v, "intersectionId") as u16,
        ref_point: Position3D { latitude: int(rp, "lat") as i32, longitude: int(rp, "long") as i32, elevation: int(rp, "elevation") as i32 },
        lane_width: int(v, "laneWidth") as u16,
        lanes: v["lanes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| Lane {
                lane_id: int(l, "laneId") as u8,
                lane_type: variant(l, "laneType", &[LaneType::Vehicle, LaneType::Crosswalk], &["vehicle", "crosswalk"]),
                nodes: l["nodes"].as_array().unwrap().iter().map(|n| NodeXY { x_cm: int(n, "x") as i16, y_cm: int(n, "y") as i16 }).collect(),
            })
            .collect(),
    }
}

pub fn frame_from_case(c: &Value) -> MessageFrame {
    let v = &c["value"];
    match c["body_type"].as_str().unwrap() {
        "BSMcoreData" => MessageFrame::Bsm(bsm_from_json(v)),
        "SPAT" => MessageFrame::Spat(spat_from_json(v)),
        "MapData" => MessageFrame::Map(map_from_json(v)),
        other => panic!("unknown body type {other}"),
    }
}

/// Bytes `(i * 31 + 7) mod 256`, as used by the octet-string oracle cases.
pub fn pattern_bytes(len: usize) -> Vec<u8> {
    (0..len).map(|i| ((i * 31 + 7) % 256) as u8).collect()
}

/// Vincenty inverse on WGS-84: geodesic distance in meters.
pub fn vincenty_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let a = 6_378_137.0_f64;
    let f = 1.0 / 298.257_223_563;
    let b = a * (1.0 - f);
    let l = (lon2 - lon1).to_radians();
    let u1 = ((1.0 - f) * lat1.to_radians().tan()).atan();
    let u2 = ((1.0 - f) * lat2.to_radians().tan()).atan();
    let (su1, cu1) = u1.sin_cos();
    let (su2, cu2) = u2.sin_cos();
    let mut lambda = l;
    for _ in 0..200 {
        let (sl, cl) = lambda.sin_cos();
        let sin_sigma = ((cu2 * sl).powi(2) + (cu1 * su2 - su1 * cu2 * cl).powi(2)).sqrt();
        if sin_sigma == 0.0 {
            return 0.0;
        }
        let cos_sigma = su1 * su2 + cu1 * cu2 * cl;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cu1 * cu2 * sl / sin_sigma;
        let cos2_alpha = 1.0 - sin_alpha * sin_alpha;
        let cos_2sm = if cos2_alpha == 0.0 { 0.0 } else { cos_sigma - 2.0 * su1 * su2 / cos2_alpha };
        let c = f / 16.0 * cos2_alpha * (4.0 + f * (4.0 - 3.0 * cos2_alpha));
        let prev = lambda;
        lambda = l + (1.0 - c) * f * sin_alpha * (sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
        if (lambda - prev).abs() < 1e-13 {
            let u_sq = cos2_alpha * (a * a - b * b) / (b * b);
            let aa = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
            let bb = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
            let ds = bb
                * sin_sigma
                * (cos_2sm + bb / 4.0 * (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm) - bb / 6.0 * cos_2sm * (-3.0 + 4.0 * sin_sigma * sin_sigma) * (-3.0 + 4.0 * cos_2sm * cos_2sm)));
            return b * aa * (sigma - ds);
        }
    }
    panic!("vincenty did not converge");
}

pub mod relocation;
pub mod scenes;
pub mod strategies;
