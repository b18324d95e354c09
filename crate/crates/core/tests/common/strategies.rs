//! proptest generators for in-schema messages and capture files.

use proptest::collection::{btree_set, vec};
use proptest::prelude::*;
use v2xviz_core::j2735::*;
use v2xviz_core::pcap::{ByteOrder, CaptureFile, CaptureRecord, TimeResolution};

/// Uniform over the range, with the bounds and an optional sentinel mixed in.
fn edgy(lo: i64, hi: i64) -> impl Strategy<Value = i64> {
    prop_oneof![6 => lo..=hi, 1 => Just(lo), 1 => Just(hi)]
}

pub fn role() -> impl Strategy<Value = Role> {
    proptest::sample::select(Role::ALL.to_vec())
}

pub fn phase() -> impl Strategy<Value = MovementPhase> {
    proptest::sample::select(MovementPhase::ALL.to_vec())
}

pub fn bsm() -> impl Strategy<Value = BsmCore> {
    (
        0u8..=127,
        any::<[u8; 4]>(),
        any::<u16>(),
        edgy(LATITUDE_MIN.into(), LATITUDE_UNAVAILABLE.into()),
        edgy(LONGITUDE_MIN.into(), LONGITUDE_UNAVAILABLE.into()),
        edgy(ELEVATION_UNAVAILABLE.into(), ELEVATION_MAX.into()),
        edgy(0, SPEED_UNAVAILABLE.into()),
        edgy(0, HEADING_UNAVAILABLE.into()),
        role(),
    )
        .prop_map(|(msg_count, id, sec_mark, lat, lon, elev, speed, heading, role)| BsmCore {
            msg_count,
            temporary_id: TemporaryId(id),
            sec_mark,
            latitude: lat as i32,
            longitude: lon as i32,
            elevation: elev as i32,
            speed: speed as u16,
            heading: heading as u16,
            role,
        })
}

pub fn spat() -> impl Strategy<Value = SpatData> {
    (any::<u16>(), 0u8..=127, btree_set(1u8..=255, 1..12))
        .prop_flat_map(|(id, rev, groups)| {
            let n = groups.len();
            (Just(id), Just(rev), Just(groups), vec((phase(), edgy(0, MIN_END_TIME_MAX.into())), n))
        })
        .prop_map(|(intersection_id, revision, groups, states)| SpatData {
            intersection_id,
            revision,
            movements: groups
                .into_iter()
                .zip(states)
                .map(|(signal_group, (event_state, t))| MovementState { signal_group, event_state, min_end_time: t as u16 })
                .collect(),
        })
}

fn lane(lane_id: u8) -> impl Strategy<Value = Lane> {
    (prop_oneof![Just(LaneType::Vehicle), Just(LaneType::Crosswalk)], vec(any::<(i16, i16)>(), 2..16)).prop_map(move |(lane_type, nodes)| Lane {
        lane_id,
        lane_type,
        nodes: nodes.into_iter().map(|(x_cm, y_cm)| NodeXY { x_cm, y_cm }).collect(),
    })
}

pub fn map() -> impl Strategy<Value = MapData> {
    (
        any::<u16>(),
        edgy(LATITUDE_MIN.into(), LATITUDE_UNAVAILABLE.into()),
        edgy(LONGITUDE_MIN.into(), LONGITUDE_UNAVAILABLE.into()),
        edgy(ELEVATION_UNAVAILABLE.into(), ELEVATION_MAX.into()),
        0u16..=32767,
        btree_set(any::<u8>(), 1..10),
    )
        .prop_flat_map(|(id, lat, lon, elev, width, ids)| {
            let lanes: Vec<_> = ids.into_iter().map(lane).collect();
            (Just(id), Just(lat), Just(lon), Just(elev), Just(width), lanes)
        })
        .prop_map(|(intersection_id, lat, lon, elev, lane_width, lanes)| MapData {
            intersection_id,
            ref_point: Position3D { latitude: lat as i32, longitude: lon as i32, elevation: elev as i32 },
            lane_width,
            lanes,
        })
}

pub fn frame() -> impl Strategy<Value = MessageFrame> {
    prop_oneof![
        3 => bsm().prop_map(MessageFrame::Bsm),
        2 => spat().prop_map(MessageFrame::Spat),
        1 => map().prop_map(MessageFrame::Map),
    ]
}

pub fn capture() -> impl Strategy<Value = CaptureFile> {
    (
        prop_oneof![Just(ByteOrder::Native), Just(ByteOrder::Swapped)],
        prop_oneof![Just(TimeResolution::Micro), Just(TimeResolution::Nano)],
        prop_oneof![Just(1u32), Just(147u32), any::<u32>()],
        vec((any::<u32>(), any::<u32>(), vec(any::<u8>(), 0..300), 0u32..64), 0..24),
    )
        .prop_map(|(byte_order, time_resolution, link_type, recs)| CaptureFile {
            byte_order,
            time_resolution,
            link_type,
            records: recs
                .into_iter()
                .map(|(s, f, payload, extra)| CaptureRecord {
                    ts_seconds: s,
                    ts_fraction: f % time_resolution.units_per_second(),
                    original_length: payload.len() as u32 + extra,
                    payload,
                })
                .collect(),
        })
}
