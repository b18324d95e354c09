//! Fixtures for relocation properties: BSM constellations around a site.

use proptest::prelude::*;
use v2xviz_core::geo::{from_local, to_local, GeoPoint, LocalPoint};
use v2xviz_core::j2735::{decode_frame, encode_frame, BsmCore, MessageFrame, Role, TemporaryId};
use v2xviz_core::pcap::{CaptureFile, CaptureRecord};

pub const HEADING_COUNTS: i64 = 28_800;

pub fn bsm_at(reference: &GeoPoint, e: f64, n: f64, heading: u16, id: u32) -> BsmCore {
    let (lat, lon) = from_local(reference, &LocalPoint::new(e, n, 0.0)).lat_lon_counts();
    BsmCore {
        msg_count: (id % 128) as u8,
        temporary_id: TemporaryId::from_u32(id),
        sec_mark: 1000,
        latitude: lat as i32,
        longitude: lon as i32,
        elevation: (reference.elev_m * 10.0).round() as i32,
        speed: 400,
        heading,
        role: Role::Vehicle,
    }
}

pub fn capture_of(bsms: &[BsmCore]) -> CaptureFile {
    let mut c = CaptureFile::new(147);
    for (i, b) in bsms.iter().enumerate() {
        c.records.push(CaptureRecord::new(1_600_000_000, i as u32 * 100_000, encode_frame(&MessageFrame::Bsm(*b)).unwrap()));
    }
    c
}

pub fn decoded(c: &CaptureFile) -> Vec<BsmCore> {
    c.records.iter().map(|r| *decode_frame(&r.payload).unwrap().as_bsm().unwrap()).collect()
}

pub fn local(reference: &GeoPoint, b: &BsmCore) -> LocalPoint {
    to_local(reference, &GeoPoint::new(b.lat_deg().unwrap(), b.lon_deg().unwrap(), 0.0)).unwrap()
}

pub fn site() -> impl Strategy<Value = GeoPoint> {
    (-60.0f64..60.0, -179.0f64..179.0, 0.0f64..2000.0).prop_map(|(a, b, c)| GeoPoint::new(a, b, c))
}

pub fn constellation() -> impl Strategy<Value = Vec<(f64, f64, u16)>> {
    // Radius 1 km keeps every pairwise separation within 2 km.
    proptest::collection::vec((-700.0f64..700.0, -700.0f64..700.0, 0u16..28_800), 2..12)
}
