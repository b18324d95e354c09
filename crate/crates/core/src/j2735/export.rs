//! Human-readable exports: BSM rows as CSV, MAP as indented value notation.
//!
//! Scaled integers are rendered with exact decimal arithmetic so output never
//! depends on floating point formatting.

use std::fmt::Write;

use super::{
    BsmCore, LaneType, MapData, ELEVATION_UNAVAILABLE, HEADING_UNAVAILABLE, LATITUDE_UNAVAILABLE,
    LONGITUDE_UNAVAILABLE, SPEED_UNAVAILABLE,
};

pub const BSM_CSV_HEADER: &str = "timestamp,id_hex,msg_count,sec_mark_ms,lat_deg,lon_deg,elev_m,speed_mps,heading_deg,role";

/// `value / 10^decimals` with exactly `decimals` fraction digits.
fn fixed(value: i64, decimals: u32) -> String {
    let scale = 10i64.pow(decimals);
    let sign = if value < 0 { "-" } else { "" };
    let a = value.unsigned_abs();
    let s = scale as u64;
    if decimals == 0 {
        return format!("{sign}{a}");
    }
    format!("{sign}{}.{:0width$}", a / s, a % s, width = decimals as usize)
}

/// Like [`fixed`] but without trailing fraction zeros (`10.00` becomes `10`).
fn trimmed(value: i64, decimals: u32) -> String {
    let s = fixed(value, decimals);
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn timestamp(nanos: u64) -> String {
    format!("{}.{:06}", nanos / 1_000_000_000, nanos % 1_000_000_000 / 1_000)
}

/// One CSV row per BSM; `timestamp` is in nanoseconds since the epoch and is
/// written as seconds with microsecond precision. Unavailable values are empty cells.
pub fn bsm_to_csv(frames: &[(u64, BsmCore)]) -> String {
    let mut out = String::with_capacity(BSM_CSV_HEADER.len() + 1 + frames.len() * 96);
    out.push_str(BSM_CSV_HEADER);
    out.push('\n');
    for (ts, b) in frames {
        let lat = (b.latitude != LATITUDE_UNAVAILABLE).then(|| trimmed(b.latitude.into(), 7));
        let lon = (b.longitude != LONGITUDE_UNAVAILABLE).then(|| trimmed(b.longitude.into(), 7));
        let elev = (b.elevation != ELEVATION_UNAVAILABLE).then(|| trimmed(b.elevation.into(), 1));
        // 0.02 m/s = 2 hundredths, 0.0125 deg = 125 ten-thousandths
        let speed = (b.speed != SPEED_UNAVAILABLE).then(|| trimmed(i64::from(b.speed) * 2, 2));
        let heading = (b.heading != HEADING_UNAVAILABLE).then(|| trimmed(i64::from(b.heading) * 125, 4));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            timestamp(*ts),
            b.temporary_id,
            b.msg_count,
            b.sec_mark,
            lat.unwrap_or_default(),
            lon.unwrap_or_default(),
            elev.unwrap_or_default(),
            speed.unwrap_or_default(),
            heading.unwrap_or_default(),
            b.role.name(),
        );
    }
    out
}

fn lat_lon_comment(v: i32, unavailable: i32) -> String {
    if v == unavailable {
        "unavailable".to_string()
    } else {
        format!("{} deg", fixed(v.into(), 7))
    }
}

/// Indented, ASN.1 value-notation style listing of a MAP message.
pub fn map_to_text(map: &MapData) -> String {
    let mut o = String::new();
    let rp = &map.ref_point;
    let elev = if rp.elevation == ELEVATION_UNAVAILABLE {
        "unavailable".to_string()
    } else {
        format!("{} m", fixed(rp.elevation.into(), 1))
    };
    let _ = writeln!(o, "MapData ::= {{");
    let _ = writeln!(o, "  intersectionId {},", map.intersection_id);
    let _ = writeln!(o, "  refPoint {{");
    let _ = writeln!(o, "    lat {} -- {}", rp.latitude, lat_lon_comment(rp.latitude, LATITUDE_UNAVAILABLE));
    let _ = writeln!(o, "    long {} -- {}", rp.longitude, lat_lon_comment(rp.longitude, LONGITUDE_UNAVAILABLE));
    let _ = writeln!(o, "    elevation {} -- {}", rp.elevation, elev);
    let _ = writeln!(o, "  }},");
    let _ = writeln!(o, "  laneWidth {} -- {} m,", map.lane_width, fixed(map.lane_width.into(), 2));
    let _ = writeln!(o, "  lanes {{");
    for (i, lane) in map.lanes.iter().enumerate() {
        let kind = match lane.lane_type {
            LaneType::Vehicle => "vehicle",
            LaneType::Crosswalk => "crosswalk",
        };
        let _ = writeln!(o, "    lane {{");
        let _ = writeln!(o, "      laneId {},", lane.lane_id);
        let _ = writeln!(o, "      laneType {kind},");
        let _ = writeln!(o, "      nodes {{");
        for (j, n) in lane.nodes.iter().enumerate() {
            let sep = if j + 1 < lane.nodes.len() { "," } else { "" };
            let _ = writeln!(
                o,
                "        nodeXY {{ x {}, y {} }}{sep} -- {} m, {} m",
                n.x_cm,
                n.y_cm,
                fixed(n.x_cm.into(), 2),
                fixed(n.y_cm.into(), 2)
            );
        }
        let _ = writeln!(o, "      }}");
        let sep = if i + 1 < map.lanes.len() { "," } else { "" };
        let _ = writeln!(o, "    }}{sep}");
    }
    let _ = writeln!(o, "  }}");
    let _ = writeln!(o, "}}");
    o
}
