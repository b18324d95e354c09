//! Deterministic SVG frames: intersection geometry with signal phase and
//! countdown, and road users drawn as ID-coloured oriented rectangles
//! (vehicles) or red circles (pedestrians).
//!
//! Documents are written by hand with fixed numeric precision and a fixed
//! element order (lanes, reference point, lights, users, text), so equal
//! inputs always give byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geo::{to_local, GeoPoint, LocalPoint};
use crate::j2735::{decode_frame, BsmCore, LaneType, MapData, MessageFrame, MovementPhase, Role, SpatData, TemporaryId, DEG_PER_COUNT};
use crate::pcap::{extract_payload, CaptureFile, Encapsulation};

pub const VEHICLE_LENGTH_M: f64 = 4.8;
pub const VEHICLE_WIDTH_M: f64 = 1.9;
pub const PEDESTRIAN_RADIUS_M: f64 = 0.5;
/// Users whose latest BSM is older than this are left out of a frame.
pub const STALENESS_S: f64 = 1.0;

pub const PEDESTRIAN_FILL: &str = "#ff0000";
pub const CROSSWALK_COLOR: &str = "#8b0000";
/// Vehicle lane colours, indexed by lane position in the MAP.
pub const LANE_PALETTE: [&str; 8] = ["#ffd700", "#ff8c00", "#ff00ff", "#1e90ff", "#00ced1", "#7cfc00", "#9370db", "#f08080"];

const BACKGROUND: &str = "#f4f4f0";
const LIGHT_OFF: &str = "#3a3a3a";
const LIGHT_RADIUS_PX: f64 = 10.0;
const LIGHT_MARGIN_PX: f64 = 24.0;
const LIGHT_SPACING_PX: f64 = 44.0;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("SPaT intersection {spat} does not match MAP intersection {map}")]
    MismatchedIntersection { map: u16, spat: u16 },
    #[error("capture holds no decodable messages")]
    EmptyCapture,
    #[error("invalid viewport or step: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Viewport {
    pub center: GeoPoint,
    pub meters_per_pixel: f64,
    pub width_px: u32,
    pub height_px: u32,
    /// Raster drawn under everything, referenced by path and never embedded.
    pub underlay: Option<String>,
}

impl Viewport {
    pub fn new(center: GeoPoint, meters_per_pixel: f64, width_px: u32, height_px: u32) -> Result<Self, RenderError> {
        if !(meters_per_pixel > 0.0 && meters_per_pixel.is_finite()) || width_px == 0 || height_px == 0 {
            return Err(RenderError::InvalidParameter(format!("{width_px}x{height_px} at {meters_per_pixel} m/px")));
        }
        Ok(Viewport { center, meters_per_pixel, width_px, height_px, underlay: None })
    }

    /// Screen position of a geographic point (x right, y down). Points too
    /// far from the center for the local projection map to `None`.
    pub fn project(&self, p: &GeoPoint) -> Option<(f64, f64)> {
        let lp = to_local(&self.center, p).ok()?;
        Some(self.project_local(&lp))
    }

    fn project_local(&self, lp: &LocalPoint) -> (f64, f64) {
        (
            f64::from(self.width_px) / 2.0 + lp.east_m / self.meters_per_pixel,
            f64::from(self.height_px) / 2.0 - lp.north_m / self.meters_per_pixel,
        )
    }
}

/// A finished SVG document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub svg: String,
    /// Road users left out because their position is unavailable.
    pub skipped_users: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }
}

/// Knuth's multiplicative hash spreads neighbouring IDs across the hue circle.
pub fn color_from_id(id: &TemporaryId) -> Rgb {
    let h = u64::from(id.as_u32()).wrapping_mul(2_654_435_761) % (1u64 << 32);
    let hue = h as f64 / 4_294_967_296.0 * 360.0;
    hsv_to_rgb(hue, 0.8, 0.9)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to8 = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb(to8(r), to8(g), to8(b))
}

/// Light colour shown for a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LightColor {
    Red,
    Yellow,
    Green,
    Off,
}

impl LightColor {
    pub fn for_phase(p: MovementPhase) -> LightColor {
        match p {
            MovementPhase::StopAndRemain => LightColor::Red,
            MovementPhase::PermissiveMovementAllowed | MovementPhase::ProtectedMovementAllowed => LightColor::Green,
            MovementPhase::PermissiveClearance | MovementPhase::ProtectedClearance => LightColor::Yellow,
            MovementPhase::Dark => LightColor::Off,
        }
    }

    fn fill(self) -> &'static str {
        match self {
            LightColor::Red => "#e02020",
            LightColor::Yellow => "#f0c000",
            LightColor::Green => "#20b040",
            LightColor::Off => LIGHT_OFF,
        }
    }
}

pub fn lane_color(map: &MapData, index: usize) -> &'static str {
    match map.lanes[index].lane_type {
        LaneType::Crosswalk => CROSSWALK_COLOR,
        LaneType::Vehicle => LANE_PALETTE[index % LANE_PALETTE.len()],
    }
}

/// Two-decimal coordinate formatting shared by every element.
fn n(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

#[derive(Default)]
struct Sections {
    lanes: String,
    reference: String,
    lights: String,
    users: String,
    text: String,
}

fn ref_geo(map: &MapData) -> GeoPoint {
    GeoPoint::new(
        f64::from(map.ref_point.latitude) * DEG_PER_COUNT,
        f64::from(map.ref_point.longitude) * DEG_PER_COUNT,
        0.0,
    )
}

fn draw_map(s: &mut Sections, map: &MapData, vp: &Viewport) {
    let Some((rx, ry)) = vp.project(&ref_geo(map)) else {
        return;
    };
    for (i, lane) in map.lanes.iter().enumerate() {
        let color = lane_color(map, i);
        let pts: Vec<(f64, f64)> = lane
            .nodes
            .iter()
            .map(|nd| {
                (
                    rx + f64::from(nd.x_cm) / 100.0 / vp.meters_per_pixel,
                    ry - f64::from(nd.y_cm) / 100.0 / vp.meters_per_pixel,
                )
            })
            .collect();
        let list: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", n(*x), n(*y))).collect();
        let _ = writeln!(s.lanes, "<g class=\"lane\" id=\"lane-{}\">", lane.lane_id);
        let _ = writeln!(s.lanes, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>", list.join(" "));
        for (x, y) in pts {
            let _ = writeln!(s.lanes, "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>", n(x), n(y));
        }
        let _ = writeln!(s.lanes, "</g>");
    }
    let arm = 8.0;
    let _ = writeln!(s.reference, "<g class=\"ref-point\">");
    let _ = writeln!(s.reference, "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\" stroke-width=\"2\"/>", n(rx - arm), n(ry), n(rx + arm), n(ry));
    let _ = writeln!(s.reference, "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\" stroke-width=\"2\"/>", n(rx), n(ry - arm), n(rx), n(ry + arm));
    let _ = writeln!(s.reference, "</g>");
}

/// Remaining time in seconds with one decimal, from tenths.
fn countdown_text(tenths: u16) -> String {
    format!("{}.{} s", tenths / 10, tenths % 10)
}

fn draw_lights(s: &mut Sections, spat: &SpatData) {
    let mut movements = spat.movements.clone();
    movements.sort_by_key(|m| m.signal_group);
    for (i, m) in movements.iter().enumerate() {
        let x = LIGHT_MARGIN_PX + LIGHT_RADIUS_PX + i as f64 * LIGHT_SPACING_PX;
        let active = LightColor::for_phase(m.event_state);
        let _ = writeln!(s.lights, "<g class=\"light\" id=\"light-sg{}\">", m.signal_group);
        let _ = writeln!(
            s.lights,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#202020\"/>",
            n(x - LIGHT_RADIUS_PX - 4.0),
            n(LIGHT_MARGIN_PX - 4.0),
            n(2.0 * LIGHT_RADIUS_PX + 8.0),
            n(6.0 * LIGHT_RADIUS_PX + 16.0)
        );
        for (j, c) in [LightColor::Red, LightColor::Yellow, LightColor::Green].into_iter().enumerate() {
            let cy = LIGHT_MARGIN_PX + LIGHT_RADIUS_PX + j as f64 * (2.0 * LIGHT_RADIUS_PX + 4.0);
            let (fill, class) = if c == active { (c.fill(), "lamp on") } else { (LIGHT_OFF, "lamp") };
            let _ = writeln!(s.lights, "<circle class=\"{class}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/>", n(x), n(cy), n(LIGHT_RADIUS_PX));
        }
        let _ = writeln!(s.lights, "</g>");
        let ty = LIGHT_MARGIN_PX + 6.0 * LIGHT_RADIUS_PX + 32.0;
        let _ = writeln!(
            s.text,
            "<text class=\"countdown\" id=\"countdown-sg{}\" x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            m.signal_group,
            n(x),
            n(ty),
            countdown_text(m.min_end_time)
        );
    }
}

/// Draws the users that have a position; returns how many were skipped.
fn draw_users(s: &mut Sections, users: &[BsmCore], vp: &Viewport) -> usize {
    let mut skipped = 0;
    for u in users {
        let (Some(lat), Some(lon)) = (u.lat_deg(), u.lon_deg()) else {
            skipped += 1;
            continue;
        };
        let Some((x, y)) = vp.project(&GeoPoint::new(lat, lon, 0.0)) else {
            skipped += 1;
            continue;
        };
        if u.role == Role::Pedestrian {
            let _ = writeln!(
                s.users,
                "<circle class=\"pedestrian\" id=\"user-{}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{PEDESTRIAN_FILL}\"/>",
                u.temporary_id,
                n(x),
                n(y),
                n(PEDESTRIAN_RADIUS_M / vp.meters_per_pixel)
            );
            continue;
        }
        let w = VEHICLE_WIDTH_M / vp.meters_per_pixel;
        let h = VEHICLE_LENGTH_M / vp.meters_per_pixel;
        let heading = u.heading_deg().unwrap_or(0.0);
        let _ = writeln!(s.users, "<g class=\"vehicle\" id=\"user-{}\" transform=\"rotate({} {} {})\">", u.temporary_id, n(heading), n(x), n(y));
        let _ = writeln!(
            s.users,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"#000000\" stroke-width=\"1\"/>",
            n(x - w / 2.0),
            n(y - h / 2.0),
            n(w),
            n(h),
            color_from_id(&u.temporary_id).hex()
        );
        let _ = writeln!(s.users, "</g>");
    }
    skipped
}

fn finish(s: Sections, vp: &Viewport, caption: Option<&str>) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        o,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = vp.width_px,
        h = vp.height_px
    );
    let _ = writeln!(o, "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"{BACKGROUND}\"/>", vp.width_px, vp.height_px);
    if let Some(u) = &vp.underlay {
        let _ = writeln!(o, "<image x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" xlink:href=\"{}\"/>", vp.width_px, vp.height_px, xml_escape(u));
    }
    o.push_str(&s.lanes);
    o.push_str(&s.reference);
    o.push_str(&s.lights);
    o.push_str(&s.users);
    o.push_str(&s.text);
    if let Some(c) = caption {
        let _ = writeln!(
            o,
            "<text class=\"caption\" x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"14\">{}</text>",
            n(LIGHT_MARGIN_PX),
            n(f64::from(vp.height_px) - 12.0),
            xml_escape(c)
        );
    }
    o.push_str("</svg>\n");
    o
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Lanes, reference point and one traffic light per signal group with its
/// remaining time beneath.
pub fn render_intersection_frame(map: &MapData, spat: &SpatData, vp: &Viewport) -> Result<Frame, RenderError> {
    if map.intersection_id != spat.intersection_id {
        return Err(RenderError::MismatchedIntersection { map: map.intersection_id, spat: spat.intersection_id });
    }
    let mut s = Sections::default();
    draw_map(&mut s, map, vp);
    draw_lights(&mut s, spat);
    Ok(Frame { svg: finish(s, vp, None), skipped_users: 0 })
}

/// Lanes and reference point with the given road users on top.
pub fn render_users_frame(users: &[BsmCore], map: &MapData, vp: &Viewport) -> Frame {
    let mut s = Sections::default();
    draw_map(&mut s, map, vp);
    let skipped_users = draw_users(&mut s, users, vp);
    Frame { svg: finish(s, vp, None), skipped_users }
}

/// One frame of a sequence: whatever MAP/SPaT/users are current.
pub fn render_scene(map: Option<&MapData>, spat: Option<&SpatData>, users: &[BsmCore], vp: &Viewport, caption: Option<&str>) -> Frame {
    let mut s = Sections::default();
    if let Some(m) = map {
        draw_map(&mut s, m, vp);
    }
    if let Some(sp) = spat.filter(|sp| map.is_none_or(|m| m.intersection_id == sp.intersection_id)) {
        draw_lights(&mut s, sp);
    }
    let skipped_users = draw_users(&mut s, users, vp);
    Frame { svg: finish(s, vp, caption), skipped_users }
}

/// Frames every `step_s` from the first to the last record. Each shows the
/// latest MAP and SPaT at or before the frame time and every user whose
/// latest BSM is at most [`STALENESS_S`] old.
pub fn render_sequence(captures: &[&CaptureFile], vp: &Viewport, step_s: f64, encap: Encapsulation) -> Result<Vec<Frame>, RenderError> {
    if !(step_s > 0.0 && step_s.is_finite()) {
        return Err(RenderError::InvalidParameter(format!("step {step_s}")));
    }
    let mut timeline: Vec<(u64, MessageFrame)> = Vec::new();
    for c in captures {
        for r in &c.records {
            if let Some(f) = extract_payload(r, encap).ok().and_then(|p| decode_frame(p).ok()) {
                timeline.push((r.timestamp_nanos(c.time_resolution), f));
            }
        }
    }
    if timeline.is_empty() {
        return Err(RenderError::EmptyCapture);
    }
    timeline.sort_by_key(|(t, _)| *t);
    let first = timeline[0].0;
    let last = timeline[timeline.len() - 1].0;
    let step_ns = ((step_s * 1e9).round() as u64).max(1);
    let stale_ns = (STALENESS_S * 1e9) as u64;

    let mut frames = Vec::new();
    let mut map: Option<MapData> = None;
    let mut spat: Option<SpatData> = None;
    let mut users: BTreeMap<TemporaryId, (u64, BsmCore)> = BTreeMap::new();
    let mut next = 0;
    let mut k = 0u64;
    loop {
        let t = first + k * step_ns;
        if t > last {
            break;
        }
        while next < timeline.len() && timeline[next].0 <= t {
            let (ts, f) = &timeline[next];
            match f {
                MessageFrame::Map(m) => map = Some(m.clone()),
                MessageFrame::Spat(s) => spat = Some(s.clone()),
                MessageFrame::Bsm(b) => {
                    users.insert(b.temporary_id, (*ts, *b));
                }
            }
            next += 1;
        }
        let live: Vec<BsmCore> = users.values().filter(|(ts, _)| t - ts <= stale_ns).map(|(_, b)| *b).collect();
        let caption = format!("t = {}.{:03} s", (t - first) / 1_000_000_000, (t - first) % 1_000_000_000 / 1_000_000);
        frames.push(render_scene(map.as_ref(), spat.as_ref(), &live, vp, Some(&caption)));
        k += 1;
    }
    Ok(frames)
}

/// `frame_000001.svg`, `frame_000002.svg`, ...
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{:06}.svg", index + 1)
}

pub fn write_frames(frames: &[Frame], dir: &Path) -> Result<Vec<PathBuf>, RenderError> {
    std::fs::create_dir_all(dir)?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(frame_file_name(i));
            std::fs::write(&p, &f.svg)?;
            Ok(p)
        })
        .collect()
}
