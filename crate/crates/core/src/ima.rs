//! Intersection Movement Assist: track remote vehicles from their BSMs and
//! warn when host and remote are predicted to reach the intersection within
//! a safety margin of each other.
//!
//! Time to intersection is `t = d / v` with `d` the straight-line horizontal
//! distance to the intersection reference point. A warning is raised when
//! `t_remote - t_safety/2 < t_host < t_remote + t_safety/2`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geo::{to_local, GeoError, GeoPoint};
use crate::j2735::{BsmCore, MessageFrame, TemporaryId, MPS_PER_SPEED_COUNT};
use crate::replay::ReceivedMessage;

/// Distances are compared at the resolution they are displayed with.
pub const DISTANCE_RESOLUTION_M: f64 = 0.1;
pub const DEFAULT_T_SAFETY_S: f64 = 3.0;
pub const DEFAULT_TRACK_TIMEOUT_S: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImaError {
    #[error("negative input: distance {distance_m} m, speed {speed_mps} m/s")]
    NegativeInput { distance_m: f64, speed_mps: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeToIntersection {
    Seconds(f64),
    /// Stationary: never reaches the intersection.
    NotApproaching,
}

impl TimeToIntersection {
    pub fn seconds(self) -> Option<f64> {
        match self {
            TimeToIntersection::Seconds(t) => Some(t),
            TimeToIntersection::NotApproaching => None,
        }
    }
}

pub fn time_to_intersection(distance_m: f64, speed_mps: f64) -> Result<TimeToIntersection, ImaError> {
    if distance_m < 0.0 || speed_mps < 0.0 || distance_m.is_nan() || speed_mps.is_nan() {
        return Err(ImaError::NegativeInput { distance_m, speed_mps });
    }
    if speed_mps == 0.0 {
        return Ok(TimeToIntersection::NotApproaching);
    }
    Ok(TimeToIntersection::Seconds(distance_m / speed_mps))
}

/// The warning inequality, strict on both sides.
pub fn check_warning(t_host: f64, t_remote: f64, t_safety: f64) -> bool {
    t_remote - t_safety / 2.0 < t_host && t_host < t_remote + t_safety / 2.0
}

/// The warning inequality evaluated from distances and speeds without the
/// divisions: `|d_h*v_r - d_r*v_h| < t_safety/2 * v_h*v_r`. Algebraically the
/// same as [`check_warning`] on `d/v` for positive speeds, but exact when
/// the inputs are exactly representable, so ties are decided correctly.
/// Stationary vehicles never warn.
pub fn predict_conflict(d_host: f64, v_host: f64, d_remote: f64, v_remote: f64, t_safety: f64) -> Result<bool, ImaError> {
    let th = time_to_intersection(d_host, v_host)?;
    let tr = time_to_intersection(d_remote, v_remote)?;
    if th == TimeToIntersection::NotApproaching || tr == TimeToIntersection::NotApproaching {
        return Ok(false);
    }
    Ok((d_host * v_remote - d_remote * v_host).abs() < t_safety / 2.0 * v_host * v_remote)
}

/// [`predict_conflict`] on distances rounded to [`DISTANCE_RESOLUTION_M`] and
/// speeds rounded to the BSM speed count. Both become small integers, so
/// every product below is exact and ties (such as two vehicles a constant
/// `t_safety/2` apart) are decided the same way at every sample.
fn quantized_conflict(d_host: f64, v_host: f64, d_remote: f64, v_remote: f64, t_safety: f64) -> bool {
    let dh = (d_host / DISTANCE_RESOLUTION_M).round();
    let dr = (d_remote / DISTANCE_RESOLUTION_M).round();
    let vh = (v_host / MPS_PER_SPEED_COUNT).round();
    let vr = (v_remote / MPS_PER_SPEED_COUNT).round();
    if vh <= 0.0 || vr <= 0.0 {
        return false;
    }
    // t = d/v = 5*dh/vh seconds, so |t_h - t_r| < t_s/2 <=> 10*|dh*vr - dr*vh| < t_s*vh*vr
    10.0 * (dh * vr - dr * vh).abs() < t_safety * vh * vr
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostState {
    pub position: GeoPoint,
    pub speed_mps: f64,
    pub heading_deg: f64,
}

impl HostState {
    pub fn new(position: GeoPoint, speed_mps: f64, heading_deg: f64) -> Result<Self, ImaError> {
        if !(speed_mps.is_finite() && speed_mps >= 0.0) {
            return Err(ImaError::NegativeInput { distance_m: 0.0, speed_mps });
        }
        Ok(HostState { position, speed_mps, heading_deg })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemoteTrack {
    pub id: TemporaryId,
    pub position: GeoPoint,
    pub distance_m: f64,
    /// `None` when the BSM reports speed unavailable.
    pub speed_mps: Option<f64>,
    pub heading_deg: Option<f64>,
    pub last_seen: f64,
}

impl RemoteTrack {
    pub fn time_to_intersection(&self) -> TimeToIntersection {
        match self.speed_mps {
            Some(v) => time_to_intersection(self.distance_m, v).unwrap_or(TimeToIntersection::NotApproaching),
            None => TimeToIntersection::NotApproaching,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImaConfig {
    pub t_safety_s: f64,
    pub intersection_ref: GeoPoint,
    pub track_timeout_s: f64,
}

impl ImaConfig {
    pub fn new(intersection_ref: GeoPoint, t_safety_s: f64, track_timeout_s: f64) -> Result<Self, ImaError> {
        if !(t_safety_s > 0.0 && t_safety_s.is_finite()) {
            return Err(ImaError::InvalidConfig(format!("t_safety must be positive, got {t_safety_s}")));
        }
        if !(track_timeout_s > 0.0 && track_timeout_s.is_finite()) {
            return Err(ImaError::InvalidConfig(format!("track timeout must be positive, got {track_timeout_s}")));
        }
        Ok(ImaConfig { t_safety_s, intersection_ref, track_timeout_s })
    }

    pub fn with_defaults(intersection_ref: GeoPoint) -> Self {
        ImaConfig { t_safety_s: DEFAULT_T_SAFETY_S, intersection_ref, track_timeout_s: DEFAULT_TRACK_TIMEOUT_S }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Advisory {
    /// Live tracks in ID order.
    pub tracks: Vec<RemoteTrack>,
    pub warning: bool,
    pub offending: Option<RemoteTrack>,
    pub host_time_s: Option<f64>,
    /// The message was not a BSM and left the track table untouched.
    pub ignored: bool,
}

/// Track table plus warning logic. One owner drives it message by message.
#[derive(Debug, Clone)]
pub struct ImaApp {
    config: ImaConfig,
    tracks: BTreeMap<TemporaryId, RemoteTrack>,
}

impl ImaApp {
    pub fn new(config: ImaConfig) -> Self {
        ImaApp { config, tracks: BTreeMap::new() }
    }

    pub fn config(&self) -> &ImaConfig {
        &self.config
    }

    pub fn track_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn step(&mut self, host: &HostState, msg: &ReceivedMessage, now: f64) -> Advisory {
        let bsm = match &msg.frame {
            MessageFrame::Bsm(b) => Some(b),
            _ => None,
        };
        if let Some(b) = bsm {
            self.observe(b, now);
        }
        let mut adv = self.evaluate(host, now);
        adv.ignored = bsm.is_none();
        adv
    }

    /// Updates the track for this BSM. BSMs without a position, or too far
    /// from the intersection for the local frame, are dropped.
    pub fn observe(&mut self, bsm: &BsmCore, now: f64) {
        let (Some(lat), Some(lon)) = (bsm.lat_deg(), bsm.lon_deg()) else {
            return;
        };
        let position = GeoPoint::new(lat, lon, bsm.elev_m().unwrap_or(0.0));
        let Ok(lp) = to_local(&self.config.intersection_ref, &position) else {
            return;
        };
        self.tracks.insert(
            bsm.temporary_id,
            RemoteTrack {
                id: bsm.temporary_id,
                position,
                distance_m: lp.horizontal_norm(),
                speed_mps: bsm.speed_mps(),
                heading_deg: bsm.heading_deg(),
                last_seen: now,
            },
        );
    }

    /// Evicts stale tracks, then checks every live track against the host.
    pub fn evaluate(&mut self, host: &HostState, now: f64) -> Advisory {
        let timeout = self.config.track_timeout_s;
        self.tracks.retain(|_, t| now - t.last_seen <= timeout);

        let d_host = to_local(&self.config.intersection_ref, &host.position).map(|lp| lp.horizontal_norm());
        let host_time = d_host.as_ref().ok().and_then(|&d| time_to_intersection(d, host.speed_mps).ok()).and_then(TimeToIntersection::seconds);

        let mut best: Option<(f64, RemoteTrack)> = None;
        if let (Ok(dh), Some(th)) = (d_host, host_time) {
            for t in self.tracks.values() {
                let (Some(vr), Some(tr)) = (t.speed_mps, t.time_to_intersection().seconds()) else {
                    continue;
                };
                if quantized_conflict(dh, host.speed_mps, t.distance_m, vr, self.config.t_safety_s) {
                    let gap = (th - tr).abs();
                    if best.as_ref().is_none_or(|(g, _)| gap < *g) {
                        best = Some((gap, *t));
                    }
                }
            }
        }
        Advisory {
            tracks: self.tracks.values().copied().collect(),
            warning: best.is_some(),
            offending: best.map(|(_, t)| t),
            host_time_s: host_time,
            ignored: false,
        }
    }
}

/// One row of a scripted host trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostSample {
    pub time_s: f64,
    pub state: HostState,
}

/// Host trajectory sampled at increasing times, linearly interpolated.
/// Times are relative to the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HostTrajectory {
    samples: Vec<HostSample>,
}

impl HostTrajectory {
    pub fn new(mut samples: Vec<HostSample>) -> Result<Self, ImaError> {
        if samples.is_empty() {
            return Err(ImaError::InvalidConfig("host trajectory has no samples".into()));
        }
        if samples.windows(2).any(|w| w[1].time_s.partial_cmp(&w[0].time_s) != Some(std::cmp::Ordering::Greater)) {
            return Err(ImaError::InvalidConfig("host trajectory times must strictly increase".into()));
        }
        let t0 = samples[0].time_s;
        for s in &mut samples {
            s.time_s -= t0;
        }
        Ok(HostTrajectory { samples })
    }

    /// Straight constant-speed drive: `distance_m` from `reference` on the
    /// side given by `from_bearing_deg`, heading at the reference and beyond.
    pub fn straight(reference: &GeoPoint, from_bearing_deg: f64, distance_m: f64, speed_mps: f64, duration_s: f64, step_s: f64) -> Result<Self, ImaError> {
        if !(step_s > 0.0 && duration_s >= 0.0) {
            return Err(ImaError::InvalidConfig(format!("step {step_s}, duration {duration_s}")));
        }
        let out = crate::geo::LocalPoint::new(0.0, 1.0, 0.0).rotated(from_bearing_deg);
        let heading = crate::geo::normalize_deg(from_bearing_deg + 180.0);
        let n = (duration_s / step_s).round() as usize;
        let samples = (0..=n)
            .map(|k| {
                let t = k as f64 * step_s;
                let a = distance_m - speed_mps * t;
                let lp = crate::geo::LocalPoint::new(out.east_m * a, out.north_m * a, 0.0);
                HostState::new(crate::geo::from_local(reference, &lp), speed_mps, heading).map(|state| HostSample { time_s: t, state })
            })
            .collect::<Result<Vec<_>, _>>()?;
        HostTrajectory::new(samples)
    }

    pub fn samples(&self) -> &[HostSample] {
        &self.samples
    }

    pub fn duration_s(&self) -> f64 {
        self.samples[self.samples.len() - 1].time_s
    }

    /// State at `t` seconds after the first sample, clamped to the ends.
    pub fn state_at(&self, t: f64) -> HostState {
        let s = &self.samples;
        let i = s.partition_point(|x| x.time_s <= t);
        if i == 0 {
            return s[0].state;
        }
        if i == s.len() {
            return s[s.len() - 1].state;
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let f = (t - a.time_s) / (b.time_s - a.time_s);
        let lerp = |x: f64, y: f64| x + (y - x) * f;
        HostState {
            position: GeoPoint::new(
                lerp(a.state.position.lat_deg, b.state.position.lat_deg),
                lerp(a.state.position.lon_deg, b.state.position.lon_deg),
                lerp(a.state.position.elev_m, b.state.position.elev_m),
            ),
            speed_mps: lerp(a.state.speed_mps, b.state.speed_mps),
            heading_deg: a.state.heading_deg,
        }
    }
}

/// Turns BSM `sec_mark` values (milliseconds within the minute) into a
/// continuous clock relative to the first message seen. Gaps longer than a
/// minute cannot be detected.
#[derive(Debug, Clone, Default)]
pub struct SecMarkClock {
    first: Option<u16>,
    last: u16,
    minutes: u64,
}

impl SecMarkClock {
    pub fn new() -> Self {
        SecMarkClock::default()
    }

    /// Seconds since the first observed sec_mark. A step backwards counts as
    /// a minute rollover unless it is less than `REORDER_MS`, which is treated
    /// as reordering within the same minute.
    pub fn observe(&mut self, sec_mark: u16) -> f64 {
        const REORDER_MS: u16 = 30_000;
        let sec_mark = sec_mark.min(59_999);
        let Some(first) = self.first else {
            self.first = Some(sec_mark);
            self.last = sec_mark;
            return 0.0;
        };
        let mut minutes = self.minutes;
        if sec_mark < self.last && self.last - sec_mark >= REORDER_MS {
            self.minutes += 1;
            minutes = self.minutes;
        } else if sec_mark > self.last && sec_mark - self.last >= REORDER_MS && minutes > 0 {
            minutes -= 1;
        }
        if minutes == self.minutes {
            self.last = sec_mark;
        }
        ((minutes * 60_000 + u64::from(sec_mark)) as f64 - f64::from(first)) / 1000.0
    }
}

fn one_dp(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.1}"),
        None => "n/a".to_string(),
    }
}

/// One line per track, then the warning line when raised.
pub fn format_advisory(a: &Advisory) -> String {
    let mut o = String::new();
    for t in &a.tracks {
        let _ = writeln!(o, "id={} dist={:.1} speed={} hdg={}", t.id, t.distance_m, one_dp(t.speed_mps), one_dp(t.heading_deg));
    }
    if let (true, Some(t)) = (a.warning, &a.offending) {
        let _ = writeln!(o, "IMA WARNING: VEHICLE {} dist={:.1} speed={}", t.id, t.distance_m, one_dp(t.speed_mps));
    }
    o
}
