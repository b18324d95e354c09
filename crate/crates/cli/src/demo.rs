//! The whole loop run locally: synthetic four-way traffic is cut down to
//! the north approach, moved to another intersection, replayed over loopback
//! and fed to the IMA application while a scripted host vehicle drives in
//! from the east.

use std::path::Path;
use std::thread;
use std::time::Duration;

use v2xviz_core::ima::{format_advisory, HostTrajectory, ImaApp, ImaConfig, SecMarkClock};
use v2xviz_core::pcap::Encapsulation;
use v2xviz_core::replay::{replay_until, Listener, ReplayConfig, StopHandle};
use v2xviz_core::scenario::*;
use v2xviz_core::GeoPoint;

use crate::commands::write_pcap;
use crate::CliError;

/// One BSM period; the observed window may differ from the analytic one by this much.
pub const BSM_PERIOD_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub reference: GeoPoint,
    pub delta_heading_deg: f64,
    pub host_distance_m: f64,
    pub host_speed_mps: f64,
    pub remote_distance_m: f64,
    pub remote_speed_mps: f64,
    pub t_safety_s: f64,
    pub port: u16,
    pub replay_speed: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            reference: GeoPoint::new(39.9612, -83.0105, 230.0),
            delta_heading_deg: 0.0,
            host_distance_m: 150.0,
            host_speed_mps: 10.0,
            remote_distance_m: 165.0,
            remote_speed_mps: 10.0,
            t_safety_s: 3.0,
            port: 0,
            replay_speed: 1.0,
        }
    }
}

/// Seconds (since the remote's first BSM) during which the warning condition
/// holds, as an open interval. The host drives straight through the
/// intersection, so its distance is `|d_h - v_h t|`; the remote stops
/// publishing when it reaches the intersection at `d_r / v_r`.
pub fn analytic_window(d_h: f64, v_h: f64, d_r: f64, v_r: f64, t_safety: f64) -> Option<(f64, f64)> {
    if !(v_h > 0.0 && v_r > 0.0) {
        return None;
    }
    let (a, b, half) = (d_h / v_h, d_r / v_r, t_safety / 2.0);
    // Before the host passes, t_h - t_r = a - b; afterwards it grows as 2t - a - b.
    let start = if (a - b).abs() < half { 0.0 } else { a.max((a + b - half) / 2.0) };
    let end = b.min((a + b + half) / 2.0);
    (end > start).then_some((start, end))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub synthesized: usize,
    pub approaching: usize,
    pub sent: usize,
    pub received: usize,
    pub analytic: Option<(f64, f64)>,
    /// First and last BSM time with a warning.
    pub observed: Option<(f64, f64)>,
    /// Samples between the first and last warning that did not warn.
    pub gaps: usize,
    pub final_advisory: String,
    pub advisories: Vec<(f64, String)>,
}

impl DemoReport {
    pub fn ok(&self) -> bool {
        let tol = BSM_PERIOD_S + 1e-6;
        match (self.analytic, self.observed) {
            (None, None) => true,
            (Some((a0, a1)), Some((o0, o1))) => (o0 - a0).abs() <= tol && (o1 - a1).abs() <= tol && self.gaps == 0,
            _ => false,
        }
    }

    pub fn summary(&self) -> String {
        match (self.analytic, self.observed) {
            (None, None) => "no warning expected, none observed".to_string(),
            (None, Some((o0, o1))) => format!("no warning expected, observed [{o0:.2}, {o1:.2}]"),
            (Some((a0, a1)), None) => format!("warning window [{a0:.2}, {a1:.2}] observed none"),
            (Some((a0, a1)), Some((o0, o1))) => format!(
                "warning window [{a0:.2}, {a1:.2}] observed [{o0:.2}, {o1:.2}], overlap {}",
                if self.ok() { "OK" } else { "MISMATCH" }
            ),
        }
    }
}

/// Runs the loop. With `keep`, the intermediate captures are written there.
pub fn pipeline_demo(cfg: &DemoConfig, keep: Option<&Path>) -> Result<DemoReport, CliError> {
    let input = |e: String| CliError::Input(e);
    let data = |e: String| CliError::Data(e);

    // Recorded intersection with traffic on every side; only the north side matters.
    let side = |d: f64, v: f64| ApproachTraffic { count: 1, speed_mps: v, start_m: d, spacing_m: 0.0 };
    let other = side(cfg.remote_distance_m.max(1.0) + 40.0, 12.0);
    let traffic = TrafficIntersectionConfig {
        duration_s: cfg.remote_distance_m / cfg.remote_speed_mps + 1.0,
        approaches: [side(cfg.remote_distance_m, cfg.remote_speed_mps), other, other, other],
        ..Default::default()
    };
    let recorded = synth_traffic_intersection(&traffic).map_err(|e| input(e.to_string()))?;
    let (bsms, _) = isolate_bsm(&recorded, Encapsulation::default());
    let north = ApproachFilter::new(0.0, 45.0).map_err(|e| input(e.to_string()))?;
    let approaching = filter_approaching(&bsms, &traffic.reference, &north, Encapsulation::default());
    let spec = RelocationSpec::new(traffic.reference, cfg.reference, cfg.delta_heading_deg).map_err(|e| input(e.to_string()))?;
    let (moved, _) = relocate(&approaching, &spec, Encapsulation::default()).map_err(|e| data(e.to_string()))?;
    if moved.records.is_empty() {
        return Err(data("no approaching vehicle left after filtering".into()));
    }
    if let Some(dir) = keep {
        std::fs::create_dir_all(dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
        write_pcap(&dir.join("recorded.pcap"), &recorded)?;
        write_pcap(&dir.join("north.pcap"), &approaching)?;
        write_pcap(&dir.join("relocated.pcap"), &moved)?;
    }

    // The host comes from the side the rotated north approach does not use.
    let host_from = v2xviz_core::geo::normalize_deg(90.0 + cfg.delta_heading_deg);
    let duration = traffic.duration_s + 1.0;
    let host = HostTrajectory::straight(&cfg.reference, host_from, cfg.host_distance_m, cfg.host_speed_mps, duration, BSM_PERIOD_S)
        .map_err(|e| input(e.to_string()))?;
    let ima = ImaConfig::new(cfg.reference, cfg.t_safety_s, v2xviz_core::ima::DEFAULT_TRACK_TIMEOUT_S).map_err(|e| input(e.to_string()))?;

    let listener = Listener::bind_addr((std::net::Ipv4Addr::LOCALHOST, cfg.port).into()).map_err(|e| input(e.to_string()))?;
    let dest = listener.local_addr().map_err(|e| input(e.to_string()))?;
    let replay_cfg = ReplayConfig::new(dest, cfg.replay_speed, 1).map_err(|e| input(e.to_string()))?;
    let expected = moved.records.len();
    let stop = StopHandle::new();

    let consumer = {
        let stop = stop.clone();
        thread::spawn(move || {
            let mut app = ImaApp::new(ima);
            let mut clock = SecMarkClock::new();
            let mut advisories = Vec::new();
            let mut warnings = Vec::new();
            let mut n = 0;
            let stats = listener.run(
                |m| {
                    n += 1;
                    if let Some(sec_mark) = m.frame.as_bsm().map(|b| b.sec_mark) {
                        let t = clock.observe(sec_mark);
                        let adv = app.step(&host.state_at(t), &m, m.arrival_monotonic);
                        warnings.push((t, adv.warning));
                        advisories.push((t, format_advisory(&adv)));
                    }
                    if n >= expected {
                        stop.stop();
                    }
                },
                &stop,
            );
            stats.map(|s| (s, advisories, warnings))
        })
    };

    let sent = replay_until(&moved, &replay_cfg, Encapsulation::default(), &stop);
    // Give the listener a moment to drain, then stop it regardless.
    let guard = {
        let stop = stop.clone();
        thread::spawn(move || {
            for _ in 0..50 {
                if stop.is_stopped() {
                    return;
                }
                thread::sleep(Duration::from_millis(20));
            }
            stop.stop();
        })
    };
    let joined = consumer.join().map_err(|_| data("listener thread panicked".into()))?;
    let _ = guard.join();
    let report = sent.map_err(|e| input(e.to_string()))?;
    let (stats, advisories, warnings) = joined.map_err(|e| input(e.to_string()))?;

    let warned: Vec<f64> = warnings.iter().filter(|w| w.1).map(|w| w.0).collect();
    let observed = warned.first().zip(warned.last()).map(|(a, b)| (*a, *b));
    let gaps = observed.map_or(0, |(a, b)| warnings.iter().filter(|(t, w)| *t >= a && *t <= b && !w).count());
    Ok(DemoReport {
        synthesized: recorded.records.len(),
        approaching: approaching.records.len(),
        sent: report.sent,
        received: stats.delivered as usize,
        analytic: analytic_window(cfg.host_distance_m, cfg.host_speed_mps, cfg.remote_distance_m, cfg.remote_speed_mps, cfg.t_safety_s),
        observed,
        gaps,
        final_advisory: advisories.last().map(|a| a.1.clone()).unwrap_or_default(),
        advisories,
    })
}

impl From<&crate::args::DemoArgs> for DemoConfig {
    fn from(a: &crate::args::DemoArgs) -> Self {
        DemoConfig {
            reference: a.reference,
            delta_heading_deg: a.delta_heading,
            host_distance_m: a.host_distance,
            host_speed_mps: a.host_speed,
            remote_distance_m: a.remote_distance,
            remote_speed_mps: a.remote_speed,
            t_safety_s: a.tsafety,
            port: a.port,
            replay_speed: a.speed,
        }
    }
}

pub fn demo(a: &crate::args::DemoArgs) -> Result<(), CliError> {
    let r = pipeline_demo(&a.into(), a.keep.as_deref())?;
    if a.verbose {
        for (t, adv) in &r.advisories {
            print!("--- t={t:.1} s\n{adv}");
        }
    }
    println!("synthesized {} records, {} approaching from the north, sent {}, received {}", r.synthesized, r.approaching, r.sent, r.received);
    print!("final advisory:\n{}", r.final_advisory);
    println!("{}", r.summary());
    if r.ok() {
        Ok(())
    } else {
        Err(CliError::Data(r.summary()))
    }
}
