use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use v2xviz_core::ima::{format_advisory, HostSample, HostState, HostTrajectory, ImaApp, ImaConfig, SecMarkClock};
use v2xviz_core::j2735::export::{bsm_to_csv, map_to_text, BSM_CSV_HEADER};
use v2xviz_core::j2735::{decode_frame, MessageFrame};
use v2xviz_core::pcap::{extract_payload, parse_capture, write_capture, CaptureFile, Encapsulation, PcapError};
use v2xviz_core::render::{render_sequence, write_frames, Viewport};
use v2xviz_core::replay::{replay, Listener, ReceivedMessage, ReplayConfig, StopHandle};
use v2xviz_core::scenario::*;
use v2xviz_core::GeoPoint;

use crate::args::*;
use crate::CliError;

/// Reads a capture; a truncated tail is reported and the complete records kept.
pub fn read_pcap(path: &Path) -> Result<CaptureFile, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    match parse_capture(&bytes) {
        Ok(c) => Ok(c),
        Err(PcapError::TruncatedRecord { partial, index, .. }) => {
            eprintln!("warning: {}: record {index} is truncated; keeping {} complete records", path.display(), partial.records.len());
            Ok(*partial)
        }
        Err(e) => Err(CliError::Input(format!("{}: {e}", path.display()))),
    }
}

pub fn write_pcap(path: &Path, c: &CaptureFile) -> Result<(), CliError> {
    let bytes = write_capture(c).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn require_records(c: &CaptureFile, path: &Path) -> Result<(), CliError> {
    if c.records.is_empty() {
        return Err(CliError::Data(format!("{}: capture has no records", path.display())));
    }
    Ok(())
}

fn decoded(c: &CaptureFile, encap: Encapsulation) -> Vec<(u64, MessageFrame)> {
    c.records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| extract_payload(r, encap).ok().and_then(|p| decode_frame(p).ok()).map(|f| (c.timestamp_nanos(i), f)))
        .collect()
}

pub fn decode(a: &DecodeArgs) -> Result<(), CliError> {
    let c = read_pcap(&a.input)?;
    let frames = decoded(&c, a.encap.encap);
    if frames.is_empty() {
        return Err(CliError::Data(format!("{}: no decodable records out of {}", a.input.display(), c.records.len())));
    }
    let count = |id| frames.iter().filter(|(_, f)| f.message_id() == id).count();
    println!(
        "{}: {} records, {} decoded (MAP {}, SPaT {}, BSM {}), {} undecodable",
        a.input.display(),
        c.records.len(),
        frames.len(),
        count(18),
        count(19),
        count(20),
        c.records.len() - frames.len()
    );
    if let Some(p) = &a.bsm_csv {
        let rows: Vec<_> = frames.iter().filter_map(|(t, f)| f.as_bsm().map(|b| (*t, *b))).collect();
        write_text(p, &bsm_to_csv(&rows))?;
    }
    if let Some(p) = &a.map_text {
        let map = frames.iter().find_map(|(_, f)| match f {
            MessageFrame::Map(m) => Some(m),
            _ => None,
        });
        let map = map.ok_or_else(|| CliError::Data(format!("{}: no MAP message", a.input.display())))?;
        write_text(p, &map_to_text(map))?;
    }
    Ok(())
}

pub fn isolate(a: &IsolateArgs) -> Result<(), CliError> {
    let c = read_pcap(&a.input)?;
    require_records(&c, &a.input)?;
    let (out, s) = isolate_bsm(&c, a.encap.encap);
    write_pcap(&a.out, &out)?;
    println!("kept {} BSM records; dropped {} other messages and {} undecodable records", s.kept, s.other_messages, s.undecodable);
    Ok(())
}

pub fn relocate_cmd(a: &RelocateArgs) -> Result<(), CliError> {
    let c = read_pcap(&a.input)?;
    require_records(&c, &a.input)?;
    let spec = RelocationSpec::new(a.src, a.dst, a.delta_heading).map_err(|e| CliError::Input(e.to_string()))?;
    let (out, s) = relocate(&c, &spec, a.encap.encap).map_err(|e| CliError::Data(e.to_string()))?;
    write_pcap(&a.out, &out)?;
    println!("relocated {} BSMs; {} without a position passed through", s.relocated, s.unavailable_position);
    Ok(())
}

pub fn filter(a: &FilterArgs) -> Result<(), CliError> {
    let c = read_pcap(&a.input)?;
    require_records(&c, &a.input)?;
    let f = ApproachFilter::new(a.center, a.half_width).map_err(|e| CliError::Input(e.to_string()))?;
    let out = filter_approaching(&c, &a.reference, &f, a.encap.encap);
    write_pcap(&a.out, &out)?;
    println!("kept {} of {} records", out.records.len(), c.records.len());
    Ok(())
}

pub fn synth(cmd: &SynthCommand) -> Result<(), CliError> {
    let input = |e: ScenarioError| CliError::Input(e.to_string());
    let (out, c) = match cmd {
        SynthCommand::Signal(a) => {
            let cfg = SignalIntersectionConfig {
                duration_s: a.duration,
                pedestal: match a.pedestal {
                    Pedestal::CountUp => PedestalBehavior::default(),
                    Pedestal::OneSecond => PedestalBehavior::OneSecondCycle,
                },
                button_presses: a.press.clone(),
                walk_s: a.walk,
                reference: a.reference,
                intersection_id: a.id,
                ..Default::default()
            };
            (&a.out, synth_signal_intersection(&cfg).map_err(input)?)
        }
        SynthCommand::Traffic(a) => {
            let side = |count| ApproachTraffic { count, speed_mps: a.speed, start_m: a.start, spacing_m: a.spacing };
            let cfg = TrafficIntersectionConfig {
                duration_s: a.duration,
                approaches: [side(a.north), side(a.east), side(a.south), side(a.west)],
                include_pedestrian: a.pedestrian,
                reference: a.reference,
                intersection_id: a.id,
                ..Default::default()
            };
            (&a.out, synth_traffic_intersection(&cfg).map_err(input)?)
        }
    };
    write_pcap(out, &c)?;
    println!("wrote {} records to {}", c.records.len(), out.display());
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    let mut captures = Vec::new();
    for p in a.input.iter().chain(&a.map) {
        captures.push(read_pcap(p)?);
    }
    let center = match a.center {
        Some(c) => c,
        None => captures
            .iter()
            .flat_map(|c| decoded(c, a.encap.encap))
            .find_map(|(_, f)| match f {
                MessageFrame::Map(m) => Some(GeoPoint::from_counts(m.ref_point.latitude, m.ref_point.longitude, 0)),
                _ => None,
            })
            .ok_or_else(|| CliError::Data("no MAP found; pass --center".into()))?,
    };
    let mut vp = Viewport::new(center, a.mpp, a.size.0, a.size.1).map_err(|e| CliError::Input(e.to_string()))?;
    vp.underlay = a.underlay.clone();
    let refs: Vec<&CaptureFile> = captures.iter().collect();
    let frames = render_sequence(&refs, &vp, a.step, a.encap.encap).map_err(|e| match e {
        v2xviz_core::render::RenderError::InvalidParameter(_) => CliError::Input(e.to_string()),
        _ => CliError::Data(e.to_string()),
    })?;
    let paths = write_frames(&frames, &a.out).map_err(|e| CliError::Input(e.to_string()))?;
    let skipped: usize = frames.iter().map(|f| f.skipped_users).sum();
    println!("wrote {} frames to {} ({} user positions unavailable)", paths.len(), a.out.display(), skipped);
    Ok(())
}

pub fn replay_cmd(a: &ReplayArgs) -> Result<(), CliError> {
    let c = read_pcap(&a.input)?;
    require_records(&c, &a.input)?;
    let cfg = ReplayConfig::new(a.dest, a.speed, a.loops).map_err(|e| CliError::Input(e.to_string()))?;
    let r = replay(&c, &cfg, a.encap.encap).map_err(|e| CliError::Input(e.to_string()))?;
    println!(
        "sent {} datagrams to {} ({} skipped, {} unreachable), max timing error {:.3} ms",
        r.sent,
        a.dest,
        r.skipped,
        r.unreachable,
        r.max_timing_error_s * 1e3
    );
    Ok(())
}

fn epoch_nanos() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0)
}

/// Runs `listener` until the stop conditions hold, feeding `sink`.
fn run_listener<F: FnMut(ReceivedMessage)>(listener: Listener, stop_args: &StopArgs, mut sink: F) -> Result<v2xviz_core::replay::ListenStats, CliError> {
    let stop = StopHandle::new();
    if let Some(d) = stop_args.duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::Input(format!("--duration must be positive, got {d}")));
        }
        let s = stop.clone();
        let deadline = Instant::now() + Duration::from_secs_f64(d);
        std::thread::spawn(move || {
            while Instant::now() < deadline && !s.is_stopped() {
                std::thread::sleep(Duration::from_millis(20));
            }
            s.stop();
        });
    }
    let limit = stop_args.count;
    let mut n = 0u64;
    let s = stop.clone();
    listener
        .run(
            |m| {
                sink(m);
                n += 1;
                if limit.is_some_and(|l| n >= l) {
                    s.stop();
                }
            },
            &stop,
        )
        .map_err(|e| CliError::Input(e.to_string()))
}

pub fn listen(a: &ListenArgs) -> Result<(), CliError> {
    let listener = Listener::bind(a.port).map_err(|e| CliError::Input(e.to_string()))?;
    let mut csv = match &a.csv {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))?);
            writeln!(w, "{BSM_CSV_HEADER}").map_err(|e| CliError::Input(e.to_string()))?;
            Some(w)
        }
        None => None,
    };
    let mut io_error = None;
    let stats = run_listener(listener, &a.stop, |m| {
        let kind = match &m.frame {
            MessageFrame::Map(x) => format!("MAP intersection {}", x.intersection_id),
            MessageFrame::Spat(x) => format!("SPaT intersection {} revision {}", x.intersection_id, x.revision),
            MessageFrame::Bsm(b) => format!("BSM {} sec_mark {}", b.temporary_id, b.sec_mark),
        };
        println!("{:.3} {kind}", m.arrival_monotonic);
        if let (Some(w), MessageFrame::Bsm(b)) = (csv.as_mut(), &m.frame) {
            let row = bsm_to_csv(&[(epoch_nanos(), *b)]);
            let body = row.split_once('\n').map_or("", |(_, r)| r);
            if let Err(e) = w.write_all(body.as_bytes()).and_then(|_| w.flush()) {
                io_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(CliError::Input(format!("writing CSV: {e}")));
    }
    eprintln!("received {}, decode failures {}, dropped {}", stats.received, stats.decode_failures, stats.dropped);
    Ok(())
}

#[derive(Debug, serde::Deserialize)]
struct HostRow {
    timestamp: f64,
    lat: f64,
    lon: f64,
    speed_mps: f64,
    heading_deg: f64,
}

/// Host trajectory CSV with a header naming timestamp, lat, lon, speed_mps, heading_deg.
pub fn read_host_log(path: &Path) -> Result<HostTrajectory, CliError> {
    let bad = |e: String| CliError::Input(format!("{}: {e}", path.display()));
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut samples = Vec::new();
    for row in r.deserialize::<HostRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let state = HostState::new(GeoPoint::new(row.lat, row.lon, 0.0), row.speed_mps, row.heading_deg).map_err(|e| bad(e.to_string()))?;
        samples.push(HostSample { time_s: row.timestamp, state });
    }
    HostTrajectory::new(samples).map_err(|e| bad(e.to_string()))
}

pub fn ima(a: &ImaArgs) -> Result<(), CliError> {
    let host = read_host_log(&a.host_log)?;
    let cfg = ImaConfig::new(a.reference, a.tsafety, a.timeout).map_err(|e| CliError::Input(e.to_string()))?;
    let listener = Listener::bind(a.port).map_err(|e| CliError::Input(e.to_string()))?;
    let mut app = ImaApp::new(cfg);
    let mut clock = SecMarkClock::new();
    let stats = run_listener(listener, &a.stop, |m| {
        let Some(b) = m.frame.as_bsm() else {
            return;
        };
        let t = clock.observe(b.sec_mark);
        let adv = app.step(&host.state_at(t), &m, m.arrival_monotonic);
        println!("--- t={t:.1} s");
        print!("{}", format_advisory(&adv));
        let _ = std::io::stdout().flush();
    })?;
    eprintln!("received {}, decode failures {}, dropped {}", stats.received, stats.decode_failures, stats.dropped);
    Ok(())
}
