use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use v2xviz_core::pcap::{write_capture, CaptureFile};
use v2xviz_core::scenario::{synth_traffic_intersection, ApproachTraffic, TrafficIntersectionConfig};

fn v2xviz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_v2xviz")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One northern vehicle for half a second: one MAP and five BSMs.
fn five_bsm_capture(dir: &Path) -> PathBuf {
    let cfg = TrafficIntersectionConfig {
        duration_s: 0.5,
        approaches: [ApproachTraffic::vehicles(1), ApproachTraffic::vehicles(0), ApproachTraffic::vehicles(0), ApproachTraffic::vehicles(0)],
        ..Default::default()
    };
    let path = dir.join("five.pcap");
    std::fs::write(&path, write_capture(&synth_traffic_intersection(&cfg).unwrap()).unwrap()).unwrap();
    path
}

fn free_udp_port() -> u16 {
    UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn decode_writes_one_csv_row_per_bsm() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = five_bsm_capture(dir.path());
    let csv = dir.path().join("out.csv");
    let map = dir.path().join("map.txt");
    let o = v2xviz(&["decode", "--in", p(&pcap), "--bsm-csv", p(&csv), "--map-text", p(&map)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6, "{text}");
    assert!(text.starts_with("timestamp"));
    assert!(std::fs::read_to_string(&map).unwrap().contains("4301"));
    assert!(stdout(&o).contains('5'));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = v2xviz(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(code(&v2xviz(&["decode"])), 1);
    assert_eq!(code(&v2xviz(&["synth", "traffic", "--out", "x.pcap", "--speed", "fast"])), 1);
}

#[test]
fn help_lists_every_subcommand() {
    let o = v2xviz(&["--help"]);
    assert_eq!(code(&o), 0);
    let help = stdout(&o);
    for sub in ["decode", "isolate", "relocate", "filter", "synth", "render", "replay", "listen", "ima", "demo"] {
        assert!(help.contains(sub), "{sub} missing from --help");
    }
}

#[test]
fn empty_capture_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.pcap");
    std::fs::write(&empty, write_capture(&CaptureFile::new(147)).unwrap()).unwrap();
    let o = v2xviz(&["decode", "--in", p(&empty)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(code(&v2xviz(&["replay", "--in", p(&empty), "--dest", "127.0.0.1:9"])), 2);
}

#[test]
fn unreadable_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&v2xviz(&["decode", "--in", p(&dir.path().join("missing.pcap"))])), 1);
    let junk = dir.path().join("junk.pcap");
    std::fs::write(&junk, b"not a capture at all").unwrap();
    assert_eq!(code(&v2xviz(&["decode", "--in", p(&junk)])), 1);
}

#[test]
fn isolate_filter_relocate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let o = v2xviz(&["synth", "traffic", "--out", p(&d("all.pcap")), "--duration", "2", "--start", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&v2xviz(&["isolate", "--in", p(&d("all.pcap")), "--out", p(&d("bsm.pcap"))])), 0);
    let o = v2xviz(&["filter", "--in", p(&d("bsm.pcap")), "--out", p(&d("north.pcap")), "--ref", "40.2364,-83.3671,300"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 4 sides x 20 BSMs in; only the northern 20 survive.
    assert!(stdout(&o).contains("kept 20 of 80"), "{}", stdout(&o));
    let o = v2xviz(&["relocate", "--in", p(&d("north.pcap")), "--out", p(&d("moved.pcap")), "--src", "40.2364,-83.3671,300", "--dst", "39.9612,-83.0105,230", "--delta-heading", "90"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = d("moved.csv");
    assert_eq!(code(&v2xviz(&["decode", "--in", p(&d("moved.pcap")), "--bsm-csv", p(&csv)])), 0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 21);
    // The northern approach rotated by 90 degrees arrives from the east, heading west.
    let o = v2xviz(&["filter", "--in", p(&d("moved.pcap")), "--out", p(&d("east.pcap")), "--ref", "39.9612,-83.0105,230", "--center", "90"]);
    assert!(stdout(&o).contains("kept 20 of 20"), "{}", stdout(&o));
}

#[test]
fn render_writes_numbered_frames() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("sig.pcap");
    let o = v2xviz(&["synth", "signal", "--out", p(&sig), "--duration", "1", "--press", "0.2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let frames = dir.path().join("frames");
    let o = v2xviz(&["render", "--in", p(&sig), "--out", p(&frames), "--size", "400x300"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let n = std::fs::read_dir(&frames).unwrap().count();
    assert_eq!(n, 10);
    assert_eq!(code(&v2xviz(&["render", "--in", p(&sig), "--out", p(&frames), "--size", "400by300"])), 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("v2xviz.cfg");
    std::fs::write(&cfg, "# traffic defaults\nsynth.traffic.duration = 0.5\neast = 0\nsouth = 0\nwest = 0\n").unwrap();
    let out = dir.path().join("t.pcap");
    let o = v2xviz(&["--config", p(&cfg), "synth", "traffic", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("wrote 6 records"), "{}", stdout(&o));
    let o = v2xviz(&["synth", "traffic", "--config", p(&cfg), "--out", p(&out), "--duration", "1"]);
    assert!(stdout(&o).contains("wrote 11 records"), "{}", stdout(&o));

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&v2xviz(&["--config", p(&cfg), "synth", "traffic", "--out", p(&out)])), 1);
    assert_eq!(code(&v2xviz(&["--config", p(&dir.path().join("nope.cfg")), "synth", "traffic", "--out", p(&out)])), 1);
}

#[test]
fn replay_reaches_listen() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = five_bsm_capture(dir.path());
    let csv = dir.path().join("rx.csv");
    let port = free_udp_port().to_string();
    let listener = Command::new(env!("CARGO_BIN_EXE_v2xviz"))
        .args(["listen", "--port", &port, "--count", "6", "--duration", "10", "--csv", p(&csv)])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(300));
    let o = v2xviz(&["replay", "--in", p(&pcap), "--dest", &format!("127.0.0.1:{port}"), "--speed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("sent 6 datagrams"), "{}", stdout(&o));
    let rx = listener.wait_with_output().unwrap();
    assert_eq!(code(&rx), 0, "{}", stderr(&rx));
    let lines = stdout(&rx);
    assert_eq!(lines.matches("BSM ").count(), 5, "{lines}");
    assert_eq!(lines.matches("MAP intersection 4301").count(), 1, "{lines}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 6);
}

#[test]
fn ima_warns_for_a_conflicting_remote() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    // Remote 60 m north and host 55 m east, both at 10 m/s: 0.5 s apart.
    let o = v2xviz(&["synth", "traffic", "--out", p(&d("t.pcap")), "--duration", "1", "--east", "0", "--south", "0", "--west", "0", "--start", "60"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&v2xviz(&["isolate", "--in", p(&d("t.pcap")), "--out", p(&d("b.pcap"))])), 0);
    let host = (0..=20)
        .map(|k| {
            let t = f64::from(k) * 0.1;
            let east_m = 55.0 - 10.0 * t;
            format!("{t:.1},40.2364,{:.8},10,270\n", -83.3671 + east_m / (111_319.49 * 40.2364f64.to_radians().cos()))
        })
        .collect::<String>();
    std::fs::write(d("host.csv"), format!("timestamp,lat,lon,speed_mps,heading_deg\n{host}")).unwrap();
    let port = free_udp_port().to_string();
    let ima = Command::new(env!("CARGO_BIN_EXE_v2xviz"))
        .args(["ima", "--port", &port, "--ref", "40.2364,-83.3671,300", "--host-log", p(&d("host.csv")), "--count", "10", "--duration", "10"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(300));
    let o = v2xviz(&["replay", "--in", p(&d("b.pcap")), "--dest", &format!("127.0.0.1:{port}"), "--speed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = ima.wait_with_output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("--- t=").count(), 10, "{text}");
    assert_eq!(text.matches("IMA WARNING: VEHICLE").count(), 10, "{text}");
}

#[test]
fn ima_rejects_a_bad_host_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("host.csv");
    std::fs::write(&log, "timestamp,lat,lon,speed_mps,heading_deg\n0,40,-83,ten,90\n").unwrap();
    let o = v2xviz(&["ima", "--port", "0", "--ref", "40,-83", "--host-log", p(&log)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("host.csv"));
}

#[test]
fn demo_reports_overlap() {
    let o = v2xviz(&["demo", "--speed", "4"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("warning window [15.00, 16.50] observed [15.10, 16.40], overlap OK"), "{text}");
    assert!(text.contains("IMA WARNING: VEHICLE"), "{text}");
}

#[test]
fn demo_without_alignment_expects_nothing() {
    let o = v2xviz(&["pipeline-demo", "--host-speed", "5", "--speed", "4"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("no warning expected, none observed"));
}

#[test]
fn demo_on_a_busy_port_fails() {
    let busy = UdpSocket::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let o = v2xviz(&["demo", "--port", &port]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).to_lowercase().contains("bind"), "{}", stderr(&o));
}
