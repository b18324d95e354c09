use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use v2xviz_core::pcap::Encapsulation;
use v2xviz_core::GeoPoint;

#[derive(Debug, Parser)]
#[command(name = "v2xviz", version, about = "Decode, visualize, relocate and replay V2X intersection captures (SPaT, MAP, BSM)")]
pub struct Cli {
    /// key=value file supplying defaults for the subcommand's flags; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode a capture: per-type counts, BSMs as CSV, MAP as text
    Decode(DecodeArgs),
    /// Keep only the BSM records of a capture
    Isolate(IsolateArgs),
    /// Move a BSM capture from one intersection to another
    Relocate(RelocateArgs),
    /// Keep BSMs of vehicles approaching from one side
    Filter(FilterArgs),
    /// Generate a synthetic capture
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Render SVG frames from captures
    Render(RenderArgs),
    /// Send capture payloads as UDP datagrams with their original timing
    Replay(ReplayArgs),
    /// Receive and decode UDP datagrams
    Listen(ListenArgs),
    /// Run the Intersection Movement Assist application on a UDP stream
    Ima(ImaArgs),
    /// Run the whole loop locally: synth, filter, relocate, replay, IMA
    #[command(visible_aliases = ["pipeline-demo", "pipeline_demo"])]
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct EncapArg {
    /// Record framing: raw, raw:<skip bytes> or udp (Ethernet/IPv4/UDP)
    #[arg(long, default_value = "raw", value_parser = parse_encap)]
    pub encap: Encapsulation,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Input capture (classic PCAP)
    #[arg(long = "in", value_name = "PCAP")]
    pub input: PathBuf,
    /// Write every BSM as a CSV row
    #[arg(long, value_name = "CSV")]
    pub bsm_csv: Option<PathBuf>,
    /// Write the first MAP as indented text
    #[arg(long, value_name = "TXT")]
    pub map_text: Option<PathBuf>,
    #[command(flatten)]
    pub encap: EncapArg,
}

#[derive(Debug, Args)]
pub struct IsolateArgs {
    /// Input capture (classic PCAP)
    #[arg(long = "in", value_name = "PCAP")]
    pub input: PathBuf,
    /// Output capture with only the BSM records
    #[arg(long, value_name = "PCAP")]
    pub out: PathBuf,
    #[command(flatten)]
    pub encap: EncapArg,
}

#[derive(Debug, Args)]
pub struct RelocateArgs {
    /// Input capture (classic PCAP)
    #[arg(long = "in", value_name = "PCAP")]
    pub input: PathBuf,
    /// Output capture
    #[arg(long, value_name = "PCAP")]
    pub out: PathBuf,
    /// Source intersection reference, lat,lon[,elev_m]
    #[arg(long, value_parser = parse_geo, allow_hyphen_values = true)]
    pub src: GeoPoint,
    /// Target intersection reference, lat,lon[,elev_m]
    #[arg(long, value_parser = parse_geo, allow_hyphen_values = true)]
    pub dst: GeoPoint,
    /// Clockwise rotation applied to positions and headings, degrees in [0, 360)
    #[arg(long, default_value_t = 0.0)]
    pub delta_heading: f64,
    #[command(flatten)]
    pub encap: EncapArg,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Input capture (classic PCAP)
    #[arg(long = "in", value_name = "PCAP")]
    pub input: PathBuf,
    /// Output capture
    #[arg(long, value_name = "PCAP")]
    pub out: PathBuf,
    /// Intersection reference, lat,lon[,elev_m]
    #[arg(long = "ref", value_parser = parse_geo, allow_hyphen_values = true)]
    pub reference: GeoPoint,
    /// Bearing of the kept side as seen from the intersection (0 = north)
    #[arg(long, default_value_t = 0.0)]
    pub center: f64,
    /// Half-width of the kept sector, degrees
    #[arg(long, default_value_t = 45.0)]
    pub half_width: f64,
    #[command(flatten)]
    pub encap: EncapArg,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Pedestrian-actuated mid-block crossing: MAP at 1 Hz, SPaT at 10 Hz
    Signal(SynthSignalArgs),
    /// Four-way intersection with approaching vehicles: MAP at 1 Hz, BSMs at 10 Hz
    Traffic(SynthTrafficArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pedestal {
    /// Remaining time counts up 0, 1, 2 ... s and wraps after a minute
    CountUp,
    /// Remaining time counts down from 1 s and jumps back up
    OneSecond,
}

#[derive(Debug, Args)]
pub struct SynthSignalArgs {
    /// Output capture
    #[arg(long, value_name = "PCAP")]
    pub out: PathBuf,
    /// Length of the capture, seconds
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Pedestrian button press, seconds from the start (repeatable)
    #[arg(long)]
    pub press: Vec<f64>,
    /// Walk interval after a press, seconds
    #[arg(long, default_value_t = 10.0)]
    pub walk: f64,
    /// Pedestrian signal countdown while no walk is requested
    #[arg(long, value_enum, default_value_t = Pedestal::CountUp)]
    pub pedestal: Pedestal,
    /// Intersection reference, lat,lon[,elev_m]
    #[arg(long = "ref", value_parser = parse_geo, allow_hyphen_values = true, default_value = "39.9586,-83.0601,230")]
    pub reference: GeoPoint,
    /// Intersection ID in MAP and SPaT
    #[arg(long, default_value_t = 1201)]
    pub id: u16,
}

#[derive(Debug, Args)]
pub struct SynthTrafficArgs {
    /// Output capture
    #[arg(long, value_name = "PCAP")]
    pub out: PathBuf,
    /// Length of the capture, seconds
    #[arg(long, default_value_t = 30.0)]
    pub duration: f64,
    /// Vehicles approaching from the north
    #[arg(long, default_value_t = 1)]
    pub north: usize,
    /// Vehicles approaching from the east
    #[arg(long, default_value_t = 1)]
    pub east: usize,
    /// Vehicles approaching from the south
    #[arg(long, default_value_t = 1)]
    pub south: usize,
    /// Vehicles approaching from the west
    #[arg(long, default_value_t = 1)]
    pub west: usize,
    /// Vehicle speed, m/s
    #[arg(long, default_value_t = 10.0)]
    pub speed: f64,
    /// Distance of the first vehicle on each side at t = 0, m
    #[arg(long, default_value_t = 150.0)]
    pub start: f64,
    /// Gap between vehicles on one side, m
    #[arg(long, default_value_t = 25.0)]
    pub spacing: f64,
    /// Add a pedestrian on the north crosswalk
    #[arg(long)]
    pub pedestrian: bool,
    /// Intersection reference, lat,lon[,elev_m]
    #[arg(long = "ref", value_parser = parse_geo, allow_hyphen_values = true, default_value = "40.2364,-83.3671,300")]
    pub reference: GeoPoint,
    /// Intersection ID in the MAP
    #[arg(long, default_value_t = 4301)]
    pub id: u16,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Capture with SPaT and/or BSM records (repeatable)
    #[arg(long = "in", value_name = "PCAP", required = true)]
    pub input: Vec<PathBuf>,
    /// Capture supplying the MAP, if not in --in
    #[arg(long, value_name = "PCAP")]
    pub map: Option<PathBuf>,
    /// Viewport center, lat,lon; defaults to the first MAP's reference point
    #[arg(long, value_parser = parse_geo, allow_hyphen_values = true)]
    pub center: Option<GeoPoint>,
    /// Metres per pixel
    #[arg(long, default_value_t = 0.2)]
    pub mpp: f64,
    /// Frame size, WIDTHxHEIGHT pixels
    #[arg(long, default_value = "1280x720", value_parser = parse_size)]
    pub size: (u32, u32),
    /// Seconds between frames
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    /// Raster referenced under every frame
    #[arg(long, value_name = "IMAGE")]
    pub underlay: Option<String>,
    /// Directory for the numbered SVG frames
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub encap: EncapArg,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Input capture (classic PCAP)
    #[arg(long = "in", value_name = "PCAP")]
    pub input: PathBuf,
    /// Destination address
    #[arg(long, value_name = "HOST:PORT")]
    pub dest: SocketAddr,
    /// Playback rate; 2.0 plays twice as fast
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Number of passes over the capture
    #[arg(long = "loop", default_value_t = 1)]
    pub loops: u32,
    #[command(flatten)]
    pub encap: EncapArg,
}

#[derive(Debug, Args)]
pub struct StopArgs {
    /// Stop after this many decoded frames
    #[arg(long)]
    pub count: Option<u64>,
    /// Stop after this many seconds
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ListenArgs {
    /// UDP port to listen on (all interfaces)
    #[arg(long)]
    pub port: u16,
    /// Write received BSMs as CSV rows
    #[arg(long, value_name = "CSV")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub stop: StopArgs,
}

#[derive(Debug, Args)]
pub struct ImaArgs {
    /// UDP port to listen on for BSMs (all interfaces)
    #[arg(long)]
    pub port: u16,
    /// Intersection reference, lat,lon[,elev_m]
    #[arg(long = "ref", value_parser = parse_geo, allow_hyphen_values = true)]
    pub reference: GeoPoint,
    /// Safety margin between the two times to intersection, seconds
    #[arg(long, default_value_t = 3.0)]
    pub tsafety: f64,
    /// Seconds without a BSM before a track is dropped
    #[arg(long, default_value_t = 2.0)]
    pub timeout: f64,
    /// Host trajectory CSV: timestamp,lat,lon,speed_mps,heading_deg
    #[arg(long, value_name = "CSV")]
    pub host_log: PathBuf,
    #[command(flatten)]
    pub stop: StopArgs,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Intersection the recorded traffic is moved to, lat,lon[,elev_m]
    #[arg(long = "ref", value_parser = parse_geo, allow_hyphen_values = true, default_value = "39.9612,-83.0105,230")]
    pub reference: GeoPoint,
    /// Rotation applied while relocating, degrees
    #[arg(long, default_value_t = 0.0)]
    pub delta_heading: f64,
    /// Host distance east of the intersection at t = 0, m
    #[arg(long, default_value_t = 150.0)]
    pub host_distance: f64,
    /// Host speed, m/s
    #[arg(long, default_value_t = 10.0)]
    pub host_speed: f64,
    /// Remote distance north of the intersection at t = 0, m
    #[arg(long, default_value_t = 165.0)]
    pub remote_distance: f64,
    /// Remote speed, m/s
    #[arg(long, default_value_t = 10.0)]
    pub remote_speed: f64,
    /// Safety margin between the two times to intersection, seconds
    #[arg(long, default_value_t = 3.0)]
    pub tsafety: f64,
    /// Loopback port for the replay; 0 picks a free one
    #[arg(long, default_value_t = 0)]
    pub port: u16,
    /// Replay rate
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Keep the intermediate captures here
    #[arg(long, value_name = "DIR")]
    pub keep: Option<PathBuf>,
    /// Print every advisory, not just the report
    #[arg(long)]
    pub verbose: bool,
}

pub fn parse_encap(s: &str) -> Result<Encapsulation, String> {
    s.parse()
}

/// `lat,lon` or `lat,lon,elev_m` in decimal degrees.
pub fn parse_geo(s: &str) -> Result<GeoPoint, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("expected lat,lon[,elev_m], got '{s}'"));
    }
    let num = |p: &str| p.parse::<f64>().map_err(|_| format!("'{p}' is not a number"));
    let p = GeoPoint::new(num(parts[0])?, num(parts[1])?, if parts.len() == 3 { num(parts[2])? } else { 0.0 });
    if !p.is_valid() {
        return Err(format!("'{s}' is outside lat [-90, 90], lon [-180, 180]"));
    }
    Ok(p)
}

pub fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let dim = |v: &str| v.trim().parse::<u32>().ok().filter(|&n| n > 0).ok_or_else(|| format!("bad dimension '{v}'"));
    Ok((dim(w)?, dim(h)?))
}
