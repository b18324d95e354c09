//! Classic PCAP capture files.
//!
//! Layout: a 24-byte global header (magic, version 2.4, thiszone, sigfigs,
//! snaplen, link type) followed by records, each a 16-byte header
//! (ts_sec, ts_frac, caplen, origlen) and `caplen` payload bytes. Every
//! multi-byte header integer uses the byte order announced by the magic.
//!
//! See <https://wiki.wireshark.org/Development/LibpcapFileFormat>.

use std::fmt;
use std::io::Read;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

pub const MAGIC_MICRO: u32 = 0xA1B2_C3D4;
pub const MAGIC_NANO: u32 = 0xA1B2_3C4D;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

/// Ethernet II frames.
pub const LINKTYPE_ETHERNET: u32 = 1;
/// Reserved for private use; marks files whose records are bare UPER frames.
pub const LINKTYPE_USER0: u32 = 147;

const DEFAULT_SNAPLEN: u32 = 262_144;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("not a classic pcap file (magic {0:#010x})")]
    UnknownMagic(u32),
    #[error("file shorter than the 24-byte global header")]
    TruncatedHeader,
    #[error("record {index} at offset {offset} is truncated; {} complete records recovered", .partial.records.len())]
    TruncatedRecord {
        index: usize,
        offset: usize,
        partial: Box<CaptureFile>,
    },
    #[error("record {index}: payload of {len} bytes does not fit a 32-bit capture length")]
    OversizedRecord { index: usize, len: usize },
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: &'static str },
    #[error("not an IPv4/UDP frame")]
    NotUdp,
    #[error("frame too short for its headers")]
    TooShort,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Byte order of the header integers. `Native` files are little-endian on
/// disk (magic bytes `d4 c3 b2 a1`), `Swapped` files big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ByteOrder {
    #[default]
    Native,
    Swapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeResolution {
    #[default]
    Micro,
    Nano,
}

impl TimeResolution {
    /// Number of fraction units per second.
    pub fn units_per_second(self) -> u32 {
        match self {
            TimeResolution::Micro => 1_000_000,
            TimeResolution::Nano => 1_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub ts_seconds: u32,
    pub ts_fraction: u32,
    pub payload: Vec<u8>,
    pub original_length: u32,
}

impl CaptureRecord {
    /// A record whose original length equals its payload length.
    pub fn new(ts_seconds: u32, ts_fraction: u32, payload: Vec<u8>) -> Self {
        let original_length = payload.len() as u32;
        CaptureRecord { ts_seconds, ts_fraction, payload, original_length }
    }

    /// Record at `nanos` since the epoch, with the fraction expressed in `res`.
    pub fn at_nanos(nanos: u64, res: TimeResolution, payload: Vec<u8>) -> Self {
        let secs = (nanos / 1_000_000_000) as u32;
        let sub = nanos % 1_000_000_000;
        let frac = match res {
            TimeResolution::Micro => (sub / 1_000) as u32,
            TimeResolution::Nano => sub as u32,
        };
        CaptureRecord::new(secs, frac, payload)
    }

    pub fn timestamp_nanos(&self, res: TimeResolution) -> u64 {
        let frac = match res {
            TimeResolution::Micro => u64::from(self.ts_fraction) * 1_000,
            TimeResolution::Nano => u64::from(self.ts_fraction),
        };
        u64::from(self.ts_seconds) * 1_000_000_000 + frac
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureFile {
    pub byte_order: ByteOrder,
    pub time_resolution: TimeResolution,
    pub link_type: u32,
    pub records: Vec<CaptureRecord>,
}

impl CaptureFile {
    pub fn new(link_type: u32) -> Self {
        CaptureFile {
            byte_order: ByteOrder::Native,
            time_resolution: TimeResolution::Micro,
            link_type,
            records: Vec::new(),
        }
    }

    /// Same header settings, no records.
    pub fn empty_like(&self) -> Self {
        CaptureFile { records: Vec::new(), ..self.clone() }
    }

    pub fn timestamp_nanos(&self, index: usize) -> u64 {
        self.records[index].timestamp_nanos(self.time_resolution)
    }

    /// Indices of records whose timestamp is earlier than their predecessor's.
    pub fn timestamp_violations(&self) -> Vec<usize> {
        (1..self.records.len())
            .filter(|&i| self.timestamp_nanos(i) < self.timestamp_nanos(i - 1))
            .collect()
    }
}

struct Endian(ByteOrder);

impl Endian {
    fn u32(&self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self.0 {
            ByteOrder::Native => u32::from_le_bytes(a),
            ByteOrder::Swapped => u32::from_be_bytes(a),
        }
    }

    fn put_u32(&self, out: &mut Vec<u8>, v: u32) {
        match self.0 {
            ByteOrder::Native => out.extend_from_slice(&v.to_le_bytes()),
            ByteOrder::Swapped => out.extend_from_slice(&v.to_be_bytes()),
        }
    }

    fn put_u16(&self, out: &mut Vec<u8>, v: u16) {
        match self.0 {
            ByteOrder::Native => out.extend_from_slice(&v.to_le_bytes()),
            ByteOrder::Swapped => out.extend_from_slice(&v.to_be_bytes()),
        }
    }
}

/// Reads a whole capture from `source`.
pub fn read_capture<R: Read>(mut source: R) -> Result<CaptureFile, PcapError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    parse_capture(&buf)
}

pub fn parse_capture(data: &[u8]) -> Result<CaptureFile, PcapError> {
    if data.len() < GLOBAL_HEADER_LEN {
        if data.len() >= 4 {
            let m = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
            if classify_magic(m).is_none() {
                return Err(PcapError::UnknownMagic(m));
            }
        }
        return Err(PcapError::TruncatedHeader);
    }
    let magic = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
    let (byte_order, time_resolution) = classify_magic(magic).ok_or(PcapError::UnknownMagic(magic))?;
    let e = Endian(byte_order);
    let link_type = e.u32(&data[20..24]);

    let mut file = CaptureFile { byte_order, time_resolution, link_type, records: Vec::new() };
    let mut offset = GLOBAL_HEADER_LEN;
    while offset < data.len() {
        let index = file.records.len();
        if data.len() - offset < RECORD_HEADER_LEN {
            return Err(PcapError::TruncatedRecord { index, offset, partial: Box::new(file) });
        }
        let h = &data[offset..offset + RECORD_HEADER_LEN];
        let ts_seconds = e.u32(&h[0..4]);
        let ts_fraction = e.u32(&h[4..8]);
        let caplen = e.u32(&h[8..12]) as usize;
        let original_length = e.u32(&h[12..16]);
        let start = offset + RECORD_HEADER_LEN;
        if data.len() - start < caplen {
            return Err(PcapError::TruncatedRecord { index, offset, partial: Box::new(file) });
        }
        file.records.push(CaptureRecord {
            ts_seconds,
            ts_fraction,
            payload: data[start..start + caplen].to_vec(),
            original_length,
        });
        offset = start + caplen;
    }
    Ok(file)
}

fn classify_magic(magic_le: u32) -> Option<(ByteOrder, TimeResolution)> {
    match magic_le {
        MAGIC_MICRO => Some((ByteOrder::Native, TimeResolution::Micro)),
        MAGIC_NANO => Some((ByteOrder::Native, TimeResolution::Nano)),
        m if m == MAGIC_MICRO.swap_bytes() => Some((ByteOrder::Swapped, TimeResolution::Micro)),
        m if m == MAGIC_NANO.swap_bytes() => Some((ByteOrder::Swapped, TimeResolution::Nano)),
        _ => None,
    }
}

/// Serializes `file`. Output is a pure function of the input.
pub fn write_capture(file: &CaptureFile) -> Result<Vec<u8>, PcapError> {
    let limit = file.time_resolution.units_per_second();
    let mut snaplen = DEFAULT_SNAPLEN;
    let mut total = GLOBAL_HEADER_LEN;
    for (index, r) in file.records.iter().enumerate() {
        let len = u32::try_from(r.payload.len()).map_err(|_| PcapError::OversizedRecord { index, len: r.payload.len() })?;
        if len > r.original_length {
            return Err(PcapError::InvalidRecord { index, reason: "payload longer than original length" });
        }
        if r.ts_fraction >= limit {
            return Err(PcapError::InvalidRecord { index, reason: "timestamp fraction out of range" });
        }
        snaplen = snaplen.max(len);
        total += RECORD_HEADER_LEN + r.payload.len();
    }

    let e = Endian(file.byte_order);
    let mut out = Vec::with_capacity(total);
    let magic = match file.time_resolution {
        TimeResolution::Micro => MAGIC_MICRO,
        TimeResolution::Nano => MAGIC_NANO,
    };
    e.put_u32(&mut out, magic);
    e.put_u16(&mut out, 2);
    e.put_u16(&mut out, 4);
    e.put_u32(&mut out, 0); // thiszone
    e.put_u32(&mut out, 0); // sigfigs
    e.put_u32(&mut out, snaplen);
    e.put_u32(&mut out, file.link_type);
    for r in &file.records {
        e.put_u32(&mut out, r.ts_seconds);
        e.put_u32(&mut out, r.ts_fraction);
        e.put_u32(&mut out, r.payload.len() as u32);
        e.put_u32(&mut out, r.original_length);
        out.extend_from_slice(&r.payload);
    }
    Ok(out)
}

/// How application bytes sit inside a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encapsulation {
    /// The record is the application payload, after skipping a fixed prefix.
    RawPayload { fixed_skip: usize },
    /// Ethernet II / IPv4 / UDP.
    EthernetIpv4Udp,
}

impl Default for Encapsulation {
    fn default() -> Self {
        Encapsulation::RawPayload { fixed_skip: 0 }
    }
}

impl Encapsulation {
    /// Link type a file carrying this encapsulation is written with.
    pub fn link_type(self) -> u32 {
        match self {
            Encapsulation::RawPayload { .. } => LINKTYPE_USER0,
            Encapsulation::EthernetIpv4Udp => LINKTYPE_ETHERNET,
        }
    }
}

impl fmt::Display for Encapsulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encapsulation::RawPayload { fixed_skip: 0 } => f.write_str("raw"),
            Encapsulation::RawPayload { fixed_skip } => write!(f, "raw:{fixed_skip}"),
            Encapsulation::EthernetIpv4Udp => f.write_str("udp"),
        }
    }
}

impl FromStr for Encapsulation {
    type Err = String;

    /// Accepts `raw`, `raw:<skip>` and `udp` (alias `ethernet`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Encapsulation::RawPayload { fixed_skip: 0 }),
            "udp" | "ethernet" => Ok(Encapsulation::EthernetIpv4Udp),
            _ => match s.strip_prefix("raw:") {
                Some(n) => n
                    .parse()
                    .map(|fixed_skip| Encapsulation::RawPayload { fixed_skip })
                    .map_err(|_| format!("invalid skip in encapsulation '{s}'")),
                None => Err(format!("unknown encapsulation '{s}' (expected raw, raw:N or udp)")),
            },
        }
    }
}

const ETH_HEADER_LEN: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
const IPPROTO_UDP: u8 = 17;
const UDP_HEADER_LEN: usize = 8;

/// Application bytes carried by `record`.
pub fn extract_payload(record: &CaptureRecord, encap: Encapsulation) -> Result<&[u8], PcapError> {
    let p = &record.payload;
    match encap {
        Encapsulation::RawPayload { fixed_skip } => p.get(fixed_skip..).ok_or(PcapError::TooShort),
        Encapsulation::EthernetIpv4Udp => {
            if p.len() < ETH_HEADER_LEN {
                return Err(PcapError::TooShort);
            }
            if u16::from_be_bytes([p[12], p[13]]) != ETHERTYPE_IPV4 {
                return Err(PcapError::NotUdp);
            }
            let ip = &p[ETH_HEADER_LEN..];
            if ip.is_empty() {
                return Err(PcapError::TooShort);
            }
            if ip[0] >> 4 != 4 {
                return Err(PcapError::NotUdp);
            }
            let ihl = usize::from(ip[0] & 0x0f) * 4;
            if ihl < 20 || ip.len() < ihl {
                return Err(PcapError::TooShort);
            }
            if ip[9] != IPPROTO_UDP {
                return Err(PcapError::NotUdp);
            }
            let udp = &ip[ihl..];
            if udp.len() < UDP_HEADER_LEN {
                return Err(PcapError::TooShort);
            }
            let udp_len = usize::from(u16::from_be_bytes([udp[4], udp[5]]));
            if udp_len < UDP_HEADER_LEN || udp_len > udp.len() {
                return Err(PcapError::TooShort);
            }
            Ok(&udp[UDP_HEADER_LEN..udp_len])
        }
    }
}

/// Wraps `payload` in Ethernet II / IPv4 / UDP headers. The UDP checksum is
/// left at zero (permitted for IPv4); the IPv4 header checksum is filled in.
pub fn build_udp_frame(payload: &[u8], src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16)) -> Vec<u8> {
    let udp_len = UDP_HEADER_LEN + payload.len();
    let ip_len = 20 + udp_len;
    let mut f = Vec::with_capacity(ETH_HEADER_LEN + ip_len);
    f.extend_from_slice(&[0xff; 6]);
    f.extend_from_slice(&[0x02, 0x00, 0x00, 0x00, 0x00, 0x01]);
    f.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let mut ip = [0u8; 20];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&(ip_len as u16).to_be_bytes());
    ip[6] = 0x40; // don't fragment
    ip[8] = 64;
    ip[9] = IPPROTO_UDP;
    ip[12..16].copy_from_slice(&src.0.octets());
    ip[16..20].copy_from_slice(&dst.0.octets());
    let csum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&csum.to_be_bytes());
    f.extend_from_slice(&ip);

    f.extend_from_slice(&src.1.to_be_bytes());
    f.extend_from_slice(&dst.1.to_be_bytes());
    f.extend_from_slice(&(udp_len as u16).to_be_bytes());
    f.extend_from_slice(&[0, 0]);
    f.extend_from_slice(payload);
    f
}

/// A copy of `record` whose application bytes are replaced by `payload`,
/// keeping the surrounding framing (prefix bytes or Ethernet/IPv4/UDP
/// headers, with lengths and IPv4 checksum updated) and the timestamp.
pub fn rewrap_payload(record: &CaptureRecord, encap: Encapsulation, payload: &[u8]) -> Result<CaptureRecord, PcapError> {
    let old = extract_payload(record, encap)?;
    let mut bytes = match encap {
        Encapsulation::RawPayload { fixed_skip } => record.payload[..fixed_skip].to_vec(),
        Encapsulation::EthernetIpv4Udp => {
            let p = &record.payload;
            let ihl = usize::from(p[ETH_HEADER_LEN] & 0x0f) * 4;
            let udp_start = ETH_HEADER_LEN + ihl;
            let mut h = p[..udp_start + UDP_HEADER_LEN].to_vec();
            let udp_len = UDP_HEADER_LEN + payload.len();
            let ip_len = u16::try_from(ihl + udp_len).map_err(|_| PcapError::OversizedRecord { index: 0, len: payload.len() })?;
            h[ETH_HEADER_LEN + 2..ETH_HEADER_LEN + 4].copy_from_slice(&ip_len.to_be_bytes());
            h[ETH_HEADER_LEN + 10..ETH_HEADER_LEN + 12].copy_from_slice(&[0, 0]);
            let csum = ipv4_checksum(&h[ETH_HEADER_LEN..udp_start]);
            h[ETH_HEADER_LEN + 10..ETH_HEADER_LEN + 12].copy_from_slice(&csum.to_be_bytes());
            h[udp_start + 4..udp_start + 6].copy_from_slice(&(udp_len as u16).to_be_bytes());
            h[udp_start + 6..udp_start + 8].copy_from_slice(&[0, 0]);
            h
        }
    };
    let trailer_start = match encap {
        Encapsulation::RawPayload { .. } => record.payload.len(),
        // Ethernet padding after the UDP datagram is carried over.
        Encapsulation::EthernetIpv4Udp => old.as_ptr() as usize - record.payload.as_ptr() as usize + old.len(),
    };
    bytes.extend_from_slice(payload);
    bytes.extend_from_slice(&record.payload[trailer_start..]);
    let missing = record.original_length.saturating_sub(record.payload.len() as u32);
    let original_length = bytes.len() as u32 + missing;
    Ok(CaptureRecord { ts_seconds: record.ts_seconds, ts_fraction: record.ts_fraction, payload: bytes, original_length })
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header.chunks(2).map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))).sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
