//! UDP re-broadcast of capture payloads with their original inter-record
//! timing, and a listener that decodes such streams.
//!
//! Each datagram carries exactly one UPER `MessageFrame` and nothing else.
//! Pacing uses absolute deadlines on the monotonic clock, so per-record
//! scheduling error does not accumulate.

use std::collections::VecDeque;
use std::io;
use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::j2735::{decode_frame, MessageFrame};
use crate::pcap::{extract_payload, CaptureFile, Encapsulation};

const SPIN_WINDOW: Duration = Duration::from_millis(2);
const RECV_POLL: Duration = Duration::from_millis(20);
pub const DEFAULT_QUEUE_CAPACITY: usize = 4096;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("capture has no records")]
    EmptyCapture,
    #[error("invalid replay configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("socket error: {0}")]
    Socket(#[from] io::Error),
}

/// Seconds on a process-wide monotonic clock.
pub fn monotonic_seconds() -> f64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_secs_f64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub destination: SocketAddr,
    pub speed_factor: f64,
    pub loop_count: u32,
}

impl ReplayConfig {
    pub fn new(destination: SocketAddr, speed_factor: f64, loop_count: u32) -> Result<Self, ReplayError> {
        if !(speed_factor > 0.0 && speed_factor.is_finite()) {
            return Err(ReplayError::InvalidConfig(format!("speed factor must be positive, got {speed_factor}")));
        }
        if loop_count == 0 {
            return Err(ReplayError::InvalidConfig("loop count must be at least 1".into()));
        }
        Ok(ReplayConfig { destination, speed_factor, loop_count })
    }
}

/// When one datagram was due and when it actually left, both relative to
/// the start of the replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendEvent {
    pub record_index: usize,
    pub scheduled_s: f64,
    pub actual_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub sent: usize,
    /// Records whose payload could not be extracted under the encapsulation.
    pub skipped: usize,
    /// Sends the network rejected as unreachable; not fatal for UDP.
    pub unreachable: usize,
    /// Largest |actual - scheduled| over all sends, seconds.
    pub max_timing_error_s: f64,
    pub events: Vec<SendEvent>,
}

impl ReplayReport {
    /// For each consecutive pair of sends, how far the actual spacing was
    /// from the scheduled spacing, seconds.
    pub fn interval_errors(&self) -> Vec<f64> {
        self.events
            .windows(2)
            .map(|w| ((w[1].actual_s - w[0].actual_s) - (w[1].scheduled_s - w[0].scheduled_s)).abs())
            .collect()
    }
}

/// Nearest-rank percentile of `values`, `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Offsets from the first record, in seconds of replay time. Out-of-order
/// timestamps contribute no wait.
pub fn schedule(capture: &CaptureFile, speed_factor: f64) -> Vec<f64> {
    let mut offsets = Vec::with_capacity(capture.records.len());
    let mut acc: u64 = 0;
    let mut prev: Option<u64> = None;
    for i in 0..capture.records.len() {
        let ts = capture.timestamp_nanos(i);
        if let Some(p) = prev {
            acc += ts.saturating_sub(p);
        }
        prev = Some(ts);
        offsets.push(acc as f64 / 1e9 / speed_factor);
    }
    offsets
}

fn wait_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        let left = deadline - now;
        if left > SPIN_WINDOW {
            thread::sleep(left - SPIN_WINDOW);
        } else {
            std::hint::spin_loop();
        }
    }
}

fn is_unreachable(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::ConnectionRefused | io::ErrorKind::HostUnreachable | io::ErrorKind::NetworkUnreachable | io::ErrorKind::AddrNotAvailable
    )
}

fn sender_socket(dest: &SocketAddr) -> Result<UdpSocket, ReplayError> {
    let local: SocketAddr = if dest.is_ipv4() { (Ipv4Addr::UNSPECIFIED, 0).into() } else { "[::]:0".parse().expect("literal") };
    let sock = UdpSocket::bind(local).map_err(|source| ReplayError::Bind { addr: local, source })?;
    if let SocketAddr::V4(v4) = dest {
        if v4.ip().is_broadcast() || v4.ip().octets()[3] == 255 {
            sock.set_broadcast(true)?;
        }
    }
    Ok(sock)
}

/// Sends every record's payload to `config.destination` with the recorded
/// spacing divided by the speed factor. Loops run back to back.
pub fn replay(capture: &CaptureFile, config: &ReplayConfig, encap: Encapsulation) -> Result<ReplayReport, ReplayError> {
    replay_until(capture, config, encap, &StopHandle::new())
}

/// Like [`replay`] but returns early once `stop` is triggered.
pub fn replay_until(capture: &CaptureFile, config: &ReplayConfig, encap: Encapsulation, stop: &StopHandle) -> Result<ReplayReport, ReplayError> {
    if capture.records.is_empty() {
        return Err(ReplayError::EmptyCapture);
    }
    let sock = sender_socket(&config.destination)?;
    let offsets = schedule(capture, config.speed_factor);
    let mut report = ReplayReport::default();
    let start = Instant::now();
    let mut loop_base = 0.0;
    'outer: for _ in 0..config.loop_count {
        for (i, rec) in capture.records.iter().enumerate() {
            if stop.is_stopped() {
                break 'outer;
            }
            let Ok(payload) = extract_payload(rec, encap) else {
                report.skipped += 1;
                continue;
            };
            let scheduled_s = loop_base + offsets[i];
            wait_until(start + Duration::from_secs_f64(scheduled_s));
            let actual_s = start.elapsed().as_secs_f64();
            match sock.send_to(payload, config.destination) {
                Ok(_) => {}
                Err(e) if is_unreachable(&e) => report.unreachable += 1,
                Err(e) => return Err(ReplayError::Socket(e)),
            }
            report.sent += 1;
            report.max_timing_error_s = report.max_timing_error_s.max((actual_s - scheduled_s).abs());
            report.events.push(SendEvent { record_index: i, scheduled_s, actual_s });
        }
        loop_base += offsets.last().copied().unwrap_or(0.0);
    }
    Ok(report)
}

/// Shared flag that stops a listener or a replay.
#[derive(Debug, Clone, Default)]
pub struct StopHandle(Arc<AtomicBool>);

impl StopHandle {
    pub fn new() -> Self {
        StopHandle::default()
    }

    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedMessage {
    /// Arrival time on [`monotonic_seconds`].
    pub arrival_monotonic: f64,
    pub frame: MessageFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ListenStats {
    pub received: u64,
    pub decode_failures: u64,
    pub dropped: u64,
    pub delivered: u64,
}

#[derive(Default)]
struct Counters {
    received: AtomicU64,
    decode_failures: AtomicU64,
    dropped: AtomicU64,
}

struct Queue {
    items: Mutex<(VecDeque<ReceivedMessage>, bool)>,
    ready: Condvar,
    capacity: usize,
}

impl Queue {
    /// Pushes, dropping the oldest entry when full. Returns whether one was dropped.
    fn push(&self, m: ReceivedMessage) -> bool {
        let mut g = self.items.lock().expect("queue lock");
        let dropped = if g.0.len() >= self.capacity {
            g.0.pop_front();
            true
        } else {
            false
        };
        g.0.push_back(m);
        self.ready.notify_one();
        dropped
    }

    fn close(&self) {
        self.items.lock().expect("queue lock").1 = true;
        self.ready.notify_all();
    }

    /// Next message, or `None` once closed and drained.
    fn pop(&self) -> Option<ReceivedMessage> {
        let mut g = self.items.lock().expect("queue lock");
        loop {
            if let Some(m) = g.0.pop_front() {
                return Some(m);
            }
            if g.1 {
                return None;
            }
            g = self.ready.wait(g).expect("queue lock");
        }
    }
}

/// Bound UDP socket waiting to be run.
#[derive(Debug)]
pub struct Listener {
    socket: UdpSocket,
    queue_capacity: usize,
}

impl Listener {
    /// Binds all IPv4 interfaces on `port` (0 picks a free port).
    pub fn bind(port: u16) -> Result<Self, ReplayError> {
        Self::bind_addr((Ipv4Addr::UNSPECIFIED, port).into())
    }

    pub fn bind_addr(addr: SocketAddr) -> Result<Self, ReplayError> {
        let socket = UdpSocket::bind(addr).map_err(|source| ReplayError::Bind { addr, source })?;
        Ok(Listener { socket, queue_capacity: DEFAULT_QUEUE_CAPACITY })
    }

    pub fn with_queue_capacity(mut self, capacity: usize) -> Self {
        self.queue_capacity = capacity.max(1);
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ReplayError> {
        Ok(self.socket.local_addr()?)
    }

    /// Receives until `stop` is triggered, calling `sink` with each valid
    /// frame in arrival order. A receiver thread decodes datagrams into a
    /// bounded queue; when the sink falls behind, the oldest queued frames
    /// are dropped and counted. The sink may trigger `stop` itself.
    pub fn run<F: FnMut(ReceivedMessage)>(self, mut sink: F, stop: &StopHandle) -> Result<ListenStats, ReplayError> {
        self.socket.set_read_timeout(Some(RECV_POLL))?;
        let counters = Arc::new(Counters::default());
        let queue = Arc::new(Queue { items: Mutex::new((VecDeque::new(), false)), ready: Condvar::new(), capacity: self.queue_capacity });

        let receiver = {
            let (counters, queue, stop, socket) = (Arc::clone(&counters), Arc::clone(&queue), stop.clone(), self.socket);
            thread::spawn(move || -> io::Result<()> {
                let mut buf = vec![0u8; 65_536];
                let result = loop {
                    if stop.is_stopped() {
                        break Ok(());
                    }
                    match socket.recv_from(&mut buf) {
                        Ok((n, _)) => {
                            let arrival_monotonic = monotonic_seconds();
                            counters.received.fetch_add(1, Ordering::SeqCst);
                            match decode_frame(&buf[..n]) {
                                Ok(frame) => {
                                    if queue.push(ReceivedMessage { arrival_monotonic, frame }) {
                                        counters.dropped.fetch_add(1, Ordering::SeqCst);
                                    }
                                }
                                Err(_) => {
                                    counters.decode_failures.fetch_add(1, Ordering::SeqCst);
                                }
                            }
                        }
                        Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted) => {}
                        Err(e) => break Err(e),
                    }
                };
                queue.close();
                result
            })
        };

        let mut delivered = 0;
        while let Some(m) = queue.pop() {
            sink(m);
            delivered += 1;
            if stop.is_stopped() {
                break;
            }
        }
        stop.stop();
        let recv_result = receiver.join().unwrap_or_else(|_| Err(io::Error::other("receiver thread panicked")));
        recv_result?;
        Ok(ListenStats {
            received: counters.received.load(Ordering::SeqCst),
            decode_failures: counters.decode_failures.load(Ordering::SeqCst),
            dropped: counters.dropped.load(Ordering::SeqCst),
            delivered,
        })
    }
}
