//! Shared data model: decoded packets, bidirectional flows and
//! reassembled TCP streams.

mod flow;
mod pcap;
mod stream;

pub use flow::{assemble_bundles, assemble_flows, FlowBundle, DEFAULT_IDLE_TIMEOUT_SECS};
pub use pcap::{
    encode_frame, parse_capture_file, write_capture_file, CaptureError, CaptureReader,
    CaptureStats, LINKTYPE_ETHERNET, LINKTYPE_RAW,
};
pub use stream::{reassemble_stream, StreamError, MAX_STREAM_BYTES};

pub use flow::flow_records_digest;

use std::fmt;
use std::net::Ipv4Addr;

/// Microseconds since the Unix epoch.
pub type Micros = i64;

pub const MICROS_PER_SEC: i64 = 1_000_000;
pub const MICROS_PER_DAY: i64 = 86_400 * MICROS_PER_SEC;

/// IP protocol of a decoded packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IpProto {
    Tcp,
    Udp,
    Icmp,
    Gre,
    Other(u8),
}

impl IpProto {
    pub fn from_number(p: u8) -> IpProto {
        match p {
            6 => IpProto::Tcp,
            17 => IpProto::Udp,
            1 => IpProto::Icmp,
            47 => IpProto::Gre,
            other => IpProto::Other(other),
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            IpProto::Tcp => 6,
            IpProto::Udp => 17,
            IpProto::Icmp => 1,
            IpProto::Gre => 47,
            IpProto::Other(p) => *p,
        }
    }

    /// TCP and UDP are the only protocols with port numbers here.
    pub fn has_ports(&self) -> bool {
        matches!(self, IpProto::Tcp | IpProto::Udp)
    }
}

impl fmt::Display for IpProto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IpProto::Tcp => write!(f, "tcp"),
            IpProto::Udp => write!(f, "udp"),
            IpProto::Icmp => write!(f, "icmp"),
            IpProto::Gre => write!(f, "gre"),
            IpProto::Other(p) => write!(f, "proto-{p}"),
        }
    }
}

/// TCP flag set packed into one byte, wire bit order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);

    pub const fn empty() -> TcpFlags {
        TcpFlags(0)
    }

    pub const fn from_bits(bits: u8) -> TcpFlags {
        TcpFlags(bits & 0x3f)
    }

    pub const fn bits(&self) -> u8 {
        self.0
    }

    pub const fn contains(&self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub const fn union(self, other: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | other.0)
    }

    pub fn insert(&mut self, other: TcpFlags) {
        self.0 |= other.0;
    }

    pub const fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        self.union(rhs)
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [
            (TcpFlags::SYN, 'S'),
            (TcpFlags::ACK, 'A'),
            (TcpFlags::FIN, 'F'),
            (TcpFlags::RST, 'R'),
            (TcpFlags::PSH, 'P'),
            (TcpFlags::URG, 'U'),
        ];
        for (flag, c) in names {
            if self.contains(flag) {
                write!(f, "{c}")?;
            }
        }
        if self.is_empty() {
            write!(f, ".")?;
        }
        Ok(())
    }
}

/// One decoded IPv4 packet from a capture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub ts: Micros,
    pub sensor_id: String,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub ip_proto: IpProto,
    /// Zero when the protocol has no ports.
    pub src_port: u16,
    pub dst_port: u16,
    /// Meaningful only for TCP; empty otherwise.
    pub tcp_flags: TcpFlags,
    /// Present iff `ip_proto` is TCP.
    pub tcp_seq: Option<u32>,
    pub payload: Vec<u8>,
    pub capture_len: u32,
    pub orig_len: u32,
}

impl PacketRecord {
    /// Unordered (proto, ip:port, ip:port) key shared by both directions
    /// of a conversation.
    pub fn canonical_tuple(&self) -> CanonicalTuple {
        let a = (u32::from(self.src_ip), self.src_port);
        let b = (u32::from(self.dst_ip), self.dst_port);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        CanonicalTuple {
            proto: self.ip_proto.number(),
            lo_ip: lo.0,
            lo_port: lo.1,
            hi_ip: hi.0,
            hi_port: hi.1,
        }
    }
}

/// Canonicalized 5-tuple (endpoint order normalized).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalTuple {
    pub proto: u8,
    pub lo_ip: u32,
    pub lo_port: u16,
    pub hi_ip: u32,
    pub hi_port: u16,
}

/// Stable flow identifier derived from the canonicalized 5-tuple,
/// sensor and flow start time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId(pub u64);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Lifecycle state of a flow; transitions only move forward along
/// SYN_ONLY -> HANDSHAKE_COMPLETE -> DATA -> CLOSED | RESET.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowState {
    SynOnly,
    HandshakeComplete,
    Data,
    Closed,
    Reset,
}

impl fmt::Display for FlowState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FlowState::SynOnly => "SYN_ONLY",
            FlowState::HandshakeComplete => "HANDSHAKE_COMPLETE",
            FlowState::Data => "DATA",
            FlowState::Closed => "CLOSED",
            FlowState::Reset => "RESET",
        };
        f.write_str(s)
    }
}

/// One bidirectional flow. The initiator is the side that sent the
/// temporally first packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub flow_id: FlowId,
    pub sensor_id: String,
    pub initiator_ip: Ipv4Addr,
    pub initiator_port: u16,
    pub responder_ip: Ipv4Addr,
    pub responder_port: u16,
    pub ip_proto: IpProto,
    pub first_ts: Micros,
    pub last_ts: Micros,
    pub fwd_packets: u64,
    pub rev_packets: u64,
    pub fwd_bytes: u64,
    pub rev_bytes: u64,
    pub flag_union: TcpFlags,
    pub state: FlowState,
}

/// Direction of a stream relative to the flow initiator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Fwd,
    Rev,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Fwd => f.write_str("fwd"),
            Direction::Rev => f.write_str("rev"),
        }
    }
}

/// In-order reassembled payload for one direction of a TCP flow.
///
/// `bytes` covers the observed span in sequence order; ranges listed in
/// `gaps` were never received and are zero-filled in `bytes`. Pattern
/// matching must not cross a gap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamPayload {
    pub flow_id: FlowId,
    pub direction: Direction,
    pub bytes: Vec<u8>,
    /// (offset, length) of missing ranges, ascending, non-adjacent.
    pub gaps: Vec<(usize, usize)>,
    /// Set when the per-flow reassembly budget was exceeded.
    pub truncated: bool,
}

impl StreamPayload {
    pub fn empty(flow_id: FlowId, direction: Direction) -> StreamPayload {
        StreamPayload {
            flow_id,
            direction,
            bytes: Vec::new(),
            gaps: Vec::new(),
            truncated: false,
        }
    }

    /// Maximal gap-free (offset, slice) runs of the stream.
    pub fn contiguous_runs(&self) -> Vec<(usize, &[u8])> {
        let mut runs = Vec::new();
        let mut pos = 0usize;
        for &(off, len) in &self.gaps {
            if off > pos {
                runs.push((pos, &self.bytes[pos..off]));
            }
            pos = off + len;
        }
        if pos < self.bytes.len() {
            runs.push((pos, &self.bytes[pos..]));
        }
        runs
    }
}

impl FlowState {
    pub fn code(&self) -> u8 {
        match self {
            FlowState::SynOnly => 0,
            FlowState::HandshakeComplete => 1,
            FlowState::Data => 2,
            FlowState::Closed => 3,
            FlowState::Reset => 4,
        }
    }
}

/// Order-independent digest of a flow population over (sensor,
/// canonical tuple, state); the generator manifests the intended
/// value and flow assembly must reproduce it.
pub fn flow_population_digest<'a>(
    items: impl Iterator<Item = (&'a str, CanonicalTuple, FlowState)>,
) -> u64 {
    let mut encoded: Vec<Vec<u8>> = items
        .map(|(sensor, tuple, state)| {
            let mut buf = Vec::with_capacity(sensor.len() + 16);
            buf.extend_from_slice(sensor.as_bytes());
            buf.push(0);
            buf.push(tuple.proto);
            buf.extend_from_slice(&tuple.lo_ip.to_be_bytes());
            buf.extend_from_slice(&tuple.lo_port.to_be_bytes());
            buf.extend_from_slice(&tuple.hi_ip.to_be_bytes());
            buf.extend_from_slice(&tuple.hi_port.to_be_bytes());
            buf.push(state.code());
            buf
        })
        .collect();
    encoded.sort();
    let parts: Vec<&[u8]> = encoded.iter().map(|v| v.as_slice()).collect();
    stable_hash64(&parts)
}

/// FNV-1a 64-bit, used wherever a stable cross-run hash is required.
pub fn stable_hash64(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator keeps ("ab","c") distinct from ("a","bc")
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
