//! Classic capture-file reader and writer (24-byte global header,
//! 16-byte per-record headers, microsecond timestamps). Both
//! endiannesses are accepted on read; files are written little-endian.

use std::io::{self, Write};
use std::net::Ipv4Addr;

use thiserror::Error;

use super::{IpProto, Micros, PacketRecord, TcpFlags};

pub const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
pub const MAGIC_MICROS_SWAPPED: u32 = 0xD4C3_B2A1;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CaptureError {
    #[error("not a capture file (bad magic 0x{0:08X})")]
    BadMagic(u32),
    #[error("unsupported link type {0}")]
    UnsupportedLinkType(u32),
    #[error("truncated capture header ({0} bytes, need 24)")]
    TruncatedHeader(usize),
}

/// Per-file parse counters. Skipped frames are counted, never dropped
/// silently.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptureStats {
    pub frames: u64,
    pub ipv4_packets: u64,
    pub non_ipv4: u64,
    pub fragments: u64,
    pub malformed: u64,
    /// The last record header or body ran past end of file.
    pub truncated_tail: bool,
}

/// Streaming reader over one capture file held in memory.
pub struct CaptureReader<'a> {
    data: &'a [u8],
    pos: usize,
    swapped: bool,
    link_type: u32,
    sensor_id: String,
    stats: CaptureStats,
}

impl<'a> CaptureReader<'a> {
    pub fn new(data: &'a [u8], sensor_id: &str) -> Result<CaptureReader<'a>, CaptureError> {
        if data.len() < GLOBAL_HEADER_LEN {
            if data.len() < 4 {
                return Err(CaptureError::TruncatedHeader(data.len()));
            }
            let magic = u32::from_le_bytes(data[0..4].try_into().unwrap());
            if magic == MAGIC_MICROS || magic == MAGIC_MICROS_SWAPPED {
                return Err(CaptureError::TruncatedHeader(data.len()));
            }
            return Err(CaptureError::BadMagic(magic));
        }
        let magic = u32::from_le_bytes(data[0..4].try_into().unwrap());
        let swapped = match magic {
            MAGIC_MICROS => false,
            MAGIC_MICROS_SWAPPED => true,
            other => return Err(CaptureError::BadMagic(other)),
        };
        let link_type = read_u32(&data[20..24], swapped);
        if link_type != LINKTYPE_ETHERNET && link_type != LINKTYPE_RAW {
            return Err(CaptureError::UnsupportedLinkType(link_type));
        }
        Ok(CaptureReader {
            data,
            pos: GLOBAL_HEADER_LEN,
            swapped,
            link_type,
            sensor_id: sensor_id.to_string(),
            stats: CaptureStats::default(),
        })
    }

    pub fn stats(&self) -> &CaptureStats {
        &self.stats
    }

    fn next_record(&mut self) -> Option<PacketRecord> {
        loop {
            let remaining = self.data.len() - self.pos;
            if remaining == 0 {
                return None;
            }
            if remaining < RECORD_HEADER_LEN {
                self.stats.truncated_tail = true;
                self.pos = self.data.len();
                return None;
            }
            let h = &self.data[self.pos..self.pos + RECORD_HEADER_LEN];
            let ts_sec = read_u32(&h[0..4], self.swapped) as i64;
            let ts_usec = read_u32(&h[4..8], self.swapped) as i64;
            let incl_len = read_u32(&h[8..12], self.swapped);
            let orig_len = read_u32(&h[12..16], self.swapped);
            let body_start = self.pos + RECORD_HEADER_LEN;
            let body_end = body_start + incl_len as usize;
            if body_end > self.data.len() {
                self.stats.truncated_tail = true;
                self.pos = self.data.len();
                return None;
            }
            self.pos = body_end;
            self.stats.frames += 1;
            let ts: Micros = ts_sec * 1_000_000 + ts_usec;
            let frame = &self.data[body_start..body_end];
            match self.decode_frame(frame, ts, incl_len, orig_len) {
                Some(pkt) => return Some(pkt),
                None => continue,
            }
        }
    }

    fn decode_frame(
        &mut self,
        frame: &[u8],
        ts: Micros,
        capture_len: u32,
        orig_len: u32,
    ) -> Option<PacketRecord> {
        let ip = match self.link_type {
            LINKTYPE_ETHERNET => {
                if frame.len() < 14 {
                    self.stats.malformed += 1;
                    return None;
                }
                let mut ethertype = u16::from_be_bytes([frame[12], frame[13]]);
                let mut off = 14;
                // single 802.1Q tag
                if ethertype == ETHERTYPE_VLAN {
                    if frame.len() < 18 {
                        self.stats.malformed += 1;
                        return None;
                    }
                    ethertype = u16::from_be_bytes([frame[16], frame[17]]);
                    off = 18;
                }
                if ethertype != ETHERTYPE_IPV4 {
                    self.stats.non_ipv4 += 1;
                    return None;
                }
                &frame[off..]
            }
            LINKTYPE_RAW => {
                if frame.is_empty() {
                    self.stats.malformed += 1;
                    return None;
                }
                if frame[0] >> 4 != 4 {
                    self.stats.non_ipv4 += 1;
                    return None;
                }
                frame
            }
            _ => unreachable!("link type validated in new()"),
        };
        match decode_ipv4(ip) {
            Ipv4Decode::Packet {
                src_ip,
                dst_ip,
                ip_proto,
                src_port,
                dst_port,
                tcp_flags,
                tcp_seq,
                payload,
            } => {
                self.stats.ipv4_packets += 1;
                Some(PacketRecord {
                    ts,
                    sensor_id: self.sensor_id.clone(),
                    src_ip,
                    dst_ip,
                    ip_proto,
                    src_port,
                    dst_port,
                    tcp_flags,
                    tcp_seq,
                    payload: payload.to_vec(),
                    capture_len,
                    orig_len,
                })
            }
            Ipv4Decode::Fragment => {
                self.stats.fragments += 1;
                None
            }
            Ipv4Decode::Malformed => {
                self.stats.malformed += 1;
                None
            }
        }
    }
}

impl Iterator for CaptureReader<'_> {
    type Item = PacketRecord;

    fn next(&mut self) -> Option<PacketRecord> {
        self.next_record()
    }
}

enum Ipv4Decode<'a> {
    Packet {
        src_ip: Ipv4Addr,
        dst_ip: Ipv4Addr,
        ip_proto: IpProto,
        src_port: u16,
        dst_port: u16,
        tcp_flags: TcpFlags,
        tcp_seq: Option<u32>,
        payload: &'a [u8],
    },
    Fragment,
    Malformed,
}

fn decode_ipv4(ip: &[u8]) -> Ipv4Decode<'_> {
    if ip.len() < 20 {
        return Ipv4Decode::Malformed;
    }
    if ip[0] >> 4 != 4 {
        return Ipv4Decode::Malformed;
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Ipv4Decode::Malformed;
    }
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    let flags_frag = u16::from_be_bytes([ip[6], ip[7]]);
    let more_fragments = flags_frag & 0x2000 != 0;
    let frag_offset = flags_frag & 0x1fff;
    if more_fragments || frag_offset != 0 {
        return Ipv4Decode::Fragment;
    }
    let proto = IpProto::from_number(ip[9]);
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    // honor the IP total length but never read past the captured bytes
    let end = total_len.clamp(ihl, ip.len()).min(ip.len());
    let l4 = &ip[ihl..end];
    match proto {
        IpProto::Tcp => {
            if l4.len() < 20 {
                return Ipv4Decode::Malformed;
            }
            let src_port = u16::from_be_bytes([l4[0], l4[1]]);
            let dst_port = u16::from_be_bytes([l4[2], l4[3]]);
            let seq = u32::from_be_bytes([l4[4], l4[5], l4[6], l4[7]]);
            let data_off = ((l4[12] >> 4) as usize) * 4;
            if data_off < 20 || l4.len() < data_off {
                return Ipv4Decode::Malformed;
            }
            Ipv4Decode::Packet {
                src_ip,
                dst_ip,
                ip_proto: proto,
                src_port,
                dst_port,
                tcp_flags: TcpFlags::from_bits(l4[13]),
                tcp_seq: Some(seq),
                payload: &l4[data_off..],
            }
        }
        IpProto::Udp => {
            if l4.len() < 8 {
                return Ipv4Decode::Malformed;
            }
            Ipv4Decode::Packet {
                src_ip,
                dst_ip,
                ip_proto: proto,
                src_port: u16::from_be_bytes([l4[0], l4[1]]),
                dst_port: u16::from_be_bytes([l4[2], l4[3]]),
                tcp_flags: TcpFlags::empty(),
                tcp_seq: None,
                payload: &l4[8..],
            }
        }
        IpProto::Icmp => {
            if l4.len() < 8 {
                return Ipv4Decode::Malformed;
            }
            Ipv4Decode::Packet {
                src_ip,
                dst_ip,
                ip_proto: proto,
                src_port: 0,
                dst_port: 0,
                tcp_flags: TcpFlags::empty(),
                tcp_seq: None,
                payload: &l4[8..],
            }
        }
        IpProto::Gre => {
            if l4.len() < 4 {
                return Ipv4Decode::Malformed;
            }
            let flags = u16::from_be_bytes([l4[0], l4[1]]);
            let mut hdr = 4usize;
            if flags & 0x8000 != 0 {
                hdr += 4; // checksum + reserved
            }
            if flags & 0x2000 != 0 {
                hdr += 4; // key
            }
            if flags & 0x1000 != 0 {
                hdr += 4; // sequence
            }
            if l4.len() < hdr {
                return Ipv4Decode::Malformed;
            }
            Ipv4Decode::Packet {
                src_ip,
                dst_ip,
                ip_proto: proto,
                src_port: 0,
                dst_port: 0,
                tcp_flags: TcpFlags::empty(),
                tcp_seq: None,
                payload: &l4[hdr..],
            }
        }
        IpProto::Other(_) => Ipv4Decode::Packet {
            src_ip,
            dst_ip,
            ip_proto: proto,
            src_port: 0,
            dst_port: 0,
            tcp_flags: TcpFlags::empty(),
            tcp_seq: None,
            payload: l4,
        },
    }
}

/// Parse a whole capture file, yielding packets in file order plus the
/// skip counters. Fails only on an unusable global header.
pub fn parse_capture_file(
    data: &[u8],
    sensor_id: &str,
) -> Result<(Vec<PacketRecord>, CaptureStats), CaptureError> {
    let mut reader = CaptureReader::new(data, sensor_id)?;
    let mut out = Vec::new();
    for pkt in reader.by_ref() {
        out.push(pkt);
    }
    let stats = reader.stats().clone();
    Ok((out, stats))
}

fn read_u32(b: &[u8], swapped: bool) -> u32 {
    let v = u32::from_le_bytes(b[0..4].try_into().unwrap());
    if swapped {
        v.swap_bytes()
    } else {
        v
    }
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum = 0u32;
    for chunk in header.chunks(2) {
        let word = if chunk.len() == 2 {
            u16::from_be_bytes([chunk[0], chunk[1]])
        } else {
            u16::from_be_bytes([chunk[0], 0])
        };
        sum += word as u32;
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Encode one packet as an Ethernet frame (synthetic MACs, valid IPv4
/// header checksum, zero transport checksum).
pub fn encode_frame(pkt: &PacketRecord) -> Vec<u8> {
    let l4 = match pkt.ip_proto {
        IpProto::Tcp => {
            let mut t = Vec::with_capacity(20 + pkt.payload.len());
            t.extend_from_slice(&pkt.src_port.to_be_bytes());
            t.extend_from_slice(&pkt.dst_port.to_be_bytes());
            t.extend_from_slice(&pkt.tcp_seq.unwrap_or(0).to_be_bytes());
            t.extend_from_slice(&0u32.to_be_bytes()); // ack
            t.push(5 << 4); // data offset 20 bytes
            t.push(pkt.tcp_flags.bits());
            t.extend_from_slice(&0x2000u16.to_be_bytes()); // window
            t.extend_from_slice(&0u16.to_be_bytes()); // checksum
            t.extend_from_slice(&0u16.to_be_bytes()); // urgent
            t.extend_from_slice(&pkt.payload);
            t
        }
        IpProto::Udp => {
            let mut t = Vec::with_capacity(8 + pkt.payload.len());
            t.extend_from_slice(&pkt.src_port.to_be_bytes());
            t.extend_from_slice(&pkt.dst_port.to_be_bytes());
            t.extend_from_slice(&((8 + pkt.payload.len()) as u16).to_be_bytes());
            t.extend_from_slice(&0u16.to_be_bytes());
            t.extend_from_slice(&pkt.payload);
            t
        }
        IpProto::Icmp => {
            let mut t = vec![8, 0, 0, 0, 0, 0, 0, 0];
            t.extend_from_slice(&pkt.payload);
            t
        }
        IpProto::Gre | IpProto::Other(_) => {
            let mut t = if pkt.ip_proto == IpProto::Gre {
                vec![0, 0, 0, 0]
            } else {
                Vec::new()
            };
            t.extend_from_slice(&pkt.payload);
            t
        }
    };
    let total_len = 20 + l4.len();
    let mut ip = Vec::with_capacity(total_len);
    ip.push(0x45);
    ip.push(0);
    ip.extend_from_slice(&(total_len as u16).to_be_bytes());
    ip.extend_from_slice(&0u16.to_be_bytes()); // id
    ip.extend_from_slice(&0x4000u16.to_be_bytes()); // DF
    ip.push(64); // ttl
    ip.push(pkt.ip_proto.number());
    ip.extend_from_slice(&0u16.to_be_bytes()); // checksum placeholder
    ip.extend_from_slice(&pkt.src_ip.octets());
    ip.extend_from_slice(&pkt.dst_ip.octets());
    let cksum = ipv4_checksum(&ip[0..20]);
    ip[10..12].copy_from_slice(&cksum.to_be_bytes());
    ip.extend_from_slice(&l4);

    let mut frame = Vec::with_capacity(14 + ip.len());
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]); // dst mac
    frame.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x02]); // src mac
    frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
    frame.extend_from_slice(&ip);
    frame
}

/// Write packets as a little-endian classic capture file.
pub fn write_capture_file(w: &mut impl Write, packets: &[PacketRecord]) -> io::Result<()> {
    w.write_all(&MAGIC_MICROS.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?; // version major
    w.write_all(&4u16.to_le_bytes())?; // version minor
    w.write_all(&0i32.to_le_bytes())?; // thiszone
    w.write_all(&0u32.to_le_bytes())?; // sigfigs
    w.write_all(&65535u32.to_le_bytes())?; // snaplen
    w.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;
    for pkt in packets {
        let frame = encode_frame(pkt);
        let sec = (pkt.ts / 1_000_000) as u32;
        let usec = (pkt.ts % 1_000_000) as u32;
        w.write_all(&sec.to_le_bytes())?;
        w.write_all(&usec.to_le_bytes())?;
        w.write_all(&(frame.len() as u32).to_le_bytes())?;
        w.write_all(&(frame.len() as u32).to_le_bytes())?;
        w.write_all(&frame)?;
    }
    Ok(())
}
