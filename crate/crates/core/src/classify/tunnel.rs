//! Tunnel-establishment detection. PPTP success is read off the wire
//! (Start-Control-Connection-Request answered by a reply with result
//! code 1); SSTP rides TLS, so it is detected from log lines. One
//! event per established session.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::sync::LazyLock;

use regex::Regex;

use crate::logparse::LogEvent;
use crate::model::{IpProto, StreamPayload, MICROS_PER_SEC};

use super::{AttackCategory, AttackEvent, Evidence, FlowData, ServiceKind};

pub const PPTP_PORT: u16 = 1723;
pub const PPTP_MAGIC_COOKIE: u32 = 0x1A2B_3C4D;
const PPTP_MSG_CONTROL: u16 = 1;
const CTRL_START_REQUEST: u16 = 1;
const CTRL_START_REPLY: u16 = 2;

#[derive(Debug, Default)]
struct PptpScan {
    has_start_request: bool,
    start_reply_result: Option<u8>,
}

/// Walk PPTP control messages from the start of a stream. Framing is
/// only trusted up to the first gap or malformed message.
fn scan_pptp_control(stream: &StreamPayload) -> PptpScan {
    let mut scan = PptpScan::default();
    let runs = stream.contiguous_runs();
    let buf = match runs.first() {
        Some(&(0, run)) => run,
        _ => return scan,
    };
    let mut off = 0usize;
    while buf.len() - off >= 16 {
        let len = u16::from_be_bytes([buf[off], buf[off + 1]]) as usize;
        if len < 16 || len > buf.len() - off {
            break;
        }
        let msg_type = u16::from_be_bytes([buf[off + 2], buf[off + 3]]);
        let cookie = u32::from_be_bytes([
            buf[off + 4],
            buf[off + 5],
            buf[off + 6],
            buf[off + 7],
        ]);
        if msg_type != PPTP_MSG_CONTROL || cookie != PPTP_MAGIC_COOKIE {
            break;
        }
        let ctrl = u16::from_be_bytes([buf[off + 8], buf[off + 9]]);
        match ctrl {
            CTRL_START_REQUEST => scan.has_start_request = true,
            CTRL_START_REPLY => scan.start_reply_result = Some(buf[off + 14]),
            _ => {}
        }
        off += len;
    }
    scan
}

static RE_TUNNEL_LOG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(pptp|sstp) tunnel established to (\d+\.\d+\.\d+\.\d+)$").unwrap()
});

/// Detect established tunnels from flows and log events. The tunnel
/// endpoint is the remote peer: the dialed side (responder) for wire
/// sessions, the address named in the log line otherwise. Sessions
/// observed both ways are deduplicated on (sensor, service, endpoint,
/// second).
pub fn detect_tunnels(flows: &[FlowData], events: &[LogEvent]) -> Vec<AttackEvent> {
    let mut out = Vec::new();
    let mut seen: BTreeSet<(String, ServiceKind, Ipv4Addr, i64)> = BTreeSet::new();

    for fd in flows {
        let f = &fd.flow;
        if f.ip_proto != IpProto::Tcp || f.responder_port != PPTP_PORT {
            continue;
        }
        let (fwd, rev) = match &fd.streams {
            Some(s) => s,
            None => continue,
        };
        let initiator_scan = scan_pptp_control(fwd);
        let responder_scan = scan_pptp_control(rev);
        let established =
            initiator_scan.has_start_request && responder_scan.start_reply_result == Some(1);
        if !established {
            continue;
        }
        let endpoint = f.responder_ip;
        let key = (
            f.sensor_id.clone(),
            ServiceKind::Pptp,
            endpoint,
            f.first_ts.div_euclid(MICROS_PER_SEC),
        );
        if !seen.insert(key) {
            continue;
        }
        let mut ev = AttackEvent::new(AttackCategory::TunnelEstablished, &f.sensor_id, endpoint);
        ev.ts_start = f.first_ts;
        ev.ts_end = f.last_ts;
        ev.service = Some(ServiceKind::Pptp);
        ev.tunnel_endpoint = Some(endpoint);
        ev.evidence.push(Evidence::flow(f.flow_id));
        ev.attributes
            .insert("result_code".to_string(), "1".to_string());
        out.push(ev);
    }

    for log in events {
        let caps = match RE_TUNNEL_LOG.captures(&log.message) {
            Some(c) => c,
            None => continue,
        };
        let service = match &caps[1] {
            "pptp" => ServiceKind::Pptp,
            _ => ServiceKind::Sstp,
        };
        let endpoint: Ipv4Addr = match caps[2].parse() {
            Ok(ip) => ip,
            Err(_) => continue,
        };
        let key = (
            log.sensor_id.clone(),
            service,
            endpoint,
            log.ts.div_euclid(MICROS_PER_SEC),
        );
        if !seen.insert(key) {
            continue;
        }
        let mut ev = AttackEvent::new(AttackCategory::TunnelEstablished, &log.sensor_id, endpoint);
        ev.ts_start = log.ts;
        ev.ts_end = log.ts;
        ev.service = Some(service);
        ev.tunnel_endpoint = Some(endpoint);
        ev.evidence.push(Evidence::LogLine(log.line_no));
        out.push(ev);
    }
    out
}

/// Encode one PPTP Start-Control-Connection-Request (156 bytes).
pub fn encode_start_control_request() -> Vec<u8> {
    let mut msg = vec![0u8; 156];
    msg[0..2].copy_from_slice(&156u16.to_be_bytes());
    msg[2..4].copy_from_slice(&PPTP_MSG_CONTROL.to_be_bytes());
    msg[4..8].copy_from_slice(&PPTP_MAGIC_COOKIE.to_be_bytes());
    msg[8..10].copy_from_slice(&CTRL_START_REQUEST.to_be_bytes());
    msg[12..14].copy_from_slice(&0x0100u16.to_be_bytes()); // protocol version 1.0
    msg[16..20].copy_from_slice(&1u32.to_be_bytes()); // framing
    msg[20..24].copy_from_slice(&1u32.to_be_bytes()); // bearer
    msg[24..26].copy_from_slice(&1u16.to_be_bytes()); // max channels
    msg
}

/// Encode one PPTP Start-Control-Connection-Reply with the given
/// result code (1 = success).
pub fn encode_start_control_reply(result_code: u8) -> Vec<u8> {
    let mut msg = vec![0u8; 156];
    msg[0..2].copy_from_slice(&156u16.to_be_bytes());
    msg[2..4].copy_from_slice(&PPTP_MSG_CONTROL.to_be_bytes());
    msg[4..8].copy_from_slice(&PPTP_MAGIC_COOKIE.to_be_bytes());
    msg[8..10].copy_from_slice(&CTRL_START_REPLY.to_be_bytes());
    msg[12..14].copy_from_slice(&0x0100u16.to_be_bytes());
    msg[14] = result_code;
    msg[16..20].copy_from_slice(&1u32.to_be_bytes());
    msg[20..24].copy_from_slice(&1u32.to_be_bytes());
    msg[24..26].copy_from_slice(&1u16.to_be_bytes());
    msg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::prepare_flows;
    use crate::logparse::parse_log_text;
    use crate::model::{PacketRecord, TcpFlags};

    fn pptp_handshake(result_code: u8) -> Vec<PacketRecord> {
        let router = Ipv4Addr::new(192, 0, 2, 1);
        let endpoint = Ipv4Addr::new(203, 0, 113, 46);
        let mk = |ts: i64, fwd: bool, flags: TcpFlags, seq: u32, payload: Vec<u8>| PacketRecord {
            ts,
            sensor_id: "s1".into(),
            src_ip: if fwd { router } else { endpoint },
            dst_ip: if fwd { endpoint } else { router },
            ip_proto: IpProto::Tcp,
            src_port: if fwd { 45000 } else { PPTP_PORT },
            dst_port: if fwd { PPTP_PORT } else { 45000 },
            tcp_flags: flags,
            tcp_seq: Some(seq),
            payload,
            capture_len: 64,
            orig_len: 64,
        };
        vec![
            mk(0, true, TcpFlags::SYN, 100, vec![]),
            mk(1, false, TcpFlags::SYN | TcpFlags::ACK, 500, vec![]),
            mk(2, true, TcpFlags::ACK, 101, vec![]),
            mk(3, true, TcpFlags::PSH | TcpFlags::ACK, 101, encode_start_control_request()),
            mk(4, false, TcpFlags::PSH | TcpFlags::ACK, 501, encode_start_control_reply(result_code)),
        ]
    }

    #[test]
    fn successful_handshake_yields_one_event() {
        let flows = prepare_flows(pptp_handshake(1), 60);
        let events = detect_tunnels(&flows, &[]);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].service, Some(ServiceKind::Pptp));
        assert_eq!(
            events[0].tunnel_endpoint,
            Some(Ipv4Addr::new(203, 0, 113, 46))
        );
        assert_eq!(events[0].src_ip, Ipv4Addr::new(203, 0, 113, 46));
    }

    #[test]
    fn general_error_reply_yields_nothing() {
        let flows = prepare_flows(pptp_handshake(2), 60);
        assert!(detect_tunnels(&flows, &[]).is_empty());
    }

    #[test]
    fn request_without_reply_yields_nothing() {
        let mut packets = pptp_handshake(1);
        packets.truncate(4); // drop the reply
        let flows = prepare_flows(packets, 60);
        assert!(detect_tunnels(&flows, &[]).is_empty());
    }

    #[test]
    fn sstp_log_line_yields_event_with_endpoint() {
        let events = parse_log_text(
            "2019-08-03 11:22:33 sstp,ppp,info sstp tunnel established to 203.0.113.9\n",
            "s4",
        );
        let out = detect_tunnels(&[], &events);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].service, Some(ServiceKind::Sstp));
        assert_eq!(out[0].tunnel_endpoint, Some(Ipv4Addr::new(203, 0, 113, 9)));
        assert_eq!(out[0].sensor_id, "s4");
    }

    #[test]
    fn pptp_log_line_also_counts() {
        let events = parse_log_text(
            "2019-08-03 11:22:33 pptp,ppp,info pptp tunnel established to 203.0.113.10\n",
            "s4",
        );
        let out = detect_tunnels(&[], &events);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].service, Some(ServiceKind::Pptp));
    }

    #[test]
    fn corrupted_cookie_ignored() {
        let mut packets = pptp_handshake(1);
        // corrupt the cookie in the request
        packets[3].payload[4] ^= 0xff;
        let flows = prepare_flows(packets, 60);
        assert!(detect_tunnels(&flows, &[]).is_empty());
    }
}
