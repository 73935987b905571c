//! Network signature matching: a flow matches a signature when any of
//! its packets satisfies the filter and the payload patterns satisfy
//! the signature's match mode over their scopes.

use crate::filter::{eval_filter, match_payload_ranges, MatchTarget, PatternScope, PayloadPattern};
use crate::model::Direction;
use crate::sigdb::{MatchMode, Signature, SignatureDb};

use super::{AttackEvent, Evidence, FlowData, ServiceKind};

struct PatternHit {
    dir: Direction,
    range: (usize, usize),
}

fn pattern_satisfied(pat: &PayloadPattern, flow: &FlowData) -> Option<Option<PatternHit>> {
    // Some(hit) = satisfied; None = not satisfied. The inner Option
    // carries stream evidence when the hit was in a stream.
    match pat.scope {
        PatternScope::Packet => {
            for pkt in &flow.packets {
                if let Ok(ranges) = match_payload_ranges(pat, &MatchTarget::Packet(pkt)) {
                    if !ranges.is_empty() {
                        return Some(None);
                    }
                }
            }
            None
        }
        PatternScope::StreamFwd | PatternScope::StreamRev | PatternScope::StreamEither => {
            let (fwd, rev) = flow.streams.as_ref()?;
            let targets: &[&crate::model::StreamPayload] = match pat.scope {
                PatternScope::StreamFwd => &[fwd],
                PatternScope::StreamRev => &[rev],
                _ => &[fwd, rev],
            };
            for stream in targets {
                if let Ok(ranges) = match_payload_ranges(pat, &MatchTarget::Stream(stream)) {
                    if let Some(&range) = ranges.first() {
                        return Some(Some(PatternHit {
                            dir: stream.direction,
                            range,
                        }));
                    }
                }
            }
            None
        }
    }
}

fn signature_matches(sig: &Signature, flow: &FlowData) -> Option<Vec<PatternHit>> {
    let ast = sig.filter_ast()?;
    if !flow.packets.iter().any(|p| eval_filter(ast, p)) {
        return None;
    }
    let patterns = sig.compiled_patterns();
    if patterns.is_empty() {
        // filter-only signature
        return Some(Vec::new());
    }
    let mut hits = Vec::new();
    let mut satisfied = 0usize;
    for pat in patterns {
        match pattern_satisfied(pat, flow) {
            Some(hit) => {
                satisfied += 1;
                if let Some(h) = hit {
                    hits.push(h);
                }
            }
            None => {
                if sig.match_mode == MatchMode::All {
                    return None;
                }
            }
        }
    }
    let ok = match sig.match_mode {
        MatchMode::All => satisfied == patterns.len(),
        MatchMode::Any => satisfied > 0,
    };
    if ok {
        Some(hits)
    } else {
        None
    }
}

/// Match every NETWORK signature against every flow; one event per
/// (flow, signature) pair.
pub fn classify_network(flows: &[FlowData], db: &SignatureDb) -> Vec<AttackEvent> {
    let mut events = Vec::new();
    for flow in flows {
        let ports = [flow.flow.responder_port, flow.flow.initiator_port];
        for sig in db.network_candidates(&ports) {
            let hits = match signature_matches(sig, flow) {
                Some(h) => h,
                None => continue,
            };
            let mut ev = AttackEvent::new(sig.category, &flow.flow.sensor_id, flow.flow.initiator_ip);
            ev.signature_id = Some(sig.id.clone());
            ev.cve_id = sig.cve_id.clone();
            ev.ts_start = flow.flow.first_ts;
            ev.ts_end = flow.flow.last_ts;
            ev.service = ServiceKind::from_port(flow.flow.responder_port);
            ev.evidence.push(Evidence::flow(flow.flow.flow_id));
            for hit in hits.iter().take(4) {
                ev.evidence.push(Evidence::stream(
                    flow.flow.flow_id,
                    hit.dir,
                    hit.range.0,
                    hit.range.1,
                ));
            }
            ev.attributes = sig.attributes.clone();
            events.push(ev);
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{prepare_flows, AttackCategory};
    use crate::model::{IpProto, PacketRecord, TcpFlags};
    use crate::sigdb::SignatureDb;
    use std::net::Ipv4Addr;

    fn tcp_conversation(dst_port: u16, client_payload: &[u8]) -> Vec<PacketRecord> {
        let client = Ipv4Addr::new(198, 51, 100, 7);
        let server = Ipv4Addr::new(192, 0, 2, 1);
        let mk = |ts: i64, fwd: bool, flags: TcpFlags, seq: u32, payload: &[u8]| PacketRecord {
            ts,
            sensor_id: "s1".into(),
            src_ip: if fwd { client } else { server },
            dst_ip: if fwd { server } else { client },
            ip_proto: IpProto::Tcp,
            src_port: if fwd { 40000 } else { dst_port },
            dst_port: if fwd { dst_port } else { 40000 },
            tcp_flags: flags,
            tcp_seq: Some(seq),
            payload: payload.to_vec(),
            capture_len: 64,
            orig_len: 64,
        };
        vec![
            mk(0, true, TcpFlags::SYN, 100, b""),
            mk(1, false, TcpFlags::SYN | TcpFlags::ACK, 500, b""),
            mk(2, true, TcpFlags::ACK, 101, b""),
            mk(3, true, TcpFlags::PSH | TcpFlags::ACK, 101, client_payload),
            mk(4, false, TcpFlags::ACK, 501, b""),
        ]
    }

    #[test]
    fn winbox_traversal_flow_yields_cve_event() {
        let payload = b"\x68\x01\x00\x00bla ../.././..//flash/rw/store/user.dat\x00";
        let flows = prepare_flows(tcp_conversation(8291, payload), 60);
        let db = SignatureDb::builtin();
        let events = classify_network(&flows, &db);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].category, AttackCategory::CveExploit);
        assert_eq!(events[0].cve_id.as_deref(), Some("CVE-2018-14847"));
        assert_eq!(events[0].service, Some(ServiceKind::Winbox));
        assert_eq!(
            events[0].attributes.get("credential_file_requested"),
            Some(&"true".to_string())
        );
        assert!(!events[0].evidence.is_empty());
    }

    #[test]
    fn benign_http_flow_matches_nothing() {
        let payload = b"GET /index.html HTTP/1.1\r\nHost: example.test\r\n\r\n";
        let flows = prepare_flows(tcp_conversation(80, payload), 60);
        let db = SignatureDb::builtin();
        assert!(classify_network(&flows, &db).is_empty());
    }

    #[test]
    fn empty_flow_list_yields_no_events() {
        let db = SignatureDb::builtin();
        assert!(classify_network(&[], &db).is_empty());
    }

    #[test]
    fn pattern_split_across_segments_still_matches() {
        // traversal marker split over two TCP segments
        let client = Ipv4Addr::new(198, 51, 100, 8);
        let server = Ipv4Addr::new(192, 0, 2, 1);
        let mk = |ts: i64, seq: u32, payload: &[u8]| PacketRecord {
            ts,
            sensor_id: "s1".into(),
            src_ip: client,
            dst_ip: server,
            ip_proto: IpProto::Tcp,
            src_port: 40001,
            dst_port: 8291,
            tcp_flags: TcpFlags::PSH | TcpFlags::ACK,
            tcp_seq: Some(seq),
            payload: payload.to_vec(),
            capture_len: 64,
            orig_len: 64,
        };
        let packets = vec![
            mk(0, 100, b"zz ../../..//flash/rw/store/use"),
            mk(1, 131, b"r.dat\x00"),
        ];
        let flows = prepare_flows(packets, 60);
        let db = SignatureDb::builtin();
        let events = classify_network(&flows, &db);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].cve_id.as_deref(), Some("CVE-2018-14847"));
    }

    #[test]
    fn any_mode_probe_signature() {
        let flows = prepare_flows(tcp_conversation(8728, b"\x00\x06/login\x00"), 60);
        let db = SignatureDb::builtin();
        let events = classify_network(&flows, &db);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].signature_id.as_deref(), Some("routeros-api-probe"));
        assert_eq!(events[0].category, AttackCategory::OtherSignature);
    }
}
