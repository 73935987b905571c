//! Mirai scanner fingerprint: a Telnet SYN whose sequence number
//! equals the destination address read as a 32-bit big-endian value.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use crate::model::{IpProto, Micros, PacketRecord, TcpFlags, MICROS_PER_DAY};

use super::{AttackCategory, AttackEvent, Evidence, FlowData, ServiceKind};

pub fn is_mirai_probe(pkt: &PacketRecord) -> bool {
    pkt.ip_proto == IpProto::Tcp
        && pkt.tcp_flags.contains(TcpFlags::SYN)
        && !pkt.tcp_flags.contains(TcpFlags::ACK)
        && (pkt.dst_port == 23 || pkt.dst_port == 2323)
        && pkt.tcp_seq == Some(u32::from(pkt.dst_ip))
}

struct Group {
    first_ts: Micros,
    last_ts: Micros,
    probes: u64,
    evidence: Vec<Evidence>,
}

fn build_events(groups: BTreeMap<(Ipv4Addr, String, i64), Group>) -> Vec<AttackEvent> {
    groups
        .into_iter()
        .map(|((src, sensor, _day), g)| {
            let mut ev = AttackEvent::new(AttackCategory::MiraiScan, &sensor, src);
            ev.ts_start = g.first_ts;
            ev.ts_end = g.last_ts;
            ev.service = Some(ServiceKind::Telnet);
            ev.evidence = g.evidence;
            ev.attributes
                .insert("probe_count".to_string(), g.probes.to_string());
            ev
        })
        .collect()
}

fn fold(
    groups: &mut BTreeMap<(Ipv4Addr, String, i64), Group>,
    pkt: &PacketRecord,
    evidence: Evidence,
) {
    let key = (
        pkt.src_ip,
        pkt.sensor_id.clone(),
        pkt.ts.div_euclid(MICROS_PER_DAY),
    );
    let g = groups.entry(key).or_insert(Group {
        first_ts: pkt.ts,
        last_ts: pkt.ts,
        probes: 0,
        evidence: Vec::new(),
    });
    g.first_ts = g.first_ts.min(pkt.ts);
    g.last_ts = g.last_ts.max(pkt.ts);
    g.probes += 1;
    if g.evidence.len() < 8 {
        g.evidence.push(evidence);
    }
}

/// One event per (source, sensor, day) with the Mirai fingerprint.
/// Evidence references packet indexes within the input slice.
pub fn detect_mirai(packets: &[PacketRecord]) -> Vec<AttackEvent> {
    let mut groups = BTreeMap::new();
    for (idx, pkt) in packets.iter().enumerate() {
        if is_mirai_probe(pkt) {
            fold(&mut groups, pkt, Evidence::Packet(idx as u64));
        }
    }
    build_events(groups)
}

/// Flow-aware variant used by the pipeline; evidence references flows.
pub(crate) fn detect_mirai_flows(flows: &[FlowData]) -> Vec<AttackEvent> {
    let mut groups = BTreeMap::new();
    for fd in flows {
        for pkt in &fd.packets {
            if is_mirai_probe(pkt) {
                fold(&mut groups, pkt, Evidence::flow(fd.flow.flow_id));
            }
        }
    }
    for g in groups.values_mut() {
        g.evidence.dedup();
    }
    build_events(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(src: Ipv4Addr, dst: Ipv4Addr, dport: u16, seq: u32, ts: Micros) -> PacketRecord {
        PacketRecord {
            ts,
            sensor_id: "s1".into(),
            src_ip: src,
            dst_ip: dst,
            ip_proto: IpProto::Tcp,
            src_port: 41000,
            dst_port: dport,
            tcp_flags: TcpFlags::SYN,
            tcp_seq: Some(seq),
            payload: vec![],
            capture_len: 64,
            orig_len: 64,
        }
    }

    #[test]
    fn fingerprint_matches_seq_equal_dst() {
        let dst = Ipv4Addr::new(10, 0, 0, 1);
        let p = probe(Ipv4Addr::new(198, 18, 0, 1), dst, 23, 0x0A000001, 0);
        assert!(is_mirai_probe(&p));
        let events = detect_mirai(&[p]);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].category, AttackCategory::MiraiScan);
    }

    #[test]
    fn wrong_seq_no_event() {
        let dst = Ipv4Addr::new(10, 0, 0, 1);
        let p = probe(Ipv4Addr::new(198, 18, 0, 1), dst, 23, 0x0A000002, 0);
        assert!(!is_mirai_probe(&p));
        assert!(detect_mirai(&[p]).is_empty());
    }

    #[test]
    fn non_telnet_port_ignored() {
        let dst = Ipv4Addr::new(10, 0, 0, 1);
        let p = probe(Ipv4Addr::new(198, 18, 0, 1), dst, 22, 0x0A000001, 0);
        assert!(!is_mirai_probe(&p));
    }

    #[test]
    fn port_2323_counts() {
        let dst = Ipv4Addr::new(10, 0, 0, 2);
        let p = probe(Ipv4Addr::new(198, 18, 0, 1), dst, 2323, 0x0A000002, 0);
        assert!(is_mirai_probe(&p));
    }

    #[test]
    fn dedupe_per_source_sensor_day() {
        let dst = Ipv4Addr::new(10, 0, 0, 1);
        let mut packets = Vec::new();
        // 1000 probes from 100 sources on one day -> 100 events
        for i in 0..1000u32 {
            let src = Ipv4Addr::new(198, 18, (i % 100) as u8, 1);
            packets.push(probe(src, dst, 23, 0x0A000001, (i as i64) * 1_000_000));
        }
        let events = detect_mirai(&packets);
        assert_eq!(events.len(), 100);
        let total: u64 = events
            .iter()
            .map(|e| e.attributes["probe_count"].parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 1000);
    }

    #[test]
    fn next_day_is_a_new_event() {
        let dst = Ipv4Addr::new(10, 0, 0, 1);
        let src = Ipv4Addr::new(198, 18, 0, 1);
        let packets = vec![
            probe(src, dst, 23, 0x0A000001, 0),
            probe(src, dst, 23, 0x0A000001, MICROS_PER_DAY + 1),
        ];
        assert_eq!(detect_mirai(&packets).len(), 2);
    }
}
