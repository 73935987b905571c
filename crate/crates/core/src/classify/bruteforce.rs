//! Brute-force detection over SSH/Telnet connection attempts and
//! login-failure log events, with the SSH/Telnet source-IP overlap the
//! landscape analysis reports.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use crate::logparse::{LogCategory, LogEvent};
use crate::model::{IpProto, Micros, TcpFlags, MICROS_PER_SEC};

use super::{AttackCategory, AttackEvent, Evidence, FlowData, ServiceKind};

#[derive(Debug, Clone)]
pub struct BruteForceParams {
    pub window_secs: u64,
    pub threshold: u32,
}

impl Default for BruteForceParams {
    fn default() -> BruteForceParams {
        BruteForceParams {
            window_secs: 60,
            threshold: 5,
        }
    }
}

/// One deduplicated attempt: a completed-or-attempted connection to
/// 22/23 or a login-failure log event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub ts: Micros,
    pub src: Ipv4Addr,
    pub sensor_id: String,
    pub service: ServiceKind,
    pub origin: Evidence,
}

#[derive(Debug, Clone, Default)]
pub struct BruteForceReport {
    pub attempts_by_service: BTreeMap<ServiceKind, u64>,
    /// Jaccard overlap of source IPs seen against SSH and Telnet.
    pub ip_overlap: f64,
    pub ssh_sources: BTreeSet<Ipv4Addr>,
    pub telnet_sources: BTreeSet<Ipv4Addr>,
    /// All deduplicated attempts, for per-day reporting.
    pub attempts: Vec<Attempt>,
}

/// Jaccard index of two IP sets; 0.0 when both are empty.
pub fn ip_set_overlap(a: &BTreeSet<Ipv4Addr>, b: &BTreeSet<Ipv4Addr>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / union as f64
}

pub fn detect_bruteforce(
    flows: &[FlowData],
    events: &[LogEvent],
    params: &BruteForceParams,
) -> (Vec<AttackEvent>, BruteForceReport) {
    let mut attempts: Vec<Attempt> = Vec::new();
    // flow view first so dedup prefers packet evidence
    for fd in flows {
        let f = &fd.flow;
        if f.ip_proto != IpProto::Tcp || !f.flag_union.contains(TcpFlags::SYN) {
            continue;
        }
        let service = match f.responder_port {
            22 => ServiceKind::Ssh,
            23 => ServiceKind::Telnet,
            _ => continue,
        };
        attempts.push(Attempt {
            ts: f.first_ts,
            src: f.initiator_ip,
            sensor_id: f.sensor_id.clone(),
            service,
            origin: Evidence::flow(f.flow_id),
        });
    }
    for ev in events {
        if ev.category != LogCategory::LoginFailure {
            continue;
        }
        let service = match ev.service.as_deref().and_then(ServiceKind::from_log_name) {
            Some(s) => s,
            None => continue,
        };
        let src = match ev.src_ip {
            Some(ip) => ip,
            None => continue,
        };
        attempts.push(Attempt {
            ts: ev.ts,
            src,
            sensor_id: ev.sensor_id.clone(),
            service,
            origin: Evidence::LogLine(ev.line_no),
        });
    }

    // both views covering the same (src, service, second) at a sensor
    // count once
    let mut seen: BTreeSet<(Ipv4Addr, ServiceKind, String, i64)> = BTreeSet::new();
    let mut deduped: Vec<Attempt> = Vec::new();
    for at in attempts {
        let key = (
            at.src,
            at.service,
            at.sensor_id.clone(),
            at.ts.div_euclid(MICROS_PER_SEC),
        );
        if seen.insert(key) {
            deduped.push(at);
        }
    }
    deduped.sort_by(|a, b| (a.ts, a.src, &a.sensor_id).cmp(&(b.ts, b.src, &b.sensor_id)));

    let mut report = BruteForceReport::default();
    for at in &deduped {
        *report.attempts_by_service.entry(at.service).or_insert(0) += 1;
        match at.service {
            ServiceKind::Ssh => {
                report.ssh_sources.insert(at.src);
            }
            ServiceKind::Telnet => {
                report.telnet_sources.insert(at.src);
            }
            _ => {}
        }
    }
    report.ip_overlap = ip_set_overlap(&report.ssh_sources, &report.telnet_sources);

    // a source becomes an event when its attempts against one service
    // at one sensor reach the threshold inside the window
    let mut groups: BTreeMap<(Ipv4Addr, ServiceKind, String), Vec<&Attempt>> = BTreeMap::new();
    for at in &deduped {
        groups
            .entry((at.src, at.service, at.sensor_id.clone()))
            .or_default()
            .push(at);
    }
    let window_us = params.window_secs as i64 * MICROS_PER_SEC;
    let threshold = params.threshold.max(1) as usize;
    let mut out = Vec::new();
    for ((src, service, sensor), group) in groups {
        let tripped = group
            .windows(threshold)
            .any(|w| w[threshold - 1].ts - w[0].ts <= window_us);
        if !tripped {
            continue;
        }
        let mut ev = AttackEvent::new(AttackCategory::BruteForce, &sensor, src);
        ev.ts_start = group.first().unwrap().ts;
        ev.ts_end = group.last().unwrap().ts;
        ev.service = Some(service);
        ev.attributes
            .insert("attempts".to_string(), group.len().to_string());
        for at in group.iter().take(8) {
            ev.evidence.push(at.origin.clone());
        }
        out.push(ev);
    }
    report.attempts = deduped;
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::prepare_flows;
    use crate::logparse::parse_log_text;
    use crate::model::PacketRecord;

    fn syn(ts: Micros, src: Ipv4Addr, sport: u16, dport: u16) -> PacketRecord {
        PacketRecord {
            ts,
            sensor_id: "s1".into(),
            src_ip: src,
            dst_ip: Ipv4Addr::new(192, 0, 2, 1),
            ip_proto: IpProto::Tcp,
            src_port: sport,
            dst_port: dport,
            tcp_flags: TcpFlags::SYN,
            tcp_seq: Some(1),
            payload: vec![],
            capture_len: 64,
            orig_len: 64,
        }
    }

    #[test]
    fn ten_syns_in_a_minute_trip_threshold_ten() {
        let src = Ipv4Addr::new(198, 18, 0, 5);
        let packets: Vec<_> = (0..10)
            .map(|i| syn(i * 6 * MICROS_PER_SEC, src, 40000 + i as u16, 22))
            .collect();
        let flows = prepare_flows(packets, 60);
        let params = BruteForceParams {
            window_secs: 60,
            threshold: 10,
        };
        let (events, report) = detect_bruteforce(&flows, &[], &params);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].service, Some(ServiceKind::Ssh));
        assert_eq!(report.attempts_by_service.get(&ServiceKind::Ssh), Some(&10));
    }

    #[test]
    fn below_threshold_no_event() {
        let src = Ipv4Addr::new(198, 18, 0, 5);
        let packets: Vec<_> = (0..4)
            .map(|i| syn(i * MICROS_PER_SEC, src, 40000 + i as u16, 22))
            .collect();
        let flows = prepare_flows(packets, 60);
        let (events, _) = detect_bruteforce(&flows, &[], &BruteForceParams::default());
        assert!(events.is_empty());
    }

    #[test]
    fn window_excludes_slow_attempts() {
        let src = Ipv4Addr::new(198, 18, 0, 6);
        // 5 attempts spread 2 minutes apart never fit a 60 s window
        let packets: Vec<_> = (0..5)
            .map(|i| syn(i * 120 * MICROS_PER_SEC, src, 40000 + i as u16, 23))
            .collect();
        let flows = prepare_flows(packets, 60);
        let (events, report) = detect_bruteforce(&flows, &[], &BruteForceParams::default());
        assert!(events.is_empty());
        assert_eq!(
            report.attempts_by_service.get(&ServiceKind::Telnet),
            Some(&5)
        );
    }

    #[test]
    fn disjoint_attacker_sets_have_zero_overlap() {
        let packets = vec![
            syn(0, Ipv4Addr::new(198, 18, 0, 1), 40000, 22),
            syn(1_000_000, Ipv4Addr::new(198, 18, 0, 2), 40001, 23),
        ];
        let flows = prepare_flows(packets, 60);
        let (_, report) = detect_bruteforce(&flows, &[], &BruteForceParams::default());
        assert_eq!(report.ip_overlap, 0.0);
    }

    #[test]
    fn log_failures_count_and_dedupe_against_flows() {
        let src = Ipv4Addr::new(198, 18, 0, 9);
        // flow attempt at second 0 and a log failure in the same second
        let packets = vec![syn(500_000, src, 40000, 22)];
        let flows = prepare_flows(packets, 60);
        let events = parse_log_text(
            "1970-01-01 00:00:00 system,error login failure for user root from 198.18.0.9 via ssh\n\
             1970-01-01 00:00:05 system,error login failure for user root from 198.18.0.9 via ssh\n",
            "s1",
        );
        let (_, report) = detect_bruteforce(&flows, &events, &BruteForceParams::default());
        // 3 raw attempts, one collapses: flow@0s and log@0s share the key
        assert_eq!(report.attempts_by_service.get(&ServiceKind::Ssh), Some(&2));
    }

    #[test]
    fn constructed_39_percent_overlap() {
        let mut packets = Vec::new();
        let mut ts = 0;
        // 39 IPs hit both services, 31 SSH only, 30 Telnet only:
        // jaccard = 39 / 100
        for i in 0..39u8 {
            let ip = Ipv4Addr::new(198, 18, 1, i);
            packets.push(syn(ts, ip, 40000, 22));
            ts += MICROS_PER_SEC * 120;
            packets.push(syn(ts, ip, 40001, 23));
            ts += MICROS_PER_SEC * 120;
        }
        for i in 0..31u8 {
            packets.push(syn(ts, Ipv4Addr::new(198, 18, 2, i), 40002, 22));
            ts += MICROS_PER_SEC * 120;
        }
        for i in 0..30u8 {
            packets.push(syn(ts, Ipv4Addr::new(198, 18, 3, i), 40003, 23));
            ts += MICROS_PER_SEC * 120;
        }
        let flows = prepare_flows(packets, 60);
        let (_, report) = detect_bruteforce(&flows, &[], &BruteForceParams::default());
        assert_eq!(report.ip_overlap, 0.39);
    }
}
