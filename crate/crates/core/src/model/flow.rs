//! Flow assembly: groups packets into bidirectional flows keyed by the
//! unordered 5-tuple plus sensor, splitting on idle gaps.

use std::collections::HashMap;

use super::{
    stable_hash64, CanonicalTuple, FlowId, FlowRecord, FlowState, IpProto, Micros, PacketRecord,
    TcpFlags,
};

pub const DEFAULT_IDLE_TIMEOUT_SECS: u64 = 60;

/// A flow together with its packets in timestamp order.
#[derive(Debug, Clone)]
pub struct FlowBundle {
    pub flow: FlowRecord,
    pub packets: Vec<PacketRecord>,
}

struct ActiveFlow {
    first: PacketRecord,
    packets: Vec<PacketRecord>,
    last_ts: Micros,
    fwd_packets: u64,
    rev_packets: u64,
    fwd_bytes: u64,
    rev_bytes: u64,
    flag_union: TcpFlags,
    state: FlowState,
    saw_synack: bool,
}

impl ActiveFlow {
    fn new(first: PacketRecord) -> ActiveFlow {
        let is_tcp = first.ip_proto == IpProto::Tcp;
        let syn_only = first.tcp_flags.contains(TcpFlags::SYN)
            && !first.tcp_flags.contains(TcpFlags::ACK);
        let mut state = if is_tcp && syn_only {
            FlowState::SynOnly
        } else {
            FlowState::Data
        };
        if is_tcp {
            if first.tcp_flags.contains(TcpFlags::RST) {
                state = FlowState::Reset;
            } else if first.tcp_flags.contains(TcpFlags::FIN) {
                state = FlowState::Closed;
            }
        }
        ActiveFlow {
            last_ts: first.ts,
            fwd_packets: 1,
            rev_packets: 0,
            fwd_bytes: first.payload.len() as u64,
            rev_bytes: 0,
            flag_union: first.tcp_flags,
            state,
            saw_synack: false,
            packets: vec![first.clone()],
            first,
        }
    }

    fn is_forward(&self, pkt: &PacketRecord) -> bool {
        pkt.src_ip == self.first.src_ip && pkt.src_port == self.first.src_port
    }

    fn advance(&mut self, to: FlowState) {
        if to > self.state {
            self.state = to;
        }
    }

    fn push(&mut self, pkt: PacketRecord) {
        let fwd = self.is_forward(&pkt);
        if fwd {
            self.fwd_packets += 1;
            self.fwd_bytes += pkt.payload.len() as u64;
        } else {
            self.rev_packets += 1;
            self.rev_bytes += pkt.payload.len() as u64;
        }
        self.flag_union.insert(pkt.tcp_flags);
        self.last_ts = self.last_ts.max(pkt.ts);
        if pkt.ip_proto == IpProto::Tcp {
            let f = pkt.tcp_flags;
            if !fwd && f.contains(TcpFlags::SYN) && f.contains(TcpFlags::ACK) {
                self.saw_synack = true;
            } else if fwd && self.saw_synack && f.contains(TcpFlags::ACK) {
                self.advance(FlowState::HandshakeComplete);
            }
            if !pkt.payload.is_empty() {
                self.advance(FlowState::Data);
            }
            if f.contains(TcpFlags::RST) {
                self.advance(FlowState::Reset);
            } else if f.contains(TcpFlags::FIN) && self.state < FlowState::Closed {
                self.advance(FlowState::Closed);
            }
        }
        self.packets.push(pkt);
    }

    fn finish(self, sensor_id: &str, tuple: &CanonicalTuple) -> FlowBundle {
        let first_ts = self.first.ts;
        let flow_id = FlowId(stable_hash64(&[
            sensor_id.as_bytes(),
            &[tuple.proto],
            &tuple.lo_ip.to_be_bytes(),
            &tuple.lo_port.to_be_bytes(),
            &tuple.hi_ip.to_be_bytes(),
            &tuple.hi_port.to_be_bytes(),
            &first_ts.to_be_bytes(),
        ]));
        let flow = FlowRecord {
            flow_id,
            sensor_id: sensor_id.to_string(),
            initiator_ip: self.first.src_ip,
            initiator_port: self.first.src_port,
            responder_ip: self.first.dst_ip,
            responder_port: self.first.dst_port,
            ip_proto: self.first.ip_proto,
            first_ts,
            last_ts: self.last_ts,
            fwd_packets: self.fwd_packets,
            rev_packets: self.rev_packets,
            fwd_bytes: self.fwd_bytes,
            rev_bytes: self.rev_bytes,
            flag_union: self.flag_union,
            state: self.state,
        };
        FlowBundle {
            flow,
            packets: self.packets,
        }
    }
}

/// Assemble flows keeping per-flow packet lists. Input order within a
/// sensor may be off by the reorder tolerance; packets are sorted by
/// (sensor, ts) before grouping, stably so equal timestamps keep file
/// order.
pub fn assemble_bundles(packets: Vec<PacketRecord>, idle_timeout_secs: u64) -> Vec<FlowBundle> {
    let idle_us = (idle_timeout_secs as i64).saturating_mul(1_000_000);
    let mut sorted = packets;
    sorted.sort_by(|a, b| (&a.sensor_id, a.ts).cmp(&(&b.sensor_id, b.ts)));

    let mut active: HashMap<(String, CanonicalTuple), ActiveFlow> = HashMap::new();
    let mut done: Vec<FlowBundle> = Vec::new();
    for pkt in sorted {
        let key = (pkt.sensor_id.clone(), pkt.canonical_tuple());
        match active.get_mut(&key) {
            Some(flow) if pkt.ts - flow.last_ts <= idle_us => flow.push(pkt),
            Some(_) => {
                let old = active.remove(&key).unwrap();
                done.push(old.finish(&key.0, &key.1));
                active.insert(key, ActiveFlow::new(pkt));
            }
            None => {
                active.insert(key, ActiveFlow::new(pkt));
            }
        }
    }
    for (key, flow) in active {
        done.push(flow.finish(&key.0, &key.1));
    }
    done.sort_by(|a, b| {
        (a.flow.first_ts, &a.flow.sensor_id, a.flow.flow_id.0).cmp(&(
            b.flow.first_ts,
            &b.flow.sensor_id,
            b.flow.flow_id.0,
        ))
    });
    done
}

/// Digest of assembled flows over (sensor, tuple, state).
pub fn flow_records_digest(flows: &[FlowRecord]) -> u64 {
    super::flow_population_digest(flows.iter().map(|f| {
        let a = (u32::from(f.initiator_ip), f.initiator_port);
        let b = (u32::from(f.responder_ip), f.responder_port);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        (
            f.sensor_id.as_str(),
            CanonicalTuple {
                proto: f.ip_proto.number(),
                lo_ip: lo.0,
                lo_port: lo.1,
                hi_ip: hi.0,
                hi_port: hi.1,
            },
            f.state,
        )
    }))
}

/// Assemble flows, dropping per-flow packets.
pub fn assemble_flows(packets: Vec<PacketRecord>, idle_timeout_secs: u64) -> Vec<FlowRecord> {
    assemble_bundles(packets, idle_timeout_secs)
        .into_iter()
        .map(|b| b.flow)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    fn pkt(ts: Micros, src: u8, dst: u8, sport: u16, dport: u16, flags: TcpFlags) -> PacketRecord {
        PacketRecord {
            ts,
            sensor_id: "s1".into(),
            src_ip: Ipv4Addr::new(10, 0, 0, src),
            dst_ip: Ipv4Addr::new(10, 0, 0, dst),
            ip_proto: IpProto::Tcp,
            src_port: sport,
            dst_port: dport,
            tcp_flags: flags,
            tcp_seq: Some(0),
            payload: vec![],
            capture_len: 64,
            orig_len: 64,
        }
    }

    #[test]
    fn single_syn_is_one_syn_only_flow() {
        let flows = assemble_flows(vec![pkt(0, 1, 2, 1000, 8291, TcpFlags::SYN)], 60);
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].state, FlowState::SynOnly);
        assert_eq!(flows[0].fwd_packets, 1);
        assert_eq!(flows[0].rev_packets, 0);
        assert_eq!(flows[0].initiator_ip, Ipv4Addr::new(10, 0, 0, 1));
    }

    #[test]
    fn canonical_handshake_completes() {
        let flows = assemble_flows(
            vec![
                pkt(0, 1, 2, 1000, 80, TcpFlags::SYN),
                pkt(10, 2, 1, 80, 1000, TcpFlags::SYN | TcpFlags::ACK),
                pkt(20, 1, 2, 1000, 80, TcpFlags::ACK),
            ],
            60,
        );
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].state, FlowState::HandshakeComplete);
        assert_eq!(flows[0].fwd_packets, 2);
        assert_eq!(flows[0].rev_packets, 1);
    }

    #[test]
    fn idle_gap_splits_flows() {
        let gap = 61 * 1_000_000;
        let flows = assemble_flows(
            vec![
                pkt(0, 1, 2, 1000, 80, TcpFlags::SYN),
                pkt(gap, 1, 2, 1000, 80, TcpFlags::SYN),
            ],
            60,
        );
        assert_eq!(flows.len(), 2);
        assert_ne!(flows[0].flow_id, flows[1].flow_id);
    }

    #[test]
    fn gap_at_timeout_boundary_stays_one_flow() {
        let flows = assemble_flows(
            vec![
                pkt(0, 1, 2, 1000, 80, TcpFlags::SYN),
                pkt(60 * 1_000_000, 1, 2, 1000, 80, TcpFlags::ACK),
            ],
            60,
        );
        assert_eq!(flows.len(), 1);
    }

    #[test]
    fn conservation_of_packets() {
        let mut packets = Vec::new();
        for i in 0..100 {
            packets.push(pkt(
                i * 500_000,
                (i % 5) as u8 + 1,
                9,
                1000 + (i % 7) as u16,
                80,
                TcpFlags::SYN,
            ));
        }
        let total = packets.len() as u64;
        let flows = assemble_flows(packets, 60);
        let sum: u64 = flows.iter().map(|f| f.fwd_packets + f.rev_packets).sum();
        assert_eq!(sum, total);
    }

    #[test]
    fn reset_state_wins() {
        let flows = assemble_flows(
            vec![
                pkt(0, 1, 2, 1000, 80, TcpFlags::SYN),
                pkt(10, 2, 1, 80, 1000, TcpFlags::RST),
            ],
            60,
        );
        assert_eq!(flows[0].state, FlowState::Reset);
    }

    #[test]
    fn deterministic_across_input_permutations() {
        let a = vec![
            pkt(0, 1, 2, 1000, 80, TcpFlags::SYN),
            pkt(5, 3, 2, 1001, 80, TcpFlags::SYN),
            pkt(9, 2, 1, 80, 1000, TcpFlags::SYN | TcpFlags::ACK),
        ];
        let mut b = a.clone();
        b.swap(0, 1);
        assert_eq!(assemble_flows(a, 60), assemble_flows(b, 60));
    }
}
