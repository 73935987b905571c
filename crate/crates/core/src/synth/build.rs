//! Packet/flow construction helpers and the deterministic generator
//! RNG.

use std::net::Ipv4Addr;

use crate::model::{IpProto, Micros, PacketRecord, TcpFlags};

/// SplitMix64: tiny, seedable, stable across platforms and releases.
/// Generated corpora must be byte-identical for a given seed, so the
/// generator does not depend on an external RNG crate.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len() as u64) as usize]
    }
}

/// Builder for one bidirectional TCP conversation with coherent
/// sequence numbers.
pub struct TcpFlowBuilder {
    sensor: String,
    client: Ipv4Addr,
    server: Ipv4Addr,
    client_port: u16,
    server_port: u16,
    client_seq: u32,
    server_seq: u32,
    ts: Micros,
    step_us: i64,
    pub packets: Vec<PacketRecord>,
}

impl TcpFlowBuilder {
    pub fn new(
        sensor: &str,
        client: Ipv4Addr,
        server: Ipv4Addr,
        client_port: u16,
        server_port: u16,
        start_ts: Micros,
    ) -> TcpFlowBuilder {
        TcpFlowBuilder {
            sensor: sensor.to_string(),
            client,
            server,
            client_port,
            server_port,
            client_seq: 1000,
            server_seq: 77000,
            ts: start_ts,
            step_us: 1000,
            packets: Vec::new(),
        }
    }

    fn push(&mut self, from_client: bool, flags: TcpFlags, payload: &[u8]) {
        let (src_ip, dst_ip, src_port, dst_port, seq) = if from_client {
            (
                self.client,
                self.server,
                self.client_port,
                self.server_port,
                self.client_seq,
            )
        } else {
            (
                self.server,
                self.client,
                self.server_port,
                self.client_port,
                self.server_seq,
            )
        };
        self.packets.push(PacketRecord {
            ts: self.ts,
            sensor_id: self.sensor.clone(),
            src_ip,
            dst_ip,
            ip_proto: IpProto::Tcp,
            src_port,
            dst_port,
            tcp_flags: flags,
            tcp_seq: Some(seq),
            payload: payload.to_vec(),
            capture_len: 0,
            orig_len: 0,
        });
        self.ts += self.step_us;
        let consumed = payload.len() as u32
            + (flags.contains(TcpFlags::SYN) || flags.contains(TcpFlags::FIN)) as u32;
        if from_client {
            self.client_seq = self.client_seq.wrapping_add(consumed);
        } else {
            self.server_seq = self.server_seq.wrapping_add(consumed);
        }
    }

    pub fn handshake(mut self) -> TcpFlowBuilder {
        self.push(true, TcpFlags::SYN, b"");
        self.push(false, TcpFlags::SYN | TcpFlags::ACK, b"");
        self.push(true, TcpFlags::ACK, b"");
        self
    }

    pub fn client_data(mut self, payload: &[u8]) -> TcpFlowBuilder {
        self.push(true, TcpFlags::PSH | TcpFlags::ACK, payload);
        self
    }

    pub fn server_data(mut self, payload: &[u8]) -> TcpFlowBuilder {
        self.push(false, TcpFlags::PSH | TcpFlags::ACK, payload);
        self
    }

    pub fn close(mut self) -> TcpFlowBuilder {
        self.push(true, TcpFlags::FIN | TcpFlags::ACK, b"");
        self.push(false, TcpFlags::FIN | TcpFlags::ACK, b"");
        self
    }

    pub fn finish(self) -> Vec<PacketRecord> {
        self.packets
    }
}

/// One bare SYN probe.
pub fn syn_probe(
    sensor: &str,
    src: Ipv4Addr,
    dst: Ipv4Addr,
    src_port: u16,
    dst_port: u16,
    seq: u32,
    ts: Micros,
) -> PacketRecord {
    PacketRecord {
        ts,
        sensor_id: sensor.to_string(),
        src_ip: src,
        dst_ip: dst,
        ip_proto: IpProto::Tcp,
        src_port,
        dst_port,
        tcp_flags: TcpFlags::SYN,
        tcp_seq: Some(seq),
        payload: Vec::new(),
        capture_len: 0,
        orig_len: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_is_deterministic() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(SplitMix64::new(1).next_u64(), SplitMix64::new(2).next_u64());
    }

    #[test]
    fn flow_builder_sequences_are_coherent() {
        let packets = TcpFlowBuilder::new(
            "s1",
            Ipv4Addr::new(198, 51, 100, 1),
            Ipv4Addr::new(192, 0, 2, 1),
            40000,
            80,
            0,
        )
        .handshake()
        .client_data(b"GET / HTTP/1.1\r\n\r\n")
        .server_data(b"HTTP/1.1 200 OK\r\n\r\n")
        .close()
        .finish();
        assert_eq!(packets.len(), 7);
        // data starts one past the SYN
        assert_eq!(packets[3].tcp_seq, Some(1001));
        // fin follows the data bytes
        assert_eq!(packets[5].tcp_seq, Some(1001 + 18));
    }
}
