//! TCP stream reassembly with first-seen-wins overlap handling and an
//! explicit gap list so payload matching never crosses missing bytes.

use thiserror::Error;

use super::{Direction, FlowBundle, IpProto, StreamPayload, TcpFlags};

/// Per-direction reassembly budget; bytes past this offset are dropped
/// and the stream is flagged truncated.
pub const MAX_STREAM_BYTES: usize = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("stream reassembly requires a TCP flow")]
    NotTcp,
}

struct DirState {
    base_seq: Option<u32>,
    buf: Vec<u8>,
    covered: Vec<bool>,
    truncated: bool,
}

impl DirState {
    fn new() -> DirState {
        DirState {
            base_seq: None,
            buf: Vec::new(),
            covered: Vec::new(),
            truncated: false,
        }
    }

    fn observe(&mut self, seq: u32, has_syn: bool, payload: &[u8]) {
        let base = *self.base_seq.get_or_insert(if has_syn {
            seq.wrapping_add(1) // SYN consumes one sequence number
        } else {
            seq
        });
        if payload.is_empty() {
            return;
        }
        let rel = seq.wrapping_sub(base) as u64;
        if rel >= MAX_STREAM_BYTES as u64 {
            self.truncated = true;
            return;
        }
        let start = rel as usize;
        let mut end = start + payload.len();
        let mut data = payload;
        if end > MAX_STREAM_BYTES {
            end = MAX_STREAM_BYTES;
            data = &payload[..end - start];
            self.truncated = true;
        }
        if end > self.buf.len() {
            self.buf.resize(end, 0);
            self.covered.resize(end, false);
        }
        for (i, &b) in data.iter().enumerate() {
            let off = start + i;
            if !self.covered[off] {
                self.buf[off] = b;
                self.covered[off] = true;
            }
        }
    }

    fn into_payload(self, flow_id: super::FlowId, direction: Direction) -> StreamPayload {
        // trim trailing uncovered space (counts as "not yet received",
        // not as a gap)
        let end = self
            .covered
            .iter()
            .rposition(|&c| c)
            .map(|p| p + 1)
            .unwrap_or(0);
        let mut gaps = Vec::new();
        let mut i = 0;
        while i < end {
            if !self.covered[i] {
                let start = i;
                while i < end && !self.covered[i] {
                    i += 1;
                }
                gaps.push((start, i - start));
            } else {
                i += 1;
            }
        }
        let mut bytes = self.buf;
        bytes.truncate(end);
        StreamPayload {
            flow_id,
            direction,
            bytes,
            gaps,
            truncated: self.truncated,
        }
    }
}

/// Reassemble both directions of a TCP flow. Byte order follows TCP
/// sequence numbers relative to the first observed sequence number per
/// direction; retransmitted overlaps keep the first-seen bytes.
pub fn reassemble_stream(bundle: &FlowBundle) -> Result<(StreamPayload, StreamPayload), StreamError> {
    if bundle.flow.ip_proto != IpProto::Tcp {
        return Err(StreamError::NotTcp);
    }
    let mut fwd = DirState::new();
    let mut rev = DirState::new();
    for pkt in &bundle.packets {
        let seq = match pkt.tcp_seq {
            Some(s) => s,
            None => continue,
        };
        let is_fwd = pkt.src_ip == bundle.flow.initiator_ip
            && pkt.src_port == bundle.flow.initiator_port;
        let dir = if is_fwd { &mut fwd } else { &mut rev };
        dir.observe(seq, pkt.tcp_flags.contains(TcpFlags::SYN), &pkt.payload);
    }
    Ok((
        fwd.into_payload(bundle.flow.flow_id, Direction::Fwd),
        rev.into_payload(bundle.flow.flow_id, Direction::Rev),
    ))
}
