//! Attack classification: applies signatures and built-in detectors to
//! flows, streams and log events, emitting ordered `AttackEvent`s.

mod bruteforce;
mod logins;
mod logsig;
mod mirai;
mod network;
mod script;
mod tunnel;

pub use bruteforce::{detect_bruteforce, BruteForceParams, BruteForceReport};
pub use logins::detect_logins;
pub use logsig::classify_log_signatures;
pub use mirai::{detect_mirai, is_mirai_probe};
pub use network::classify_network;
pub use script::{detect_script_attacks, recover_network_scripts, MINER_MARKER};
pub use tunnel::{
    detect_tunnels, encode_start_control_reply, encode_start_control_request, PPTP_MAGIC_COOKIE,
    PPTP_PORT,
};

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::logparse::{scripts_from_events, LogEvent};
use crate::model::{
    assemble_bundles, reassemble_stream, stable_hash64, Direction, FlowId, FlowRecord, Micros,
    PacketRecord, StreamPayload,
};
use crate::sigdb::SignatureDb;

/// Closed set of attack classes an event can carry.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackCategory {
    CveExploit,
    LoginSuccess,
    BruteForce,
    MiraiScan,
    TunnelEstablished,
    ScriptScheduled,
    MinerInjection,
    DnsChanger,
    OtherSignature,
}

impl AttackCategory {
    pub const ALL: [AttackCategory; 9] = [
        AttackCategory::CveExploit,
        AttackCategory::LoginSuccess,
        AttackCategory::BruteForce,
        AttackCategory::MiraiScan,
        AttackCategory::TunnelEstablished,
        AttackCategory::ScriptScheduled,
        AttackCategory::MinerInjection,
        AttackCategory::DnsChanger,
        AttackCategory::OtherSignature,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AttackCategory::CveExploit => "CVE_EXPLOIT",
            AttackCategory::LoginSuccess => "LOGIN_SUCCESS",
            AttackCategory::BruteForce => "BRUTE_FORCE",
            AttackCategory::MiraiScan => "MIRAI_SCAN",
            AttackCategory::TunnelEstablished => "TUNNEL_ESTABLISHED",
            AttackCategory::ScriptScheduled => "SCRIPT_SCHEDULED",
            AttackCategory::MinerInjection => "MINER_INJECTION",
            AttackCategory::DnsChanger => "DNS_CHANGER",
            AttackCategory::OtherSignature => "OTHER_SIGNATURE",
        }
    }

    pub fn parse(s: &str) -> Option<AttackCategory> {
        AttackCategory::ALL.iter().copied().find(|c| c.name() == s)
    }
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Service a targeted port or log line maps to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ServiceKind {
    Api,
    Ftp,
    Ssh,
    Telnet,
    Web,
    Winbox,
    Pptp,
    Sstp,
    Smb,
    BandwidthTest,
}

impl ServiceKind {
    pub fn name(&self) -> &'static str {
        match self {
            ServiceKind::Api => "API",
            ServiceKind::Ftp => "FTP",
            ServiceKind::Ssh => "SSH",
            ServiceKind::Telnet => "TELNET",
            ServiceKind::Web => "WEB",
            ServiceKind::Winbox => "WINBOX",
            ServiceKind::Pptp => "PPTP",
            ServiceKind::Sstp => "SSTP",
            ServiceKind::Smb => "SMB",
            ServiceKind::BandwidthTest => "BANDWIDTH_TEST",
        }
    }

    /// Service running on a honeypot port, if it is one of the
    /// RouterOS services the sensors expose.
    pub fn from_port(port: u16) -> Option<ServiceKind> {
        match port {
            8728 | 8729 => Some(ServiceKind::Api),
            21 => Some(ServiceKind::Ftp),
            22 => Some(ServiceKind::Ssh),
            23 | 2323 => Some(ServiceKind::Telnet),
            80 | 8080 | 443 => Some(ServiceKind::Web),
            8291 => Some(ServiceKind::Winbox),
            1723 => Some(ServiceKind::Pptp),
            139 | 445 => Some(ServiceKind::Smb),
            2000 => Some(ServiceKind::BandwidthTest),
            _ => None,
        }
    }

    pub fn from_log_name(name: &str) -> Option<ServiceKind> {
        match name.to_ascii_lowercase().as_str() {
            "api" | "api-ssl" => Some(ServiceKind::Api),
            "ftp" => Some(ServiceKind::Ftp),
            "ssh" => Some(ServiceKind::Ssh),
            "telnet" => Some(ServiceKind::Telnet),
            "web" | "www" | "http" => Some(ServiceKind::Web),
            "winbox" => Some(ServiceKind::Winbox),
            "pptp" => Some(ServiceKind::Pptp),
            "sstp" => Some(ServiceKind::Sstp),
            _ => None,
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reference from an event back to the data that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    Flow(String),
    LogLine(u64),
    Stream {
        flow: String,
        dir: String,
        start: usize,
        end: usize,
    },
    Packet(u64),
}

impl Evidence {
    pub fn flow(id: FlowId) -> Evidence {
        Evidence::Flow(id.to_string())
    }

    pub fn stream(id: FlowId, dir: Direction, start: usize, end: usize) -> Evidence {
        Evidence::Stream {
            flow: id.to_string(),
            dir: dir.to_string(),
            start,
            end,
        }
    }
}

/// One classified incident.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub event_id: String,
    pub category: AttackCategory,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cve_id: Option<String>,
    pub sensor_id: String,
    /// 0.0.0.0 when the source cannot be attributed (log lines that
    /// carry no address).
    pub src_ip: Ipv4Addr,
    pub ts_start: Micros,
    pub ts_end: Micros,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tunnel_endpoint: Option<Ipv4Addr>,
    pub evidence: Vec<Evidence>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub attributes: BTreeMap<String, String>,
}

impl AttackEvent {
    pub fn new(category: AttackCategory, sensor_id: &str, src_ip: Ipv4Addr) -> AttackEvent {
        AttackEvent {
            event_id: String::new(),
            category,
            signature_id: None,
            cve_id: None,
            sensor_id: sensor_id.to_string(),
            src_ip,
            ts_start: 0,
            ts_end: 0,
            service: None,
            tunnel_endpoint: None,
            evidence: Vec::new(),
            attributes: BTreeMap::new(),
        }
    }

    fn canonical_key(&self) -> Vec<u8> {
        // everything except event_id, in a fixed order
        let mut buf = Vec::new();
        buf.extend_from_slice(self.category.name().as_bytes());
        buf.push(0);
        if let Some(s) = &self.signature_id {
            buf.extend_from_slice(s.as_bytes());
        }
        buf.push(0);
        buf.extend_from_slice(self.sensor_id.as_bytes());
        buf.push(0);
        buf.extend_from_slice(&u32::from(self.src_ip).to_be_bytes());
        buf.extend_from_slice(&self.ts_start.to_be_bytes());
        buf.extend_from_slice(&self.ts_end.to_be_bytes());
        if let Some(svc) = &self.service {
            buf.extend_from_slice(svc.name().as_bytes());
        }
        buf.push(0);
        if let Some(ep) = &self.tunnel_endpoint {
            buf.extend_from_slice(&u32::from(*ep).to_be_bytes());
        }
        for ev in &self.evidence {
            buf.extend_from_slice(format!("{ev:?}").as_bytes());
            buf.push(0);
        }
        for (k, v) in &self.attributes {
            buf.extend_from_slice(k.as_bytes());
            buf.push(b'=');
            buf.extend_from_slice(v.as_bytes());
            buf.push(0);
        }
        buf
    }
}

/// One flow with its packets and, for TCP, reassembled streams.
#[derive(Debug, Clone)]
pub struct FlowData {
    pub flow: FlowRecord,
    pub packets: Vec<PacketRecord>,
    pub streams: Option<(StreamPayload, StreamPayload)>,
}

fn bundle_to_flow_data(bundle: crate::model::FlowBundle) -> FlowData {
    let streams = reassemble_stream(&bundle).ok();
    FlowData {
        flow: bundle.flow,
        packets: bundle.packets,
        streams,
    }
}

/// Assemble packets into flows and reassemble TCP payload streams.
pub fn prepare_flows(packets: Vec<PacketRecord>, idle_timeout_secs: u64) -> Vec<FlowData> {
    prepare_flows_parallel(packets, idle_timeout_secs, 1)
}

/// Parallel variant; the result is identical for every worker count.
pub fn prepare_flows_parallel(
    packets: Vec<PacketRecord>,
    idle_timeout_secs: u64,
    workers: usize,
) -> Vec<FlowData> {
    let mut bundles = assemble_bundles(packets, idle_timeout_secs);
    let workers = workers.max(1);
    if workers == 1 || bundles.len() < 256 {
        return bundles.into_iter().map(bundle_to_flow_data).collect();
    }
    let chunk_size = bundles.len().div_ceil(workers);
    let mut chunks = Vec::new();
    while !bundles.is_empty() {
        let rest = bundles.split_off(bundles.len().min(chunk_size));
        chunks.push(std::mem::replace(&mut bundles, rest));
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| {
                s.spawn(move || {
                    chunk
                        .into_iter()
                        .map(bundle_to_flow_data)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut out = Vec::new();
        for h in handles {
            out.extend(h.join().expect("reassembly worker panicked"));
        }
        out
    })
}

/// Tunable detector thresholds.
#[derive(Debug, Clone, Default)]
pub struct ClassifyParams {
    pub bruteforce: BruteForceParams,
}

/// Full classifier output: ordered events plus the brute-force side
/// report (attempt counts and the SSH/Telnet source overlap).
#[derive(Debug, Clone)]
pub struct ClassifyOutput {
    pub events: Vec<AttackEvent>,
    pub bruteforce: BruteForceReport,
}

/// Run every signature and built-in detector over prepared flows and
/// normalized log events. Output ordering and event ids are stable
/// across runs and parallelism degrees.
pub fn classify_all(
    flows: &[FlowData],
    log_events: &[LogEvent],
    db: &SignatureDb,
    params: &ClassifyParams,
) -> ClassifyOutput {
    classify_all_parallel(flows, log_events, db, params, 1)
}

/// Parallel variant: network signature matching runs chunked across
/// workers; the merge is ordered, so output is byte-identical for any
/// worker count.
pub fn classify_all_parallel(
    flows: &[FlowData],
    log_events: &[LogEvent],
    db: &SignatureDb,
    params: &ClassifyParams,
    workers: usize,
) -> ClassifyOutput {
    let workers = workers.max(1);
    let mut events = if workers == 1 || flows.len() < 256 {
        classify_network(flows, db)
    } else {
        let chunk_size = flows.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = flows
                .chunks(chunk_size)
                .map(|chunk| s.spawn(move || classify_network(chunk, db)))
                .collect();
            let mut out = Vec::new();
            for h in handles {
                out.extend(h.join().expect("classify worker panicked"));
            }
            out
        })
    };
    events.extend(classify_log_signatures(log_events, db));
    events.extend(detect_logins(log_events));
    let (bf_events, bruteforce) = detect_bruteforce(flows, log_events, &params.bruteforce);
    events.extend(bf_events);
    events.extend(mirai::detect_mirai_flows(flows));
    events.extend(detect_tunnels(flows, log_events));
    let scripts = scripts_from_events(log_events);
    events.extend(detect_script_attacks(&scripts, flows, log_events));
    finalize_events(&mut events);
    ClassifyOutput { events, bruteforce }
}

/// Drop exact duplicates, assign content-derived ids and order events
/// by (ts_start, event_id).
pub fn finalize_events(events: &mut Vec<AttackEvent>) {
    events.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
    events.dedup_by(|a, b| a.canonical_key() == b.canonical_key());
    for ev in events.iter_mut() {
        ev.event_id = format!("evt-{:016x}", stable_hash64(&[&ev.canonical_key()]));
    }
    events.sort_by(|a, b| (a.ts_start, &a.event_id).cmp(&(b.ts_start, &b.event_id)));
}
