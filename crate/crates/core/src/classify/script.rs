//! Scheduled-script attacks: every script record is an event; streams
//! are additionally scanned for the action vocabulary to recover
//! scripts whose log entries are missing, plus the miner-injection and
//! DNS-changer checks.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::sync::LazyLock;

use regex::Regex;

use crate::logparse::{
    extract_fetch_urls, extract_script_actions, LogCategory, LogEvent, ScriptRecord, ScriptSource,
    ACTION_VOCABULARY,
};
use crate::model::{FlowId, IpProto, MICROS_PER_DAY};

use super::{AttackCategory, AttackEvent, Evidence, FlowData};

/// Synthetic stand-in for the browser-miner payload marker; generated
/// corpora and tests never carry real miner code.
pub const MINER_MARKER: &str = "COINHIVE-SIM-MARKER";

const PROXY_ACTION: &str = "/ip proxy";
const NAT_ACTION: &str = "/ip firewall nat";
const DNS_ACTION: &str = "/ip dns";

static RE_DNS_SERVERS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"servers=(\d+\.\d+\.\d+\.\d+)").unwrap());

/// Scan reassembled streams for action-vocabulary keywords and build
/// NETWORK-sourced script records for flows that carried script bodies.
pub fn recover_network_scripts(flows: &[FlowData]) -> Vec<ScriptRecord> {
    let mut out = Vec::new();
    for fd in flows {
        if fd.flow.ip_proto != IpProto::Tcp {
            continue;
        }
        let streams = match &fd.streams {
            Some(s) => s,
            None => continue,
        };
        let mut found = None;
        for stream in [&streams.0, &streams.1] {
            for (base, run) in stream.contiguous_runs() {
                let text = String::from_utf8_lossy(run);
                let first_hit = ACTION_VOCABULARY
                    .iter()
                    .filter_map(|key| text.find(*key))
                    .min();
                if let Some(pos) = first_hit {
                    let body = text[pos..].to_string();
                    found = Some((body, stream.direction, base + pos));
                    break;
                }
            }
            if found.is_some() {
                break;
            }
        }
        if let Some((body, _dir, _off)) = found {
            out.push(ScriptRecord {
                ts: fd.flow.first_ts,
                sensor_id: fd.flow.sensor_id.clone(),
                source: ScriptSource::Network,
                actions: extract_script_actions(&body),
                fetch_urls: extract_fetch_urls(&body),
                body,
                log_line: None,
                flow_id: Some(fd.flow.flow_id),
            });
        }
    }
    out
}

fn script_src_ip(script: &ScriptRecord, flows: &[FlowData]) -> Ipv4Addr {
    match script.flow_id {
        Some(id) => flows
            .iter()
            .find(|f| f.flow.flow_id == id)
            .map(|f| f.flow.initiator_ip)
            .unwrap_or(Ipv4Addr::UNSPECIFIED),
        None => Ipv4Addr::UNSPECIFIED,
    }
}

fn script_evidence(script: &ScriptRecord) -> Evidence {
    match (script.log_line, script.flow_id) {
        (Some(line), _) => Evidence::LogLine(line),
        (None, Some(flow)) => Evidence::Flow(flow.to_string()),
        (None, None) => Evidence::LogLine(0),
    }
}

fn is_miner_script(script: &ScriptRecord) -> bool {
    script.actions.contains_key(PROXY_ACTION)
        && script.actions.contains_key(NAT_ACTION)
        && script.body.contains(MINER_MARKER)
}

/// Classify script activity. `scripts` holds the log-sourced records;
/// network recovery, deduplication against the log view, the miner
/// check (script- and injected-stream-based) and the DNS-changer check
/// (script- and log-based) all happen here.
pub fn detect_script_attacks(
    scripts: &[ScriptRecord],
    flows: &[FlowData],
    events: &[LogEvent],
) -> Vec<AttackEvent> {
    let mut out = Vec::new();

    // network-recovered scripts missing from the logs
    let recovered: Vec<ScriptRecord> = recover_network_scripts(flows)
        .into_iter()
        .filter(|net| {
            !scripts.iter().any(|log| {
                log.sensor_id == net.sensor_id
                    && !log.body.is_empty()
                    && (net.ts - log.ts).abs() <= MICROS_PER_DAY
                    && net.body.contains(log.body.as_str())
            })
        })
        .collect();
    let recovered_flows: BTreeSet<FlowId> = recovered.iter().filter_map(|s| s.flow_id).collect();

    let mut all: Vec<&ScriptRecord> = scripts.iter().collect();
    all.extend(recovered.iter());

    for script in &all {
        let src = script_src_ip(script, flows);
        let mut ev = AttackEvent::new(AttackCategory::ScriptScheduled, &script.sensor_id, src);
        ev.ts_start = script.ts;
        ev.ts_end = script.ts;
        ev.evidence.push(script_evidence(script));
        ev.attributes.insert(
            "source".to_string(),
            match script.source {
                ScriptSource::Log => "log",
                ScriptSource::Network => "network",
            }
            .to_string(),
        );
        ev.attributes.insert(
            "action_count".to_string(),
            script.actions.values().sum::<u32>().to_string(),
        );
        if !script.fetch_urls.is_empty() {
            ev.attributes
                .insert("fetch_urls".to_string(), script.fetch_urls.join(";"));
        }
        out.push(ev);

        if is_miner_script(script) {
            let mut miner =
                AttackEvent::new(AttackCategory::MinerInjection, &script.sensor_id, src);
            miner.ts_start = script.ts;
            miner.ts_end = script.ts;
            miner.evidence.push(script_evidence(script));
            miner
                .attributes
                .insert("marker".to_string(), MINER_MARKER.to_string());
            miner
                .attributes
                .insert("vector".to_string(), "script".to_string());
            out.push(miner);
        }
        if script.actions.contains_key(DNS_ACTION) {
            let mut dns = AttackEvent::new(AttackCategory::DnsChanger, &script.sensor_id, src);
            dns.ts_start = script.ts;
            dns.ts_end = script.ts;
            dns.evidence.push(script_evidence(script));
            if let Some(caps) = RE_DNS_SERVERS.captures(&script.body) {
                dns.attributes
                    .insert("resolver".to_string(), caps[1].to_string());
            }
            out.push(dns);
        }
    }

    // injected HTML streams carrying the miner marker without a script
    for fd in flows {
        if recovered_flows.contains(&fd.flow.flow_id) {
            continue;
        }
        let streams = match &fd.streams {
            Some(s) => s,
            None => continue,
        };
        let mut hit = None;
        for stream in [&streams.0, &streams.1] {
            for (base, run) in stream.contiguous_runs() {
                if let Some(pos) = String::from_utf8_lossy(run).find(MINER_MARKER) {
                    hit = Some((stream.direction, base + pos));
                    break;
                }
            }
            if hit.is_some() {
                break;
            }
        }
        if let Some((dir, off)) = hit {
            let mut miner = AttackEvent::new(
                AttackCategory::MinerInjection,
                &fd.flow.sensor_id,
                fd.flow.initiator_ip,
            );
            miner.ts_start = fd.flow.first_ts;
            miner.ts_end = fd.flow.last_ts;
            miner.evidence.push(Evidence::stream(
                fd.flow.flow_id,
                dir,
                off,
                off + MINER_MARKER.len(),
            ));
            miner
                .attributes
                .insert("marker".to_string(), MINER_MARKER.to_string());
            miner
                .attributes
                .insert("vector".to_string(), "html_injection".to_string());
            out.push(miner);
        }
    }

    // DNS changes visible only as log events
    for ev in events {
        if ev.category != LogCategory::DnsChanged {
            continue;
        }
        let mut dns = AttackEvent::new(
            AttackCategory::DnsChanger,
            &ev.sensor_id,
            ev.src_ip.unwrap_or(Ipv4Addr::UNSPECIFIED),
        );
        dns.ts_start = ev.ts;
        dns.ts_end = ev.ts;
        dns.evidence.push(Evidence::LogLine(ev.line_no));
        if let Some(actor) = &ev.actor {
            dns.attributes.insert("account".to_string(), actor.clone());
        }
        out.push(dns);
    }
    out
}
