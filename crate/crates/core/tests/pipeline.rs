//! End-to-end pipeline checks against generator ground truth.

use std::collections::BTreeMap;
use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use tiktriage::analytics::{detect_campaigns, CampaignParams};
use tiktriage::classify::{classify_all, prepare_flows, AttackCategory, ClassifyParams, FlowData};
use tiktriage::logparse::{parse_log_text, LogEvent};
use tiktriage::model::parse_capture_file;
use tiktriage::sigdb::SignatureDb;
use tiktriage::synth::{generate_corpus, Manifest, ScenarioConfig};

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tiktriage-pipe-{}-{}", tag, std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn read_corpus(dir: &Path, sensors: &[String]) -> (Vec<FlowData>, Vec<LogEvent>) {
    let mut packets = Vec::new();
    let mut events = Vec::new();
    for sensor in sensors {
        let pcap_dir = dir.join(sensor).join("pcap");
        if pcap_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&pcap_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            paths.sort();
            for path in paths {
                let bytes = fs::read(&path).unwrap();
                let (pkts, stats) = parse_capture_file(&bytes, sensor).unwrap();
                assert_eq!(stats.malformed, 0);
                packets.extend(pkts);
            }
        }
        let log_dir = dir.join(sensor).join("logs");
        if log_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&log_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            paths.sort();
            for path in paths {
                let text = fs::read_to_string(&path).unwrap();
                events.extend(parse_log_text(&text, sensor));
            }
        }
    }
    (prepare_flows(packets, 60), events)
}

fn triples(
    events: &[tiktriage::classify::AttackEvent],
) -> Vec<(AttackCategory, Ipv4Addr, String)> {
    let mut v: Vec<_> = events
        .iter()
        .map(|e| (e.category, e.src_ip, e.sensor_id.clone()))
        .collect();
    v.sort();
    v
}

fn diff_counts(
    got: &[(AttackCategory, Ipv4Addr, String)],
    want: &[(AttackCategory, Ipv4Addr, String)],
) -> String {
    let count = |v: &[(AttackCategory, Ipv4Addr, String)]| {
        let mut m: BTreeMap<AttackCategory, usize> = BTreeMap::new();
        for (c, _, _) in v {
            *m.entry(*c).or_insert(0) += 1;
        }
        m
    };
    format!("got {:?}\nwant {:?}", count(got), count(want))
}

#[test]
fn classifier_reproduces_manifest_exactly() {
    let dir = tmp_dir("exact");
    let config = ScenarioConfig {
        seed: 4242,
        duration_days: 2,
        sensors: ["au", "br", "cn", "in", "nl", "us"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        mix: ScenarioConfig::full_mix(),
        ..Default::default()
    };
    let manifest = generate_corpus(&config, &dir).unwrap();
    let (flows, log_events) = read_corpus(&dir, &config.sensors);
    assert_eq!(flows.len() as u64, manifest.expected_flows, "flow count");
    let records: Vec<_> = flows.iter().map(|f| f.flow.clone()).collect();
    assert_eq!(
        tiktriage::model::flow_records_digest(&records),
        manifest.expected_flow_digest,
        "assembled tuples and states reproduce the manifest"
    );

    let db = SignatureDb::builtin();
    let output = classify_all(&flows, &log_events, &db, &ClassifyParams::default());
    let got = triples(&output.events);
    let want = manifest.event_triples();
    assert_eq!(got, want, "{}", diff_counts(&got, &want));

    // campaigns reproduce too
    let campaigns = detect_campaigns(&records, &CampaignParams::default());
    assert_eq!(campaigns.len(), manifest.campaigns.len());
    for (got, want) in campaigns.iter().zip(&manifest.campaigns) {
        assert_eq!(got.src_ips.iter().next(), Some(&want.src_ip));
        assert_eq!(got.trigger.name(), want.trigger);
        assert_eq!(got.flow_count, want.flow_count);
        assert_eq!(got.targeted_ports, want.ports);
        assert_eq!(got.sensors_hit, want.sensors);
    }
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn adding_benign_flows_never_changes_existing_events() {
    let dir = tmp_dir("monotone");
    let mut config = ScenarioConfig {
        seed: 99,
        duration_days: 1,
        sensors: vec!["au".to_string(), "br".to_string()],
        mix: ScenarioConfig::full_mix(),
        ..Default::default()
    };
    config.mix.insert("benign_web".to_string(), 0.0);
    generate_corpus(&config, &dir).unwrap();
    let (flows, log_events) = read_corpus(&dir, &config.sensors);
    let db = SignatureDb::builtin();
    let base = classify_all(&flows, &log_events, &db, &ClassifyParams::default());

    // same corpus plus extra benign-only traffic from another seed
    let dir2 = tmp_dir("monotone2");
    let benign_only = ScenarioConfig {
        seed: 1234,
        duration_days: 1,
        sensors: config.sensors.clone(),
        mix: BTreeMap::from([("benign_web".to_string(), 2.0)]),
        ..Default::default()
    };
    generate_corpus(&benign_only, &dir2).unwrap();
    let (benign_flows, benign_logs) = read_corpus(&dir2, &config.sensors);
    assert!(benign_logs.is_empty());
    let mut combined = flows.clone();
    combined.extend(benign_flows);
    let more = classify_all(&combined, &log_events, &db, &ClassifyParams::default());

    assert_eq!(
        triples(&base.events),
        triples(&more.events),
        "benign traffic must not add or remove events"
    );
    let _ = fs::remove_dir_all(&dir);
    let _ = fs::remove_dir_all(&dir2);
}

#[test]
fn classify_output_is_deterministic() {
    let dir = tmp_dir("det");
    let config = ScenarioConfig {
        seed: 7,
        duration_days: 1,
        sensors: vec!["au".to_string(), "br".to_string()],
        mix: ScenarioConfig::full_mix(),
        ..Default::default()
    };
    generate_corpus(&config, &dir).unwrap();
    let (flows, log_events) = read_corpus(&dir, &config.sensors);
    let db = SignatureDb::builtin();
    let a = classify_all(&flows, &log_events, &db, &ClassifyParams::default());
    let b = classify_all(&flows, &log_events, &db, &ClassifyParams::default());
    assert_eq!(a.events, b.events);
    let ids: Vec<_> = a.events.iter().map(|e| &e.event_id).collect();
    let mut dedup = ids.clone();
    dedup.dedup();
    assert_eq!(ids.len(), dedup.len(), "event ids are unique");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn events_carry_only_their_categorys_attributes() {
    let dir = tmp_dir("attrs");
    let config = ScenarioConfig {
        seed: 31,
        duration_days: 1,
        sensors: vec!["au".to_string(), "br".to_string()],
        mix: ScenarioConfig::full_mix(),
        ..Default::default()
    };
    generate_corpus(&config, &dir).unwrap();
    let (flows, log_events) = read_corpus(&dir, &config.sensors);
    let db = SignatureDb::builtin();
    let output = classify_all(&flows, &log_events, &db, &ClassifyParams::default());

    let allowed: BTreeMap<AttackCategory, &[&str]> = BTreeMap::from([
        (
            AttackCategory::CveExploit,
            &["credential_file_requested", "winbox_session_success"][..],
        ),
        (AttackCategory::LoginSuccess, &["account"][..]),
        (AttackCategory::BruteForce, &["attempts"][..]),
        (AttackCategory::MiraiScan, &["probe_count"][..]),
        (AttackCategory::TunnelEstablished, &["result_code"][..]),
        (
            AttackCategory::ScriptScheduled,
            &["source", "action_count", "fetch_urls"][..],
        ),
        (AttackCategory::MinerInjection, &["marker", "vector"][..]),
        (AttackCategory::DnsChanger, &["resolver", "account"][..]),
        (AttackCategory::OtherSignature, &["account"][..]),
    ]);
    for ev in &output.events {
        let schema = allowed[&ev.category];
        for key in ev.attributes.keys() {
            assert!(
                schema.contains(&key.as_str()),
                "{} event carries foreign attribute `{key}`",
                ev.category
            );
        }
        assert!(!ev.evidence.is_empty(), "evidence must be non-empty");
        assert!(ev.ts_start <= ev.ts_end);
        if ev.category == AttackCategory::CveExploit {
            assert!(ev.cve_id.is_some(), "CVE events carry a CVE id");
        }
        if ev.category == AttackCategory::TunnelEstablished {
            assert!(ev.tunnel_endpoint.is_some());
            assert!(matches!(
                ev.service,
                Some(tiktriage::classify::ServiceKind::Pptp)
                    | Some(tiktriage::classify::ServiceKind::Sstp)
            ));
        }
    }
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn manifest_reload_matches_generated() {
    let dir = tmp_dir("reload");
    let config = ScenarioConfig {
        seed: 11,
        duration_days: 1,
        sensors: vec!["au".to_string()],
        mix: ScenarioConfig::full_mix(),
        ..Default::default()
    };
    let manifest = generate_corpus(&config, &dir).unwrap();
    let loaded = Manifest::load(&dir.join("manifest.txt")).unwrap();
    assert_eq!(manifest, loaded);
    let _ = fs::remove_dir_all(&dir);
}
