//! Ground-truth manifest: the expected classifier output for a
//! generated corpus, written atomically after the corpus itself.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::path::Path;

use crate::classify::AttackCategory;
use crate::model::Micros;

use super::SynthError;

pub const MANIFEST_SCHEMA: &str = "tiktriage-manifest/1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedEvent {
    pub category: AttackCategory,
    pub src_ip: Ipv4Addr,
    pub sensor_id: String,
    pub ts_start: Micros,
    pub ts_end: Micros,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedCampaign {
    pub src_ip: Ipv4Addr,
    pub trigger: String,
    pub flow_count: u64,
    pub ports: BTreeSet<u16>,
    pub sensors: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    pub expected_flows: u64,
    /// Digest over intended (sensor, canonical tuple, state) of every
    /// flow the corpus should assemble into.
    pub expected_flow_digest: u64,
    /// Log lines that intentionally fall outside the category
    /// taxonomy (tunnel-established lines and injected noise).
    pub expected_other_log_lines: u64,
    pub events: Vec<ExpectedEvent>,
    pub campaigns: Vec<ExpectedCampaign>,
}

impl Manifest {
    /// Multiset of (category, src_ip, sensor) triples, sorted.
    pub fn event_triples(&self) -> Vec<(AttackCategory, Ipv4Addr, String)> {
        let mut v: Vec<_> = self
            .events
            .iter()
            .map(|e| (e.category, e.src_ip, e.sensor_id.clone()))
            .collect();
        v.sort();
        v
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("schema: {MANIFEST_SCHEMA}\n"));
        out.push_str(&format!("seed: {}\n", self.seed));
        out.push_str(&format!("expected_flows: {}\n", self.expected_flows));
        out.push_str(&format!(
            "expected_flow_digest: {:016x}\n",
            self.expected_flow_digest
        ));
        out.push_str(&format!(
            "expected_other_log_lines: {}\n",
            self.expected_other_log_lines
        ));
        let mut events = self.events.clone();
        events.sort_by(|a, b| {
            (a.ts_start, a.category, &a.sensor_id, a.src_ip).cmp(&(
                b.ts_start,
                b.category,
                &b.sensor_id,
                b.src_ip,
            ))
        });
        for ev in &events {
            out.push_str(&format!(
                "event: category={} src_ip={} sensor={} ts_start={} ts_end={}\n",
                ev.category.name(),
                ev.src_ip,
                ev.sensor_id,
                ev.ts_start,
                ev.ts_end
            ));
        }
        for c in &self.campaigns {
            out.push_str(&format!(
                "campaign: src_ip={} trigger={} flows={} ports={} sensors={}\n",
                c.src_ip,
                c.trigger,
                c.flow_count,
                c.ports
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join("+"),
                c.sensors
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join("+"),
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Manifest, SynthError> {
        let bad = |line: usize, msg: String| SynthError::Manifest { line, msg };
        let mut manifest = Manifest::default();
        let mut saw_schema = false;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(": ")
                .ok_or_else(|| bad(lineno, format!("expected `key: value`, got `{line}`")))?;
            match key {
                "schema" => {
                    if value != MANIFEST_SCHEMA {
                        return Err(bad(lineno, format!("unsupported schema `{value}`")));
                    }
                    saw_schema = true;
                }
                "seed" => {
                    manifest.seed = value
                        .parse()
                        .map_err(|_| bad(lineno, format!("bad seed `{value}`")))?
                }
                "expected_flows" => {
                    manifest.expected_flows = value
                        .parse()
                        .map_err(|_| bad(lineno, format!("bad flow count `{value}`")))?
                }
                "expected_flow_digest" => {
                    manifest.expected_flow_digest = u64::from_str_radix(value, 16)
                        .map_err(|_| bad(lineno, format!("bad digest `{value}`")))?
                }
                "expected_other_log_lines" => {
                    manifest.expected_other_log_lines = value
                        .parse()
                        .map_err(|_| bad(lineno, format!("bad count `{value}`")))?
                }
                "event" => manifest.events.push(parse_event(value, lineno)?),
                "campaign" => manifest.campaigns.push(parse_campaign(value, lineno)?),
                other => return Err(bad(lineno, format!("unknown key `{other}`"))),
            }
        }
        if !saw_schema {
            return Err(bad(0, "missing schema line".to_string()));
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Manifest, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Manifest::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        std::fs::write(path, self.to_text()).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

fn kv_fields(value: &str) -> impl Iterator<Item = (&str, &str)> {
    value
        .split_whitespace()
        .filter_map(|tok| tok.split_once('='))
}

fn parse_event(value: &str, lineno: usize) -> Result<ExpectedEvent, SynthError> {
    let bad = |msg: String| SynthError::Manifest { line: lineno, msg };
    let mut category = None;
    let mut src_ip = None;
    let mut sensor = None;
    let mut ts_start = 0;
    let mut ts_end = 0;
    for (k, v) in kv_fields(value) {
        match k {
            "category" => {
                category = Some(
                    AttackCategory::parse(v)
                        .ok_or_else(|| bad(format!("unknown category `{v}`")))?,
                )
            }
            "src_ip" => {
                src_ip = Some(v.parse().map_err(|_| bad(format!("bad src_ip `{v}`")))?)
            }
            "sensor" => sensor = Some(v.to_string()),
            "ts_start" => ts_start = v.parse().map_err(|_| bad(format!("bad ts `{v}`")))?,
            "ts_end" => ts_end = v.parse().map_err(|_| bad(format!("bad ts `{v}`")))?,
            other => return Err(bad(format!("unknown event field `{other}`"))),
        }
    }
    Ok(ExpectedEvent {
        category: category.ok_or_else(|| bad("event missing category".into()))?,
        src_ip: src_ip.ok_or_else(|| bad("event missing src_ip".into()))?,
        sensor_id: sensor.ok_or_else(|| bad("event missing sensor".into()))?,
        ts_start,
        ts_end,
    })
}

fn parse_campaign(value: &str, lineno: usize) -> Result<ExpectedCampaign, SynthError> {
    let bad = |msg: String| SynthError::Manifest { line: lineno, msg };
    let mut src_ip = None;
    let mut trigger = None;
    let mut flows = 0;
    let mut ports = BTreeSet::new();
    let mut sensors = BTreeSet::new();
    for (k, v) in kv_fields(value) {
        match k {
            "src_ip" => {
                src_ip = Some(v.parse().map_err(|_| bad(format!("bad src_ip `{v}`")))?)
            }
            "trigger" => trigger = Some(v.to_string()),
            "flows" => flows = v.parse().map_err(|_| bad(format!("bad flows `{v}`")))?,
            "ports" => {
                for p in v.split('+').filter(|s| !s.is_empty()) {
                    ports.insert(p.parse().map_err(|_| bad(format!("bad port `{p}`")))?);
                }
            }
            "sensors" => {
                for s in v.split('+').filter(|s| !s.is_empty()) {
                    sensors.insert(s.to_string());
                }
            }
            other => return Err(bad(format!("unknown campaign field `{other}`"))),
        }
    }
    Ok(ExpectedCampaign {
        src_ip: src_ip.ok_or_else(|| bad("campaign missing src_ip".into()))?,
        trigger: trigger.ok_or_else(|| bad("campaign missing trigger".into()))?,
        flow_count: flows,
        ports,
        sensors,
    })
}
