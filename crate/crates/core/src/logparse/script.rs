//! Scheduled-script handling: script records, the closed action
//! vocabulary and fetch-URL extraction.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::model::{FlowId, Micros};

use super::{LogCategory, LogEvent};

/// Closed vocabulary of RouterOS command paths recognized inside script
/// bodies, longest entries matched first. The head of the list mirrors
/// the most common actions seen in scheduled scripts; the tail holds
/// documented extensions needed by the miner and persistence checks.
pub static ACTION_VOCABULARY: &[&str] = &[
    "/ip firewall nat",
    "/system ntp client",
    "/system scheduler",
    "/tool fetch",
    "/tool sniffer",
    "/file remove",
    "/ip socks",
    "/ip firewall",
    "/user set",
    "/user remove",
    "/user add",
    "/ip service",
    "/ip proxy",
    "/ip dns",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScriptSource {
    Log,
    Network,
}

/// One scheduled (or network-recovered) script.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptRecord {
    pub ts: Micros,
    pub sensor_id: String,
    pub source: ScriptSource,
    pub body: String,
    /// Occurrence counts per action key; keys always begin with '/'.
    pub actions: BTreeMap<String, u32>,
    pub fetch_urls: Vec<String>,
    /// Log line the script came from, for evidence.
    pub log_line: Option<u64>,
    /// Flow the script was recovered from, for evidence.
    pub flow_id: Option<FlowId>,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'-' || b == b'_'
}

/// Count action-vocabulary occurrences in a script body. An action key
/// is a `/word( word)*` token sequence from the closed vocabulary;
/// longer entries win over their prefixes and counts are occurrences,
/// not booleans.
pub fn extract_script_actions(body: &str) -> BTreeMap<String, u32> {
    let bytes = body.as_bytes();
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'/' {
            i += 1;
            continue;
        }
        let mut matched = None;
        for key in ACTION_VOCABULARY {
            let kb = key.as_bytes();
            if bytes[i..].starts_with(kb) {
                // the key must end on a word boundary
                let end = i + kb.len();
                if end == bytes.len() || !is_word_byte(bytes[end]) {
                    matched = Some(*key);
                    break;
                }
            }
        }
        match matched {
            Some(key) => {
                *counts.entry(key.to_string()).or_insert(0) += 1;
                i += key.len();
            }
            None => i += 1,
        }
    }
    counts
}

static RE_FETCH_URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"url=(?:"([^"]*)"|(\S+))"#).unwrap());

/// Extract the url= argument of each `/tool fetch` occurrence, quoted
/// or bare, verbatim and in order. Duplicates are kept; deduplication
/// is the reporter's job.
pub fn extract_fetch_urls(body: &str) -> Vec<String> {
    let mut urls = Vec::new();
    let needle = "/tool fetch";
    let mut start = 0;
    while let Some(pos) = body[start..].find(needle) {
        let cmd_start = start + pos + needle.len();
        // the fetch command's arguments run to the next separator
        let rest = &body[cmd_start..];
        let end = rest.find([';', '\n']).unwrap_or(rest.len());
        if let Some(caps) = RE_FETCH_URL.captures(&rest[..end]) {
            let url = caps.get(1).or_else(|| caps.get(2)).unwrap().as_str();
            urls.push(url.to_string());
        }
        start = cmd_start;
    }
    urls
}

/// Build script records from SCRIPT_SCHEDULED log events. The canonical
/// log format carries the body as a `(script: ...)` suffix; events
/// without one yield a record with an empty body.
pub fn scripts_from_events(events: &[LogEvent]) -> Vec<ScriptRecord> {
    static RE_BODY: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"\(script: (.*)\)$").unwrap());
    events
        .iter()
        .filter(|ev| ev.category == LogCategory::ScriptScheduled)
        .map(|ev| {
            let body = RE_BODY
                .captures(&ev.message)
                .map(|c| c.get(1).unwrap().as_str().to_string())
                .unwrap_or_default();
            ScriptRecord {
                ts: ev.ts,
                sensor_id: ev.sensor_id.clone(),
                source: ScriptSource::Log,
                actions: extract_script_actions(&body),
                fetch_urls: extract_fetch_urls(&body),
                body,
                log_line: Some(ev.line_no),
                flow_id: None,
            }
        })
        .collect()
}
