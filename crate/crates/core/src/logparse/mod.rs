//! RouterOS-style event-log parsing: normalizes log lines into
//! categorized events and extracts scheduled-script bodies, script
//! actions and fetch URLs.
//!
//! Canonical line grammar (the generator emits exactly this):
//! `YYYY-MM-DD HH:MM:SS <topics,comma-separated> <message>`.
//! Unrecognized lines become `Other` with the raw text preserved.

mod script;

pub use script::{
    extract_fetch_urls, extract_script_actions, scripts_from_events, ScriptRecord, ScriptSource,
    ACTION_VOCABULARY,
};

use std::net::Ipv4Addr;
use std::sync::LazyLock;

use regex::Regex;

use crate::model::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LogCategory {
    ScriptScheduled,
    PptpSettings,
    L2tpSettings,
    SstpSettings,
    DnsChanged,
    DhcpChanged,
    PppProfile,
    LoginSuccess,
    LoginFailure,
    UserChange,
    Fetch,
    Other,
}

impl LogCategory {
    pub fn name(&self) -> &'static str {
        match self {
            LogCategory::ScriptScheduled => "SCRIPT_SCHEDULED",
            LogCategory::PptpSettings => "PPTP_SETTINGS",
            LogCategory::L2tpSettings => "L2TP_SETTINGS",
            LogCategory::SstpSettings => "SSTP_SETTINGS",
            LogCategory::DnsChanged => "DNS_CHANGED",
            LogCategory::DhcpChanged => "DHCP_CHANGED",
            LogCategory::PppProfile => "PPP_PROFILE",
            LogCategory::LoginSuccess => "LOGIN_SUCCESS",
            LogCategory::LoginFailure => "LOGIN_FAILURE",
            LogCategory::UserChange => "USER_CHANGE",
            LogCategory::Fetch => "FETCH",
            LogCategory::Other => "OTHER",
        }
    }
}

/// One normalized log line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEvent {
    pub ts: Micros,
    pub sensor_id: String,
    pub topics: Vec<String>,
    pub message: String,
    pub category: LogCategory,
    pub actor: Option<String>,
    pub service: Option<String>,
    pub src_ip: Option<Ipv4Addr>,
    /// 1-based line number within the source file, 0 when unknown.
    pub line_no: u64,
}

struct TaxonomyRule {
    re: &'static LazyLock<Regex>,
    category: LogCategory,
}

macro_rules! taxonomy_re {
    ($name:ident, $re:expr) => {
        static $name: LazyLock<Regex> = LazyLock::new(|| Regex::new($re).unwrap());
    };
}

// Ordered first-match-wins table, most specific first. Login patterns
// lead because they also carry service and source address; the
// settings-change family mirrors the RouterOS wording with the actor
// suffix optional.
taxonomy_re!(
    RE_LOGIN_FAILURE,
    r"^login failure for user (\S+) from (\d+\.\d+\.\d+\.\d+) via (\w+)$"
);
taxonomy_re!(
    RE_LOGIN_SUCCESS,
    r"^user (\S+) logged in from (\d+\.\d+\.\d+\.\d+) via (\w+)$"
);
taxonomy_re!(
    RE_SCRIPT_SCHEDULED,
    r"^new script scheduled(?: by (\S+))?(?: \(script: (.*)\))?$"
);
taxonomy_re!(RE_PPTP, r"^PPTP server settings changed(?: by (\S+))?$");
taxonomy_re!(RE_L2TP, r"^L2TP server settings changed(?: by (\S+))?$");
taxonomy_re!(RE_SSTP, r"^SSTP server settings changed(?: by (\S+))?$");
taxonomy_re!(RE_DNS, r"^DNS changed(?: by (\S+))?$");
taxonomy_re!(RE_DHCP, r"^DHCP client changed(?: by (\S+))?$");
taxonomy_re!(RE_PPP, r"^PPP profile <[^>]*> changed(?: by (\S+))?$");
taxonomy_re!(
    RE_USER,
    r"^user (\S+) (?:added|removed|set|changed)(?: by (\S+))?$"
);
taxonomy_re!(RE_FETCH, r"^fetch: .*$");

static TAXONOMY: &[TaxonomyRule] = &[
    TaxonomyRule { re: &RE_LOGIN_FAILURE, category: LogCategory::LoginFailure },
    TaxonomyRule { re: &RE_LOGIN_SUCCESS, category: LogCategory::LoginSuccess },
    TaxonomyRule { re: &RE_SCRIPT_SCHEDULED, category: LogCategory::ScriptScheduled },
    TaxonomyRule { re: &RE_PPTP, category: LogCategory::PptpSettings },
    TaxonomyRule { re: &RE_L2TP, category: LogCategory::L2tpSettings },
    TaxonomyRule { re: &RE_SSTP, category: LogCategory::SstpSettings },
    TaxonomyRule { re: &RE_DNS, category: LogCategory::DnsChanged },
    TaxonomyRule { re: &RE_DHCP, category: LogCategory::DhcpChanged },
    TaxonomyRule { re: &RE_PPP, category: LogCategory::PppProfile },
    TaxonomyRule { re: &RE_USER, category: LogCategory::UserChange },
    TaxonomyRule { re: &RE_FETCH, category: LogCategory::Fetch },
];

/// Days from 1970-01-01 for a civil date (proleptic Gregorian).
pub fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = ((m as i64) + 9) % 12;
    let doy = (153 * mp + 2) / 5 + (d as i64) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Inverse of `days_from_civil`.
pub fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn parse_timestamp(date: &str, time: &str) -> Option<Micros> {
    let db = date.as_bytes();
    if db.len() != 10 || db[4] != b'-' || db[7] != b'-' {
        return None;
    }
    let y: i64 = date[0..4].parse().ok()?;
    let m: u32 = date[5..7].parse().ok()?;
    let d: u32 = date[8..10].parse().ok()?;
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return None;
    }
    let tb = time.as_bytes();
    if tb.len() != 8 || tb[2] != b':' || tb[5] != b':' {
        return None;
    }
    let hh: i64 = time[0..2].parse().ok()?;
    let mm: i64 = time[3..5].parse().ok()?;
    let ss: i64 = time[6..8].parse().ok()?;
    if hh > 23 || mm > 59 || ss > 60 {
        return None;
    }
    let days = days_from_civil(y, m, d);
    Some((days * 86_400 + hh * 3600 + mm * 60 + ss) * 1_000_000)
}

fn classify_message(message: &str) -> (LogCategory, Option<String>, Option<String>, Option<Ipv4Addr>) {
    for rule in TAXONOMY {
        if let Some(caps) = rule.re.captures(message) {
            let (actor, service, src_ip) = match rule.category {
                LogCategory::LoginSuccess | LogCategory::LoginFailure => (
                    caps.get(1).map(|m| m.as_str().to_string()),
                    caps.get(3).map(|m| m.as_str().to_string()),
                    caps.get(2).and_then(|m| m.as_str().parse().ok()),
                ),
                LogCategory::UserChange => {
                    (caps.get(2).map(|m| m.as_str().to_string()), None, None)
                }
                _ => (caps.get(1).map(|m| m.as_str().to_string()), None, None),
            };
            return (rule.category, actor, service, src_ip);
        }
    }
    (LogCategory::Other, None, None, None)
}

/// Parse one log line. Total: never fails; anything unrecognized is
/// preserved as an `Other` event with ts 0.
pub fn parse_log_line(line: &str, sensor_id: &str) -> LogEvent {
    let other = |msg: &str| LogEvent {
        ts: 0,
        sensor_id: sensor_id.to_string(),
        topics: Vec::new(),
        message: msg.to_string(),
        category: LogCategory::Other,
        actor: None,
        service: None,
        src_ip: None,
        line_no: 0,
    };
    let mut parts = line.splitn(4, ' ');
    let (date, time, topics, message) = match (parts.next(), parts.next(), parts.next(), parts.next())
    {
        (Some(d), Some(t), Some(tp), Some(m)) => (d, t, tp, m),
        _ => return other(line),
    };
    let ts = match parse_timestamp(date, time) {
        Some(ts) => ts,
        None => return other(line),
    };
    let topics: Vec<String> = topics.split(',').map(|s| s.to_string()).collect();
    let (category, actor, service, src_ip) = classify_message(message);
    LogEvent {
        ts,
        sensor_id: sensor_id.to_string(),
        topics,
        message: message.to_string(),
        category,
        actor,
        service,
        src_ip,
        line_no: 0,
    }
}

/// Parse a whole log file body, numbering lines from 1.
pub fn parse_log_text(text: &str, sensor_id: &str) -> Vec<LogEvent> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let mut ev = parse_log_line(l, sensor_id);
            ev.line_no = (i + 1) as u64;
            ev
        })
        .collect()
}
