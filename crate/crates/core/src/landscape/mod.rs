//! Banner-scan aggregation: distinct records and addresses for a
//! device filter, cumulative series, top ports and top countries.
//!
//! Input is line-delimited JSON scan dumps, one record per line, with
//! fields `timestamp`, `ip_str`, `port`, `data`, `product`,
//! `location.country_code3` and `asn`. A record matches the device
//! filter when the lowercased banner or product contains the filter
//! substring; record identity is (ip, port) and nothing is ever
//! flushed.

mod spill;

pub use spill::SpillMap;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::logparse::days_from_civil;

pub const DEFAULT_FILTER: &str = "mikrotik";

#[derive(Debug, Error)]
pub enum LandscapeError {
    #[error("empty store")]
    EmptyStore,
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One banner-scan observation at day granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanRecord {
    /// Days since the Unix epoch.
    pub day: i32,
    pub ip: Ipv4Addr,
    pub port: u16,
    pub banner: String,
    pub product: Option<String>,
    pub country_code3: Option<String>,
    pub asn: Option<u32>,
}

fn pack_country(code: &str) -> [u8; 3] {
    let b = code.as_bytes();
    let mut out = [0u8; 3];
    for i in 0..3.min(b.len()) {
        out[i] = b[i].to_ascii_uppercase();
    }
    out
}

fn unpack_country(c: [u8; 3]) -> Option<String> {
    if c == [0; 3] {
        return None;
    }
    Some(c.iter().filter(|&&b| b != 0).map(|&b| b as char).collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Aggregates {
    distinct_records: u64,
    distinct_ips: u64,
    per_port: BTreeMap<u16, u64>,
    per_country: BTreeMap<String, u64>,
    new_records_per_day: BTreeMap<i32, u64>,
    new_ips_per_day: BTreeMap<i32, u64>,
    country_conflicts: u64,
}

/// Never-flushed landscape accumulator. Identity dedup runs through a
/// spillable index so the structure does not preclude datasets larger
/// than memory; the in-memory budget is effectively unbounded by
/// default.
pub struct LandscapeStore {
    filter: String,
    records: SpillMap,
    ips: SpillMap,
    /// Unparsable lines skipped in lax mode.
    pub skipped_lines: u64,
    day_span: Option<(i32, i32)>,
    cache: RefCell<Option<Aggregates>>,
}

impl LandscapeStore {
    pub fn new(filter_substring: &str) -> LandscapeStore {
        LandscapeStore {
            filter: filter_substring.to_ascii_lowercase(),
            records: SpillMap::in_memory(),
            ips: SpillMap::in_memory(),
            skipped_lines: 0,
            day_span: None,
            cache: RefCell::new(None),
        }
    }

    /// Spill identity sets to sorted runs under `dir` once each holds
    /// more than `budget` in-memory entries.
    pub fn with_spill(filter_substring: &str, dir: &Path, budget: usize) -> LandscapeStore {
        LandscapeStore {
            filter: filter_substring.to_ascii_lowercase(),
            records: SpillMap::spilling(dir.join("records"), budget),
            ips: SpillMap::spilling(dir.join("ips"), budget),
            skipped_lines: 0,
            day_span: None,
            cache: RefCell::new(None),
        }
    }

    pub fn matches_filter(&self, rec: &ScanRecord) -> bool {
        if rec.banner.to_ascii_lowercase().contains(&self.filter) {
            return true;
        }
        rec.product
            .as_deref()
            .map(|p| p.to_ascii_lowercase().contains(&self.filter))
            .unwrap_or(false)
    }

    fn observe_day(&mut self, day: i32) {
        self.day_span = Some(match self.day_span {
            Some((lo, hi)) => (lo.min(day), hi.max(day)),
            None => (day, day),
        });
    }

    /// Ingest one record, keeping it only when it matches the device
    /// filter.
    pub fn ingest(&mut self, rec: &ScanRecord) {
        if !self.matches_filter(rec) {
            return;
        }
        self.cache.replace(None);
        self.observe_day(rec.day);
        let ip = u32::from(rec.ip) as u64;
        let country = rec.country_code3.as_deref().map(pack_country);
        self.records
            .upsert((ip << 16) | rec.port as u64, rec.day, None);
        self.ips.upsert(ip, rec.day, country);
    }

    /// Fast-path ingest for fixtures: the record is assumed to match.
    pub fn ingest_identity(&mut self, ip: u32, port: u16, day: i32, country: Option<&str>) {
        self.cache.replace(None);
        self.observe_day(day);
        self.records
            .upsert(((ip as u64) << 16) | port as u64, day, None);
        self.ips.upsert(ip as u64, day, country.map(pack_country));
    }

    pub fn ingest_json_line(
        &mut self,
        line: &str,
        file: &str,
        lineno: usize,
    ) -> Result<(), LandscapeError> {
        let rec = parse_scan_json(line).map_err(|msg| LandscapeError::Parse {
            file: file.to_string(),
            line: lineno,
            msg,
        })?;
        self.ingest(&rec);
        Ok(())
    }

    /// Ingest scan-dump files. In lax mode unparsable lines are
    /// skipped and counted; in strict mode the first error aborts.
    pub fn ingest_scan_files(&mut self, files: &[PathBuf], lax: bool) -> Result<(), LandscapeError> {
        for path in files {
            let text = std::fs::read_to_string(path).map_err(|source| LandscapeError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let name = path.display().to_string();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match self.ingest_json_line(line, &name, i + 1) {
                    Ok(()) => {}
                    Err(e) => {
                        if lax {
                            self.skipped_lines += 1;
                        } else {
                            return Err(e);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn aggregates(&self) -> Aggregates {
        if let Some(agg) = self.cache.borrow().as_ref() {
            return agg.clone();
        }
        let mut agg = Aggregates::default();
        self.records.for_each_merged(|key, slot| {
            agg.distinct_records += 1;
            *agg.per_port.entry((key & 0xffff) as u16).or_insert(0) += 1;
            *agg.new_records_per_day.entry(slot.first_day).or_insert(0) += 1;
        });
        self.ips.for_each_merged(|_key, slot| {
            agg.distinct_ips += 1;
            *agg.new_ips_per_day.entry(slot.first_day).or_insert(0) += 1;
            let country = unpack_country(slot.country).unwrap_or_else(|| "UNKNOWN".to_string());
            *agg.per_country.entry(country).or_insert(0) += 1;
            if slot.conflicted {
                agg.country_conflicts += 1;
            }
        });
        self.cache.replace(Some(agg.clone()));
        agg
    }

    pub fn distinct_records(&self) -> u64 {
        self.aggregates().distinct_records
    }

    pub fn distinct_ips(&self) -> u64 {
        self.aggregates().distinct_ips
    }

    /// IPs whose records disagreed on the country code; they are
    /// counted under the first-seen country.
    pub fn country_conflicts(&self) -> u64 {
        self.aggregates().country_conflicts
    }

    /// Per-day cumulative and new distinct counts, zero-filled over
    /// the observed day span.
    pub fn cumulative_series(&self) -> Result<Vec<DayCounts>, LandscapeError> {
        let agg = self.aggregates();
        if agg.distinct_records == 0 {
            return Err(LandscapeError::EmptyStore);
        }
        let (lo, hi) = self.day_span.ok_or(LandscapeError::EmptyStore)?;
        let mut out = Vec::new();
        let mut cum_records = 0;
        let mut cum_ips = 0;
        for day in lo..=hi {
            let new_records = agg.new_records_per_day.get(&day).copied().unwrap_or(0);
            let new_ips = agg.new_ips_per_day.get(&day).copied().unwrap_or(0);
            cum_records += new_records;
            cum_ips += new_ips;
            out.push(DayCounts {
                day,
                cumulative_records: cum_records,
                cumulative_ips: cum_ips,
                new_records,
                new_ips,
            });
        }
        Ok(out)
    }

    /// Ports ranked by distinct record count, ties broken by ascending
    /// port. Percentage is of all matching records.
    pub fn top_ports(&self, n: usize) -> Result<Vec<PortRow>, LandscapeError> {
        let agg = self.aggregates();
        if agg.distinct_records == 0 {
            return Err(LandscapeError::EmptyStore);
        }
        let mut rows: Vec<(u16, u64)> = agg.per_port.into_iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(rows
            .into_iter()
            .take(n)
            .map(|(port, records)| PortRow {
                port,
                records,
                percent: percent(records, agg.distinct_records),
            })
            .collect())
    }

    /// Countries ranked by distinct IP count (first-seen country per
    /// IP), percentage of all distinct IPs.
    pub fn top_countries(&self, n: usize) -> Result<Vec<CountryRow>, LandscapeError> {
        let agg = self.aggregates();
        if agg.distinct_ips == 0 {
            return Err(LandscapeError::EmptyStore);
        }
        let mut rows: Vec<(String, u64)> = agg.per_country.into_iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(rows
            .into_iter()
            .take(n)
            .map(|(country, ips)| CountryRow {
                percent: percent(ips, agg.distinct_ips),
                country,
                ips,
            })
            .collect())
    }
}

fn percent(count: u64, total: u64) -> f64 {
    (count as f64 / total as f64) * 100.0
}

/// Render a percentage at 0.1% precision, the table form.
pub fn format_percent(p: f64) -> String {
    format!("{p:.1}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayCounts {
    pub day: i32,
    pub cumulative_records: u64,
    pub cumulative_ips: u64,
    pub new_records: u64,
    pub new_ips: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortRow {
    pub port: u16,
    pub records: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryRow {
    pub country: String,
    pub ips: u64,
    pub percent: f64,
}

fn parse_scan_json(line: &str) -> Result<ScanRecord, String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let ts = v
        .get("timestamp")
        .and_then(|t| t.as_str())
        .ok_or("missing timestamp")?;
    if ts.len() < 10 {
        return Err(format!("bad timestamp `{ts}`"));
    }
    let y: i64 = ts[0..4].parse().map_err(|_| "bad timestamp year")?;
    let m: u32 = ts[5..7].parse().map_err(|_| "bad timestamp month")?;
    let d: u32 = ts[8..10].parse().map_err(|_| "bad timestamp day")?;
    let day = days_from_civil(y, m, d) as i32;
    let ip: Ipv4Addr = v
        .get("ip_str")
        .and_then(|t| t.as_str())
        .ok_or("missing ip_str")?
        .parse()
        .map_err(|_| "bad ip_str")?;
    let port = v
        .get("port")
        .and_then(|p| p.as_u64())
        .filter(|&p| p <= 65535)
        .ok_or("missing or bad port")? as u16;
    let banner = v
        .get("data")
        .and_then(|b| b.as_str())
        .unwrap_or("")
        .to_string();
    let product = v
        .get("product")
        .and_then(|p| p.as_str())
        .map(|s| s.to_string());
    let country_code3 = v
        .get("location")
        .and_then(|l| l.get("country_code3"))
        .and_then(|c| c.as_str())
        .map(|s| s.to_string());
    let asn = v.get("asn").and_then(|a| match a {
        serde_json::Value::String(s) => s.trim_start_matches("AS").parse().ok(),
        serde_json::Value::Number(n) => n.as_u64().map(|x| x as u32),
        _ => None,
    });
    Ok(ScanRecord {
        day,
        ip,
        port,
        banner,
        product,
        country_code3,
        asn,
    })
}

/// Intersection/union report for two externally supplied IP sets.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub left: u64,
    pub right: u64,
    pub intersection: u64,
    pub union: u64,
    pub jaccard: f64,
    pub frac_of_left: f64,
    pub frac_of_right: f64,
}

pub fn ip_overlap(a: &BTreeSet<Ipv4Addr>, b: &BTreeSet<Ipv4Addr>) -> OverlapReport {
    let intersection = a.intersection(b).count() as u64;
    let union = a.union(b).count() as u64;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    OverlapReport {
        left: a.len() as u64,
        right: b.len() as u64,
        intersection,
        union,
        jaccard: ratio(intersection, union),
        frac_of_left: ratio(intersection, a.len() as u64),
        frac_of_right: ratio(intersection, b.len() as u64),
    }
}

/// Load one IPv4 address per line; `#` comments and blanks allowed.
pub fn load_ip_list(path: &Path) -> Result<BTreeSet<Ipv4Addr>, LandscapeError> {
    let text = std::fs::read_to_string(path).map_err(|source| LandscapeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ip: Ipv4Addr = line.parse().map_err(|_| LandscapeError::Parse {
            file: path.display().to_string(),
            line: i + 1,
            msg: format!("bad IPv4 address `{line}`"),
        })?;
        out.insert(ip);
    }
    Ok(out)
}
