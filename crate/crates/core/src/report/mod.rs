//! Report emission and run orchestration for the command-line front
//! end: input discovery, parallel parsing, the classify pipeline and
//! the machine-first CSV / JSONL report set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use thiserror::Error;

use crate::analytics::{
    detect_campaigns, dispersal, endpoint_heatmap, timeseries, Attribution, AttributionTable,
    Bucket, Campaign, CampaignParams, EndpointHeatmap, TimeSeries,
};
use crate::classify::{
    classify_all_parallel, prepare_flows_parallel, AttackCategory, BruteForceParams,
    ClassifyOutput, ClassifyParams, FlowData, ServiceKind,
};
use crate::landscape::{format_percent, LandscapeStore};
use crate::logparse::{civil_from_days, parse_log_text, LogEvent};
use crate::model::{parse_capture_file, stable_hash64, CaptureStats, MICROS_PER_DAY};
use crate::sigdb::SignatureDb;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}")]
    Config(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    SigDb(#[from] crate::sigdb::SigDbError),
    #[error(transparent)]
    Analytics(#[from] crate::analytics::AnalyticsError),
    #[error(transparent)]
    Landscape(#[from] crate::landscape::LandscapeError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Diagnostics level from TIKTRIAGE_LOG (error, warn, info, debug).
pub fn log_level() -> u8 {
    static LEVEL: OnceLock<u8> = OnceLock::new();
    *LEVEL.get_or_init(|| {
        match std::env::var("TIKTRIAGE_LOG").as_deref() {
            Ok("debug") => 3,
            Ok("info") => 2,
            Ok("warn") => 1,
            Ok("error") => 0,
            _ => 1,
        }
    })
}

pub fn diag(level: u8, msg: &str) {
    if level <= log_level() {
        let tag = match level {
            0 => "error",
            1 => "warn",
            2 => "info",
            _ => "debug",
        };
        eprintln!("tiktriage[{tag}]: {msg}");
    }
}

/// Peak resident set size in KiB, from /proc/self/status when the
/// kernel exposes VmHWM, otherwise from getrusage.
pub fn peak_rss_kib() -> Option<u64> {
    if let Ok(status) = fs::read_to_string("/proc/self/status") {
        for line in status.lines() {
            if let Some(rest) = line.strip_prefix("VmHWM:") {
                if let Ok(v) = rest.trim().trim_end_matches(" kB").trim().parse() {
                    return Some(v);
                }
            }
        }
    }
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) };
    if rc == 0 && usage.ru_maxrss > 0 {
        return Some(usage.ru_maxrss as u64);
    }
    None
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub captures: Option<PathBuf>,
    pub logs: Option<PathBuf>,
    /// Empty list loads the bundled signature set.
    pub signatures: Vec<PathBuf>,
    pub attribution: Option<PathBuf>,
    pub out: PathBuf,
    pub idle_timeout_secs: u64,
    pub bf_window_secs: u64,
    pub bf_threshold: u32,
    pub campaign: CampaignParams,
    pub bucket: Bucket,
    pub workers: usize,
    pub lax: bool,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            captures: None,
            logs: None,
            signatures: Vec::new(),
            attribution: None,
            out: PathBuf::from("out"),
            idle_timeout_secs: crate::model::DEFAULT_IDLE_TIMEOUT_SECS,
            bf_window_secs: 60,
            bf_threshold: 5,
            campaign: CampaignParams::default(),
            bucket: Bucket::Day,
            workers: 0,
            lax: false,
        }
    }
}

impl RunConfig {
    fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        }
    }
}

/// One discovered input file with the sensor it belongs to. Layout:
/// `DIR/<sensor>/**/*.ext` maps files to the sensor directory they sit
/// under; files directly in DIR become their own sensor (file stem).
pub fn discover_inputs(dir: &Path, exts: &[&str]) -> Result<Vec<(String, PathBuf)>, ReportError> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut top: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    top.sort();
    for path in top {
        if path.is_dir() {
            let sensor = path
                .file_name()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_default();
            let mut stack = vec![path];
            let mut files = Vec::new();
            while let Some(d) = stack.pop() {
                let mut children: Vec<PathBuf> = fs::read_dir(&d)
                    .map_err(io_err(&d))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .collect();
                children.sort();
                for child in children {
                    if child.is_dir() {
                        stack.push(child);
                    } else if has_ext(&child, exts) {
                        files.push(child);
                    }
                }
            }
            files.sort();
            out.extend(files.into_iter().map(|f| (sensor.clone(), f)));
        } else if has_ext(&path, exts) {
            let sensor = path
                .file_stem()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_default();
            out.push((sensor, path));
        }
    }
    Ok(out)
}

fn has_ext(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .map(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
        .unwrap_or(false)
}

#[derive(Debug, Clone, Default)]
pub struct IngestStats {
    pub capture_files: u64,
    pub capture_files_skipped: u64,
    pub packets: u64,
    pub non_ipv4: u64,
    pub fragments: u64,
    pub malformed: u64,
    pub truncated_captures: u64,
    pub log_files: u64,
    pub log_lines: u64,
    /// Data-quality issues that demand the warning exit code.
    pub warnings: u64,
}

impl IngestStats {
    fn absorb_capture(&mut self, stats: &CaptureStats) {
        self.non_ipv4 += stats.non_ipv4;
        self.fragments += stats.fragments;
        self.malformed += stats.malformed;
        if stats.truncated_tail {
            self.truncated_captures += 1;
            self.warnings += 1;
        }
        if stats.malformed > 0 {
            self.warnings += 1;
        }
    }
}

/// Parse every capture file in parallel, in deterministic order.
/// Unreadable or unparsable files are skipped with a warning; their
/// packets are lost but every other file is fully processed.
pub fn load_captures(
    inputs: &[(String, PathBuf)],
    workers: usize,
) -> (Vec<crate::model::PacketRecord>, IngestStats) {
    let workers = workers.max(1);
    type FileResult = (usize, Result<(Vec<crate::model::PacketRecord>, CaptureStats), String>);
    let results: Vec<FileResult> = std::thread::scope(|s| {
        let chunk_size = inputs.len().div_ceil(workers).max(1);
        let handles: Vec<_> = inputs
            .chunks(chunk_size)
            .enumerate()
            .map(|(ci, chunk)| {
                s.spawn(move || {
                    chunk
                        .iter()
                        .enumerate()
                        .map(|(i, (sensor, path))| {
                            let idx = ci * chunk_size + i;
                            let res = fs::read(path)
                                .map_err(|e| format!("{}: {e}", path.display()))
                                .and_then(|bytes| {
                                    parse_capture_file(&bytes, sensor)
                                        .map_err(|e| format!("{}: {e}", path.display()))
                                });
                            (idx, res)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all = Vec::new();
        for h in handles {
            all.extend(h.join().expect("capture worker panicked"));
        }
        all
    });
    let mut ordered = results;
    ordered.sort_by_key(|(i, _)| *i);

    let mut packets = Vec::new();
    let mut stats = IngestStats::default();
    for (_, res) in ordered {
        match res {
            Ok((pkts, file_stats)) => {
                stats.capture_files += 1;
                stats.packets += pkts.len() as u64;
                stats.absorb_capture(&file_stats);
                packets.extend(pkts);
            }
            Err(msg) => {
                diag(1, &format!("skipping capture: {msg}"));
                stats.capture_files_skipped += 1;
                stats.warnings += 1;
            }
        }
    }
    (packets, stats)
}

pub fn load_logs(
    inputs: &[(String, PathBuf)],
    stats: &mut IngestStats,
) -> Result<Vec<LogEvent>, ReportError> {
    let mut events = Vec::new();
    for (sensor, path) in inputs {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut file_events = parse_log_text(&text, sensor);
        stats.log_files += 1;
        stats.log_lines += file_events.len() as u64;
        events.append(&mut file_events);
    }
    // merge by (sensor, ts), stable
    events.sort_by(|a, b| (&a.sensor_id, a.ts).cmp(&(&b.sensor_id, b.ts)));
    Ok(events)
}

pub struct ClassifyArtifacts {
    pub flows: Vec<FlowData>,
    pub log_events: Vec<LogEvent>,
    pub output: ClassifyOutput,
    pub campaigns: Vec<Campaign>,
    pub heatmap: EndpointHeatmap,
    pub series: TimeSeries,
    pub stats: IngestStats,
}

/// Run the full pipeline: ingest -> assemble -> reassemble ->
/// classify -> analytics.
pub fn run_classify(cfg: &RunConfig) -> Result<ClassifyArtifacts, ReportError> {
    if cfg.captures.is_none() && cfg.logs.is_none() {
        return Err(ReportError::Config(
            "classify requires --captures and/or --logs".to_string(),
        ));
    }
    let db = load_signatures(&cfg.signatures, cfg.lax)?;
    let attribution = cfg
        .attribution
        .as_deref()
        .map(AttributionTable::load)
        .transpose()?;
    let workers = cfg.effective_workers();

    let mut stats = IngestStats::default();
    let mut packets = Vec::new();
    if let Some(dir) = &cfg.captures {
        let inputs = discover_inputs(dir, &["pcap", "cap"])?;
        diag(2, &format!("{} capture files under {}", inputs.len(), dir.display()));
        let (pkts, capture_stats) = load_captures(&inputs, workers);
        packets = pkts;
        stats = capture_stats;
    }
    let mut log_events = Vec::new();
    if let Some(dir) = &cfg.logs {
        let inputs = discover_inputs(dir, &["log", "txt"])?;
        log_events = load_logs(&inputs, &mut stats)?;
    }

    let flows = prepare_flows_parallel(packets, cfg.idle_timeout_secs, workers);
    let params = ClassifyParams {
        bruteforce: BruteForceParams {
            window_secs: cfg.bf_window_secs,
            threshold: cfg.bf_threshold,
        },
    };
    let output = classify_all_parallel(&flows, &log_events, &db, &params, workers);
    let flow_records: Vec<_> = flows.iter().map(|f| f.flow.clone()).collect();
    let campaigns = detect_campaigns(&flow_records, &cfg.campaign);
    let heatmap = endpoint_heatmap(&output.events);
    let series = timeseries(&flow_records, &log_events, cfg.bucket);

    let artifacts = ClassifyArtifacts {
        flows,
        log_events,
        output,
        campaigns,
        heatmap,
        series,
        stats,
    };
    write_classify_reports(cfg, &artifacts, attribution.as_ref())?;
    Ok(artifacts)
}

pub fn load_signatures(paths: &[PathBuf], lax: bool) -> Result<SignatureDb, ReportError> {
    if paths.is_empty() {
        diag(2, "no signature files given; using the bundled set");
        return Ok(SignatureDb::builtin());
    }
    let mut db = SignatureDb::empty();
    for path in paths {
        db.merge_file(path, !lax)?;
    }
    for w in db.warnings() {
        diag(1, w);
    }
    Ok(db)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), ReportError> {
    fs::write(path, content).map_err(io_err(path))
}

fn date_of_day(day: i64) -> String {
    let (y, m, d) = civil_from_days(day);
    format!("{y:04}-{m:02}-{d:02}")
}

fn bucket_label(bucket: Bucket, index: i64) -> String {
    match bucket {
        Bucket::Day => date_of_day(index),
        Bucket::Hour => {
            let day = index.div_euclid(24);
            let hour = index.rem_euclid(24);
            format!("{}T{hour:02}", date_of_day(day))
        }
    }
}

fn write_classify_reports(
    cfg: &RunConfig,
    art: &ClassifyArtifacts,
    attribution: Option<&AttributionTable>,
) -> Result<(), ReportError> {
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let out = |name: &str| cfg.out.join(name);
    let events = &art.output.events;

    // events.jsonl
    let mut jsonl = String::new();
    for ev in events {
        jsonl.push_str(&serde_json::to_string(ev).expect("event serializes"));
        jsonl.push('\n');
    }
    write_file(&out("events.jsonl"), &jsonl)?;

    // summary.csv: per-category counts
    let mut by_category: BTreeMap<AttackCategory, u64> = BTreeMap::new();
    for ev in events {
        *by_category.entry(ev.category).or_insert(0) += 1;
    }
    let mut summary = String::from("category,count\n");
    for cat in AttackCategory::ALL {
        let _ = writeln!(
            summary,
            "{},{}",
            cat.name(),
            by_category.get(&cat).copied().unwrap_or(0)
        );
    }
    write_file(&out("summary.csv"), &summary)?;

    // logins_by_sensor.csv
    let mut logins: BTreeMap<(String, String), u64> = BTreeMap::new();
    for ev in events.iter().filter(|e| e.category == AttackCategory::LoginSuccess) {
        let svc = ev.service.map(|s| s.name().to_string()).unwrap_or_default();
        *logins.entry((ev.sensor_id.clone(), svc)).or_insert(0) += 1;
    }
    let mut csv = String::from("sensor,service,count\n");
    for ((sensor, svc), count) in &logins {
        let _ = writeln!(csv, "{},{},{}", csv_field(sensor), svc, count);
    }
    write_file(&out("logins_by_sensor.csv"), &csv)?;

    // tunnels_by_sensor.csv, grouped by protocol
    let mut tunnels: BTreeMap<(String, String), u64> = BTreeMap::new();
    for ev in events
        .iter()
        .filter(|e| e.category == AttackCategory::TunnelEstablished)
    {
        let svc = ev.service.map(|s| s.name().to_string()).unwrap_or_default();
        *tunnels.entry((ev.sensor_id.clone(), svc)).or_insert(0) += 1;
    }
    let mut csv = String::from("sensor,protocol,count\n");
    for ((sensor, svc), count) in &tunnels {
        let _ = writeln!(csv, "{},{},{}", csv_field(sensor), svc, count);
    }
    write_file(&out("tunnels_by_sensor.csv"), &csv)?;

    // bruteforce_series.csv: per day and sensor, regular vs Mirai
    let mut bf: BTreeMap<(i64, String), (u64, u64, u64)> = BTreeMap::new();
    for at in &art.output.bruteforce.attempts {
        let day = at.ts.div_euclid(MICROS_PER_DAY);
        let entry = bf.entry((day, at.sensor_id.clone())).or_default();
        match at.service {
            ServiceKind::Ssh => entry.0 += 1,
            ServiceKind::Telnet => entry.1 += 1,
            _ => {}
        }
    }
    for ev in events.iter().filter(|e| e.category == AttackCategory::MiraiScan) {
        let day = ev.ts_start.div_euclid(MICROS_PER_DAY);
        let probes: u64 = ev
            .attributes
            .get("probe_count")
            .and_then(|p| p.parse().ok())
            .unwrap_or(0);
        bf.entry((day, ev.sensor_id.clone())).or_default().2 += probes;
    }
    let mut csv = String::from("day,sensor,ssh_attempts,telnet_attempts,telnet_mirai_probes\n");
    for ((day, sensor), (ssh, telnet, mirai)) in &bf {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            date_of_day(*day),
            csv_field(sensor),
            ssh,
            telnet,
            mirai
        );
    }
    write_file(&out("bruteforce_series.csv"), &csv)?;

    // mirai_countries.csv: distinct fingerprinted sources by country
    let mut mirai_ips: BTreeSet<Ipv4Addr> = BTreeSet::new();
    for ev in events.iter().filter(|e| e.category == AttackCategory::MiraiScan) {
        mirai_ips.insert(ev.src_ip);
    }
    let mut by_country: BTreeMap<String, u64> = BTreeMap::new();
    for ip in &mirai_ips {
        let country = match attribution {
            Some(table) => match table.attribute(*ip) {
                Attribution::Known { country, .. } => country,
                Attribution::Unknown => "UNKNOWN".to_string(),
            },
            None => "UNKNOWN".to_string(),
        };
        *by_country.entry(country).or_insert(0) += 1;
    }
    let mut rows: Vec<(String, u64)> = by_country.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut csv = String::from("country,ips\n");
    for (country, ips) in rows {
        let _ = writeln!(csv, "{},{}", csv_field(&country), ips);
    }
    write_file(&out("mirai_countries.csv"), &csv)?;

    // campaigns.csv
    let mut csv =
        String::from("campaign_id,trigger,src_ip,flow_count,ports,sensors,ts_start,ts_end\n");
    for c in &art.campaigns {
        let ports = c
            .targeted_ports
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join("+");
        let sensors = c
            .sensors_hit
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("+");
        let src = c
            .src_ips
            .iter()
            .map(|ip| ip.to_string())
            .collect::<Vec<_>>()
            .join("+");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            c.campaign_id, c.trigger.name(), src, c.flow_count, ports, sensors, c.ts_start, c.ts_end
        );
    }
    write_file(&out("campaigns.csv"), &csv)?;

    // dispersal.csv
    let mut csv = String::from("sensors_hit,sources,fraction\n");
    if let Ok(hist) = dispersal(events) {
        for (k, count) in &hist.counts {
            let _ = writeln!(csv, "{},{},{}", k, count, hist.fractions[k]);
        }
    }
    write_file(&out("dispersal.csv"), &csv)?;

    // heatmap.csv
    let mut csv = String::from("endpoint,sensor,count\n");
    for ((endpoint, sensor), count) in &art.heatmap.cells {
        let _ = writeln!(csv, "{},{},{}", endpoint, csv_field(sensor), count);
    }
    write_file(&out("heatmap.csv"), &csv)?;

    // timeseries.csv
    let mut csv = String::from("bucket,flows,hostile_log_events\n");
    for (i, (f, l)) in art
        .series
        .flow_counts
        .iter()
        .zip(&art.series.log_counts)
        .enumerate()
    {
        let _ = writeln!(
            csv,
            "{},{},{}",
            bucket_label(art.series.bucket, art.series.start_bucket + i as i64),
            f,
            l
        );
    }
    write_file(&out("timeseries.csv"), &csv)?;

    // metrics.csv
    let bf_report = &art.output.bruteforce;
    let mut metrics = String::from("key,value\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(metrics, "{k},{v}");
    };
    kv("packets_total", art.stats.packets.to_string());
    kv("flows_total", art.flows.len().to_string());
    kv("log_lines_total", art.stats.log_lines.to_string());
    kv("events_total", events.len().to_string());
    kv("ip_overlap_ssh_telnet", bf_report.ip_overlap.to_string());
    kv(
        "ssh_attempts",
        bf_report
            .attempts_by_service
            .get(&ServiceKind::Ssh)
            .copied()
            .unwrap_or(0)
            .to_string(),
    );
    kv(
        "telnet_attempts",
        bf_report
            .attempts_by_service
            .get(&ServiceKind::Telnet)
            .copied()
            .unwrap_or(0)
            .to_string(),
    );
    kv(
        "correlation_flows_logs",
        art.series
            .correlation
            .map(|c| c.to_string())
            .unwrap_or_else(|| "NONE".to_string()),
    );
    kv("non_ipv4_skipped", art.stats.non_ipv4.to_string());
    kv("fragments_skipped", art.stats.fragments.to_string());
    kv("malformed_skipped", art.stats.malformed.to_string());
    kv(
        "capture_files_skipped",
        art.stats.capture_files_skipped.to_string(),
    );
    kv(
        "truncated_captures",
        art.stats.truncated_captures.to_string(),
    );
    kv(
        "peak_rss_kib",
        peak_rss_kib()
            .map(|v| v.to_string())
            .unwrap_or_else(|| "NONE".to_string()),
    );
    write_file(&out("metrics.csv"), &metrics)?;
    Ok(())
}

/// Landscape aggregation over scan dumps; returns the number of
/// skipped lines (lax mode).
pub struct LandscapeArtifacts {
    pub store: LandscapeStore,
    pub skipped: u64,
}

pub fn run_landscape(
    scans: &Path,
    filter: &str,
    top_n: usize,
    out_dir: &Path,
    lax: bool,
) -> Result<LandscapeArtifacts, ReportError> {
    let inputs = discover_inputs(scans, &["jsonl", "json", "ndjson", "txt"])?;
    if inputs.is_empty() {
        return Err(ReportError::Config(format!(
            "no scan dumps found under {}",
            scans.display()
        )));
    }
    let files: Vec<PathBuf> = inputs.into_iter().map(|(_, p)| p).collect();
    let mut store = LandscapeStore::new(filter);
    store.ingest_scan_files(&files, lax)?;
    write_landscape_reports(&store, top_n, out_dir)?;
    Ok(LandscapeArtifacts {
        skipped: store.skipped_lines,
        store,
    })
}

pub fn write_landscape_reports(
    store: &LandscapeStore,
    top_n: usize,
    out_dir: &Path,
) -> Result<(), ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let ports = store.top_ports(top_n)?;
    let mut csv = String::from("port,records,pct\n");
    for row in &ports {
        let _ = writeln!(csv, "{},{},{}", row.port, row.records, format_percent(row.percent));
    }
    write_file(&out_dir.join("top_ports.csv"), &csv)?;

    let countries = store.top_countries(top_n)?;
    let mut csv = String::from("country,ips,pct\n");
    for row in &countries {
        let _ = writeln!(
            csv,
            "{},{},{}",
            csv_field(&row.country),
            row.ips,
            format_percent(row.percent)
        );
    }
    write_file(&out_dir.join("top_countries.csv"), &csv)?;

    let series = store.cumulative_series()?;
    let mut csv = String::from("day,cumulative_records,cumulative_ips,new_records,new_ips\n");
    for d in &series {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            date_of_day(d.day as i64),
            d.cumulative_records,
            d.cumulative_ips,
            d.new_records,
            d.new_ips
        );
    }
    write_file(&out_dir.join("cumulative.csv"), &csv)?;
    Ok(())
}

/// Stable digest of a directory tree, for the generate command's
/// checksum listing.
pub fn file_checksums(dir: &Path) -> Result<Vec<(String, u64)>, ReportError> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut children: Vec<PathBuf> = fs::read_dir(&d)
            .map_err(io_err(&d))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        children.sort();
        for child in children {
            if child.is_dir() {
                stack.push(child);
            } else {
                let bytes = fs::read(&child).map_err(io_err(&child))?;
                let rel = child
                    .strip_prefix(dir)
                    .unwrap_or(&child)
                    .display()
                    .to_string();
                files.push((rel, stable_hash64(&[&bytes])));
            }
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_corpus, ScenarioConfig};

    fn tmp(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("tiktriage-report-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn classify_run_writes_all_reports() {
        let corpus = tmp("corpus");
        let out = tmp("out");
        let config = ScenarioConfig {
            seed: 5,
            duration_days: 1,
            sensors: vec!["au".into(), "br".into()],
            mix: ScenarioConfig::full_mix(),
            ..Default::default()
        };
        generate_corpus(&config, &corpus).unwrap();
        let cfg = RunConfig {
            captures: Some(corpus.clone()),
            logs: Some(corpus.clone()),
            out: out.clone(),
            workers: 2,
            ..Default::default()
        };
        let art = run_classify(&cfg).unwrap();
        assert!(art.stats.warnings == 0);
        for name in [
            "events.jsonl",
            "summary.csv",
            "logins_by_sensor.csv",
            "tunnels_by_sensor.csv",
            "bruteforce_series.csv",
            "mirai_countries.csv",
            "campaigns.csv",
            "dispersal.csv",
            "heatmap.csv",
            "timeseries.csv",
            "metrics.csv",
        ] {
            assert!(out.join(name).is_file(), "missing report {name}");
        }
        // report totals are internally consistent
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        let category_count = |name: &str| -> u64 {
            summary
                .lines()
                .find(|l| l.starts_with(name))
                .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
                .unwrap_or(0)
        };
        let total: u64 = summary
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, art.output.events.len() as u64);
        let table_sum = |file: &str| -> u64 {
            fs::read_to_string(out.join(file))
                .unwrap()
                .lines()
                .skip(1)
                .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
                .sum()
        };
        assert_eq!(table_sum("logins_by_sensor.csv"), category_count("LOGIN_SUCCESS"));
        assert_eq!(
            table_sum("tunnels_by_sensor.csv"),
            category_count("TUNNEL_ESTABLISHED")
        );
        assert_eq!(table_sum("heatmap.csv"), category_count("TUNNEL_ESTABLISHED"));
        let _ = fs::remove_dir_all(&corpus);
        let _ = fs::remove_dir_all(&out);
    }

    #[test]
    fn reports_are_byte_identical_across_runs_and_workers() {
        let corpus = tmp("corpus2");
        let config = ScenarioConfig {
            seed: 6,
            duration_days: 1,
            sensors: vec!["au".into(), "br".into()],
            mix: ScenarioConfig::full_mix(),
            ..Default::default()
        };
        generate_corpus(&config, &corpus).unwrap();
        let mut digests = Vec::new();
        for (tag, workers) in [("w1", 1usize), ("w8", 8), ("w8b", 8)] {
            let out = tmp(tag);
            let cfg = RunConfig {
                captures: Some(corpus.clone()),
                logs: Some(corpus.clone()),
                out: out.clone(),
                workers,
                ..Default::default()
            };
            run_classify(&cfg).unwrap();
            digests.push(file_checksums(&out).unwrap());
            let _ = fs::remove_dir_all(&out);
        }
        assert_eq!(digests[0], digests[1]);
        assert_eq!(digests[1], digests[2]);
        let _ = fs::remove_dir_all(&corpus);
    }

    #[test]
    fn corrupt_capture_is_skipped_with_warning() {
        let corpus = tmp("corrupt");
        let config = ScenarioConfig {
            seed: 8,
            duration_days: 1,
            sensors: vec!["au".into()],
            mix: ScenarioConfig::full_mix(),
            ..Default::default()
        };
        generate_corpus(&config, &corpus).unwrap();
        // corrupt one capture file's magic
        let pcap_dir = corpus.join("au").join("pcap");
        let victim = fs::read_dir(&pcap_dir).unwrap().next().unwrap().unwrap().path();
        fs::write(&victim, b"\x00\x00\x00\x00garbage").unwrap();
        let out = tmp("corrupt-out");
        let cfg = RunConfig {
            captures: Some(corpus.clone()),
            logs: Some(corpus.clone()),
            out: out.clone(),
            ..Default::default()
        };
        let art = run_classify(&cfg).unwrap();
        assert!(art.stats.warnings > 0);
        assert_eq!(art.stats.capture_files_skipped, 1);
        let _ = fs::remove_dir_all(&corpus);
        let _ = fs::remove_dir_all(&out);
    }
}
