//! C ABI over the tiktriage engine: opaque handles, integer status
//! codes, thread-local error messages. Pointers returned by this
//! library are owned by it and must be released with the matching
//! `_free` function; string arguments are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::ptr;

use libc::{c_char, c_int, size_t};

use tiktriage::analytics::{Bucket, CampaignParams};
use tiktriage::filter::{eval_filter, parse_filter, FilterAst};
use tiktriage::model::{IpProto, PacketRecord, TcpFlags};
use tiktriage::report::{run_classify, RunConfig};
use tiktriage::sigdb::SignatureDb;
use tiktriage::synth::{generate_corpus, ScenarioConfig};

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    RunError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, TtStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} must not be null"));
        return Err(TtStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error(&format!("{what} must be valid UTF-8"));
            Err(TtStatus::InvalidArgument)
        }
    }
}

unsafe fn optional_str<'a>(ptr: *const c_char, what: &str) -> Result<Option<&'a str>, TtStatus> {
    if ptr.is_null() {
        return Ok(None);
    }
    required_str(ptr, what).map(Some)
}

// ---------------------------------------------------------------------------
// Signature databases
// ---------------------------------------------------------------------------

/// Opaque signature database handle.
pub struct TtSignatureDb {
    inner: SignatureDb,
}

/// Load the signature set bundled with the library. Never fails.
#[no_mangle]
pub extern "C" fn tt_sigdb_builtin() -> *mut TtSignatureDb {
    Box::into_raw(Box::new(TtSignatureDb {
        inner: SignatureDb::builtin(),
    }))
}

/// Load one signature database file. Returns null on failure; inspect
/// tt_last_error_message.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tt_sigdb_load_file(path: *const c_char, strict: bool) -> *mut TtSignatureDb {
    let path = match required_str(path, "path") {
        Ok(p) => p,
        Err(_) => return ptr::null_mut(),
    };
    match SignatureDb::load_file(std::path::Path::new(path), strict) {
        Ok(db) => Box::into_raw(Box::new(TtSignatureDb { inner: db })),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Number of signatures in the database; 0 for a null handle.
///
/// # Safety
/// `db` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn tt_sigdb_len(db: *const TtSignatureDb) -> size_t {
    if db.is_null() {
        return 0;
    }
    (*db).inner.len()
}

/// Release a signature database handle. A null handle is a no-op.
///
/// # Safety
/// `db` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tt_sigdb_free(db: *mut TtSignatureDb) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// Opaque compiled filter expression.
pub struct TtFilter {
    ast: FilterAst,
}

/// One decoded packet passed across the boundary. Addresses are host
/// byte order (192.0.2.1 = 0xC0000201); `ip_proto` is the IANA
/// protocol number; `tcp_seq`/`tcp_flags` are read only for TCP.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TtPacket {
    pub ts_us: i64,
    pub src_ip: u32,
    pub dst_ip: u32,
    pub ip_proto: u8,
    pub src_port: u16,
    pub dst_port: u16,
    pub tcp_flags: u8,
    pub tcp_seq: u32,
    pub payload: *const u8,
    pub payload_len: size_t,
}

fn packet_from_c(pkt: &TtPacket) -> PacketRecord {
    let ip_proto = IpProto::from_number(pkt.ip_proto);
    let payload = if pkt.payload.is_null() || pkt.payload_len == 0 {
        Vec::new()
    } else {
        unsafe { std::slice::from_raw_parts(pkt.payload, pkt.payload_len) }.to_vec()
    };
    PacketRecord {
        ts: pkt.ts_us,
        sensor_id: "ffi".to_string(),
        src_ip: Ipv4Addr::from(pkt.src_ip),
        dst_ip: Ipv4Addr::from(pkt.dst_ip),
        ip_proto,
        src_port: pkt.src_port,
        dst_port: pkt.dst_port,
        tcp_flags: TcpFlags::from_bits(pkt.tcp_flags),
        tcp_seq: (ip_proto == IpProto::Tcp).then_some(pkt.tcp_seq),
        payload,
        capture_len: 0,
        orig_len: 0,
    }
}

/// Parse a filter expression. Returns null on error; the message
/// carries a 1-based column position.
///
/// # Safety
/// `expr` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tt_filter_parse(expr: *const c_char) -> *mut TtFilter {
    let expr = match required_str(expr, "expr") {
        Ok(e) => e,
        Err(_) => return ptr::null_mut(),
    };
    match parse_filter(expr) {
        Ok(ast) => Box::into_raw(Box::new(TtFilter { ast })),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Evaluate a compiled filter against one packet: 1 match, 0 no match,
/// -1 null argument.
///
/// # Safety
/// `filter` must be a live handle; `pkt.payload` must reference
/// `pkt.payload_len` readable bytes (or be null with length 0).
#[no_mangle]
pub unsafe extern "C" fn tt_filter_eval(filter: *const TtFilter, pkt: *const TtPacket) -> c_int {
    if filter.is_null() || pkt.is_null() {
        set_error("filter and pkt must not be null");
        return -1;
    }
    let record = packet_from_c(&*pkt);
    eval_filter(&(*filter).ast, &record) as c_int
}

/// Release a filter handle. A null handle is a no-op.
///
/// # Safety
/// `filter` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tt_filter_free(filter: *mut TtFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Configuration for tt_classify_run. Null paths are treated as
/// absent; at least one of `captures_dir`/`logs_dir` is required.
/// Zero thresholds select the documented defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TtClassifyConfig {
    pub captures_dir: *const c_char,
    pub logs_dir: *const c_char,
    /// Signature database file; null loads the bundled set.
    pub signatures_path: *const c_char,
    /// CIDR,country,asn,as_name mapping file; optional.
    pub attribution_path: *const c_char,
    pub out_dir: *const c_char,
    pub idle_timeout_secs: u64,
    pub bf_window_secs: u64,
    pub bf_threshold: u32,
    pub workers: u32,
    pub lax: bool,
}

/// Run ingest -> assemble -> classify -> analytics and write the
/// report set to `out_dir`. `out_event_count` and `out_warning_count`
/// may be null.
///
/// # Safety
/// `cfg` and every non-null string inside it must be valid; out
/// pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn tt_classify_run(
    cfg: *const TtClassifyConfig,
    out_event_count: *mut u64,
    out_warning_count: *mut u64,
) -> TtStatus {
    if cfg.is_null() {
        set_error("cfg must not be null");
        return TtStatus::NullArgument;
    }
    let cfg = &*cfg;
    let captures = match optional_str(cfg.captures_dir, "captures_dir") {
        Ok(v) => v.map(PathBuf::from),
        Err(s) => return s,
    };
    let logs = match optional_str(cfg.logs_dir, "logs_dir") {
        Ok(v) => v.map(PathBuf::from),
        Err(s) => return s,
    };
    let signatures = match optional_str(cfg.signatures_path, "signatures_path") {
        Ok(v) => v.map(PathBuf::from).into_iter().collect(),
        Err(s) => return s,
    };
    let attribution = match optional_str(cfg.attribution_path, "attribution_path") {
        Ok(v) => v.map(PathBuf::from),
        Err(s) => return s,
    };
    let out = match required_str(cfg.out_dir, "out_dir") {
        Ok(v) => PathBuf::from(v),
        Err(s) => return s,
    };
    if captures.is_none() && logs.is_none() {
        set_error("at least one of captures_dir/logs_dir is required");
        return TtStatus::InvalidArgument;
    }
    let defaults = RunConfig::default();
    let run = RunConfig {
        captures,
        logs,
        signatures,
        attribution,
        out,
        idle_timeout_secs: if cfg.idle_timeout_secs == 0 {
            defaults.idle_timeout_secs
        } else {
            cfg.idle_timeout_secs
        },
        bf_window_secs: if cfg.bf_window_secs == 0 {
            defaults.bf_window_secs
        } else {
            cfg.bf_window_secs
        },
        bf_threshold: if cfg.bf_threshold == 0 {
            defaults.bf_threshold
        } else {
            cfg.bf_threshold
        },
        campaign: CampaignParams::default(),
        bucket: Bucket::Day,
        workers: cfg.workers as usize,
        lax: cfg.lax,
    };
    match run_classify(&run) {
        Ok(art) => {
            if !out_event_count.is_null() {
                *out_event_count = art.output.events.len() as u64;
            }
            if !out_warning_count.is_null() {
                *out_warning_count = art.stats.warnings;
            }
            TtStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            match e {
                tiktriage::report::ReportError::Config(_) => TtStatus::InvalidArgument,
                tiktriage::report::ReportError::Io { .. } => TtStatus::IoError,
                tiktriage::report::ReportError::SigDb(_) => TtStatus::ParseError,
                _ => TtStatus::RunError,
            }
        }
    }
}

/// Generate a synthetic corpus with its ground-truth manifest.
/// `scenario_mix` is a comma-separated `name=weight` list; null enables
/// every scenario at weight 1. `out_expected_events` may be null.
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; the out
/// pointer must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn tt_generate_corpus(
    out_dir: *const c_char,
    seed: u64,
    days: u32,
    sensors_csv: *const c_char,
    scenario_mix: *const c_char,
    out_expected_events: *mut u64,
) -> TtStatus {
    let out_dir = match required_str(out_dir, "out_dir") {
        Ok(v) => PathBuf::from(v),
        Err(s) => return s,
    };
    let sensors: Vec<String> = match optional_str(sensors_csv, "sensors_csv") {
        Ok(Some(csv)) => csv
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        Ok(None) => tiktriage::synth::DEFAULT_SENSORS
            .iter()
            .map(|s| s.to_string())
            .collect(),
        Err(s) => return s,
    };
    let mix: BTreeMap<String, f64> = match optional_str(scenario_mix, "scenario_mix") {
        Ok(Some(csv)) => {
            let mut mix = BTreeMap::new();
            for spec in csv.split(',').filter(|s| !s.trim().is_empty()) {
                let Some((name, weight)) = spec.split_once('=') else {
                    set_error(&format!("scenario_mix entry `{spec}` must be name=weight"));
                    return TtStatus::InvalidArgument;
                };
                let Ok(weight) = weight.trim().parse::<f64>() else {
                    set_error(&format!("bad weight in `{spec}`"));
                    return TtStatus::InvalidArgument;
                };
                mix.insert(name.trim().to_string(), weight);
            }
            mix
        }
        Ok(None) => ScenarioConfig::full_mix(),
        Err(s) => return s,
    };
    let config = ScenarioConfig {
        seed,
        duration_days: days,
        sensors,
        mix,
        ..Default::default()
    };
    match generate_corpus(&config, &out_dir) {
        Ok(manifest) => {
            if !out_expected_events.is_null() {
                *out_expected_events = manifest.events.len() as u64;
            }
            TtStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            match e {
                tiktriage::synth::SynthError::InvalidConfig(_) => TtStatus::InvalidArgument,
                tiktriage::synth::SynthError::Io { .. } => TtStatus::IoError,
                tiktriage::synth::SynthError::Manifest { .. } => TtStatus::ParseError,
            }
        }
    }
}
