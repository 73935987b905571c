//! Signature databases: MikroTik-CVE network signatures and generic
//! router-attack log signatures.
//!
//! On-disk format: UTF-8, one record per signature, records separated
//! by a line containing only `---`, fields as `key: value` lines.
//! Patterns are written as `<scope> <kind>:<value> [@offset]` where
//! kind is `lit:"..."` (escaped string), `hex:DEADBEEF` or `re:"..."`.
//! Lines starting with `#` and blank lines are ignored. Unknown keys
//! are a load error in strict mode and a warning in lax mode.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::bytes::Regex as BytesRegex;
use thiserror::Error;

use crate::classify::AttackCategory;
use crate::filter::{
    parse_filter, FilterAst, FilterError, PatternScope, PayloadPattern,
};

const BUILTIN_CVE_DB: &str = include_str!("../../data/signatures/mikrotik-cve.sdb");
const BUILTIN_GENERIC_DB: &str = include_str!("../../data/signatures/router-generic.sdb");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SigKind {
    Network,
    Log,
}

impl SigKind {
    fn name(&self) -> &'static str {
        match self {
            SigKind::Network => "network",
            SigKind::Log => "log",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Info,
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn name(&self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }

    fn parse(s: &str) -> Option<Severity> {
        match s {
            "info" => Some(Severity::Info),
            "low" => Some(Severity::Low),
            "medium" => Some(Severity::Medium),
            "high" => Some(Severity::High),
            "critical" => Some(Severity::Critical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchMode {
    All,
    Any,
}

#[derive(Debug, Error)]
pub enum SigDbError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate signature id `{0}`")]
    DuplicateId(String),
    #[error("signature `{id}`: invalid filter: {source}")]
    InvalidFilter { id: String, source: FilterError },
    #[error("signature `{id}`: invalid pattern: {msg}")]
    InvalidPattern { id: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingCode {
    EmptyId,
    InvalidFilter,
    MissingFilter,
    UnexpectedFilter,
    InvalidPattern,
    MissingLogPattern,
    UnexpectedLogPattern,
    BadCveFormat,
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FindingCode::EmptyId => "EMPTY_ID",
            FindingCode::InvalidFilter => "INVALID_FILTER",
            FindingCode::MissingFilter => "MISSING_FILTER",
            FindingCode::UnexpectedFilter => "UNEXPECTED_FILTER",
            FindingCode::InvalidPattern => "INVALID_PATTERN",
            FindingCode::MissingLogPattern => "MISSING_LOG_PATTERN",
            FindingCode::UnexpectedLogPattern => "UNEXPECTED_LOG_PATTERN",
            FindingCode::BadCveFormat => "BAD_CVE_FORMAT",
        };
        f.write_str(s)
    }
}

/// One machine-readable validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub code: FindingCode,
    pub detail: String,
}

/// One detection rule. Text fields are authoritative; compiled
/// artifacts are produced by [`Signature::compile`] (the loader always
/// compiles).
#[derive(Debug, Clone)]
pub struct Signature {
    pub id: String,
    pub kind: SigKind,
    pub category: AttackCategory,
    pub cve_id: Option<String>,
    pub severity: Severity,
    /// Filter expression text (NETWORK only).
    pub filter: Option<String>,
    pub match_mode: MatchMode,
    /// Pattern spec strings (NETWORK only).
    pub patterns: Vec<String>,
    /// Anchored byte-regex source over LogEvent.message (LOG only).
    pub log_pattern: Option<String>,
    pub references: Vec<String>,
    pub reconstructed: bool,
    pub attributes: BTreeMap<String, String>,
    compiled: OnceLock<Compiled>,
}

#[derive(Debug, Clone)]
struct Compiled {
    filter: Option<FilterAst>,
    patterns: Vec<PayloadPattern>,
    log_regex: Option<BytesRegex>,
    static_dst_ports: Option<BTreeSet<u16>>,
}

impl Signature {
    pub fn new(id: &str, kind: SigKind, category: AttackCategory) -> Signature {
        Signature {
            id: id.to_string(),
            kind,
            category,
            cve_id: None,
            severity: Severity::Medium,
            filter: None,
            match_mode: MatchMode::All,
            patterns: Vec::new(),
            log_pattern: None,
            references: Vec::new(),
            reconstructed: false,
            attributes: BTreeMap::new(),
            compiled: OnceLock::new(),
        }
    }

    pub fn filter_ast(&self) -> Option<&FilterAst> {
        self.compiled.get().and_then(|c| c.filter.as_ref())
    }

    pub fn compiled_patterns(&self) -> &[PayloadPattern] {
        self.compiled
            .get()
            .map(|c| c.patterns.as_slice())
            .unwrap_or(&[])
    }

    pub fn log_regex(&self) -> Option<&BytesRegex> {
        self.compiled.get().and_then(|c| c.log_regex.as_ref())
    }

    /// Destination ports any matching packet must carry, when that is
    /// statically determinable from the filter.
    pub fn static_dst_ports(&self) -> Option<&BTreeSet<u16>> {
        self.compiled
            .get()
            .and_then(|c| c.static_dst_ports.as_ref())
    }

    /// Compile filter, patterns and log regex. Fails with the loader's
    /// error types so callers can surface position information.
    pub fn compile(&self) -> Result<(), SigDbError> {
        if self.compiled.get().is_some() {
            return Ok(());
        }
        let filter = match &self.filter {
            Some(text) => Some(parse_filter(text).map_err(|source| SigDbError::InvalidFilter {
                id: self.id.clone(),
                source,
            })?),
            None => None,
        };
        let mut patterns = Vec::new();
        for spec in &self.patterns {
            let pat = parse_pattern_spec(spec).map_err(|msg| SigDbError::InvalidPattern {
                id: self.id.clone(),
                msg,
            })?;
            patterns.push(pat);
        }
        let log_regex = match &self.log_pattern {
            Some(src) => Some(
                BytesRegex::new(&format!("^(?:{src})$")).map_err(|e| {
                    SigDbError::InvalidPattern {
                        id: self.id.clone(),
                        msg: e.to_string(),
                    }
                })?,
            ),
            None => None,
        };
        let static_dst_ports = filter.as_ref().and_then(extract_static_ports);
        let _ = self.compiled.set(Compiled {
            filter,
            patterns,
            log_regex,
            static_dst_ports,
        });
        Ok(())
    }
}

impl PartialEq for Signature {
    fn eq(&self, other: &Signature) -> bool {
        canonical_signature_text(self) == canonical_signature_text(other)
    }
}

impl Eq for Signature {}

static CVE_RE: std::sync::LazyLock<regex::Regex> =
    std::sync::LazyLock::new(|| regex::Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap());

/// Check every signature invariant; an empty result means the
/// signature is well-formed.
pub fn validate_signature(sig: &Signature) -> Vec<Finding> {
    let mut findings = Vec::new();
    if sig.id.is_empty() {
        findings.push(Finding {
            code: FindingCode::EmptyId,
            detail: "signature id must be non-empty".to_string(),
        });
    }
    if let Some(cve) = &sig.cve_id {
        if !CVE_RE.is_match(cve) {
            findings.push(Finding {
                code: FindingCode::BadCveFormat,
                detail: format!("`{cve}` does not match CVE-YYYY-NNNN"),
            });
        }
    }
    match sig.kind {
        SigKind::Network => {
            match &sig.filter {
                None => findings.push(Finding {
                    code: FindingCode::MissingFilter,
                    detail: "network signature requires a filter".to_string(),
                }),
                Some(text) => {
                    if let Err(e) = parse_filter(text) {
                        findings.push(Finding {
                            code: FindingCode::InvalidFilter,
                            detail: e.to_string(),
                        });
                    }
                }
            }
            if sig.log_pattern.is_some() {
                findings.push(Finding {
                    code: FindingCode::UnexpectedLogPattern,
                    detail: "network signature cannot carry log_pattern".to_string(),
                });
            }
            for spec in &sig.patterns {
                if let Err(msg) = parse_pattern_spec(spec) {
                    findings.push(Finding {
                        code: FindingCode::InvalidPattern,
                        detail: msg,
                    });
                }
            }
        }
        SigKind::Log => {
            match &sig.log_pattern {
                None => findings.push(Finding {
                    code: FindingCode::MissingLogPattern,
                    detail: "log signature requires log_pattern".to_string(),
                }),
                Some(src) => {
                    if let Err(e) = BytesRegex::new(&format!("^(?:{src})$")) {
                        findings.push(Finding {
                            code: FindingCode::InvalidPattern,
                            detail: e.to_string(),
                        });
                    }
                }
            }
            if sig.filter.is_some() {
                findings.push(Finding {
                    code: FindingCode::UnexpectedFilter,
                    detail: "log signature cannot carry a filter".to_string(),
                });
            }
            if !sig.patterns.is_empty() {
                findings.push(Finding {
                    code: FindingCode::InvalidPattern,
                    detail: "log signature cannot carry payload patterns".to_string(),
                });
            }
        }
    }
    findings
}

/// Ports a matching packet's destination must belong to, or None when
/// the filter does not pin them down. Ranges wider than 64 ports count
/// as unconstrained.
fn extract_static_ports(ast: &FilterAst) -> Option<BTreeSet<u16>> {
    match ast {
        FilterAst::Port(d, n) if !matches!(d, crate::filter::Dir::Src) => {
            Some(BTreeSet::from([*n]))
        }
        FilterAst::PortRange(d, lo, hi) if !matches!(d, crate::filter::Dir::Src) => {
            if (*hi as u32 - *lo as u32) < 64 {
                Some((*lo..=*hi).collect())
            } else {
                None
            }
        }
        FilterAst::And(l, r) => match (extract_static_ports(l), extract_static_ports(r)) {
            (Some(a), Some(b)) => Some(a.intersection(&b).copied().collect()),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        },
        FilterAst::Or(l, r) => match (extract_static_ports(l), extract_static_ports(r)) {
            (Some(a), Some(b)) => Some(a.union(&b).copied().collect()),
            _ => None,
        },
        _ => None,
    }
}

fn unescape_quoted(s: &str) -> Result<(Vec<u8>, &str), String> {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'"') {
        return Err("expected opening quote".to_string());
    }
    let mut out = Vec::new();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => return Ok((out, &s[i + 1..])),
            b'\\' => {
                i += 1;
                if i >= bytes.len() {
                    return Err("dangling escape".to_string());
                }
                match bytes[i] {
                    b'"' => out.push(b'"'),
                    b'\\' => out.push(b'\\'),
                    b'n' => out.push(b'\n'),
                    b'r' => out.push(b'\r'),
                    b't' => out.push(b'\t'),
                    b'x' => {
                        if i + 2 >= bytes.len() {
                            return Err("truncated \\x escape".to_string());
                        }
                        let hex = &s[i + 1..i + 3];
                        let v = u8::from_str_radix(hex, 16)
                            .map_err(|_| format!("bad \\x escape `{hex}`"))?;
                        out.push(v);
                        i += 2;
                    }
                    other => return Err(format!("unknown escape \\{}", other as char)),
                }
                i += 1;
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    Err("unterminated quoted string".to_string())
}

/// Unquote a regex source: only `\"` is consumed (a literal quote);
/// every other backslash sequence passes through to the regex engine
/// verbatim.
fn unquote_regex(s: &str) -> Result<(String, &str), String> {
    let bytes = s.as_bytes();
    if bytes.first() != Some(&b'"') {
        return Err("expected opening quote".to_string());
    }
    let mut out = String::new();
    let mut i = 1;
    while i < bytes.len() {
        match bytes[i] {
            b'"' => return Ok((out, &s[i + 1..])),
            b'\\' if bytes.get(i + 1) == Some(&b'"') => {
                out.push('"');
                i += 2;
            }
            b'\\' => {
                out.push('\\');
                if let Some(&c) = bytes.get(i + 1) {
                    out.push(c as char);
                }
                i += 2;
            }
            b => {
                out.push(b as char);
                i += 1;
            }
        }
    }
    Err("unterminated quoted regex".to_string())
}

fn quote_regex(src: &str) -> String {
    format!("\"{}\"", src.replace('"', "\\\""))
}

fn escape_bytes(bytes: &[u8]) -> String {
    let mut out = String::from("\"");
    for &b in bytes {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            b'\n' => out.push_str("\\n"),
            b'\r' => out.push_str("\\r"),
            b'\t' => out.push_str("\\t"),
            0x20..=0x7e => out.push(b as char),
            other => out.push_str(&format!("\\x{other:02x}")),
        }
    }
    out.push('"');
    out
}

/// Parse a pattern spec: `<scope> <kind>:<value> [@offset]`.
pub fn parse_pattern_spec(spec: &str) -> Result<PayloadPattern, String> {
    let spec = spec.trim();
    let (scope_word, rest) = spec
        .split_once(' ')
        .ok_or_else(|| format!("pattern `{spec}` missing scope"))?;
    let scope = PatternScope::parse(scope_word)
        .ok_or_else(|| format!("unknown pattern scope `{scope_word}`"))?;
    let rest = rest.trim_start();
    let (pattern, tail) = if let Some(body) = rest.strip_prefix("lit:") {
        let (bytes, tail) = unescape_quoted(body)?;
        (
            PayloadPattern::literal(&bytes, scope).map_err(|e| e.to_string())?,
            tail,
        )
    } else if let Some(body) = rest.strip_prefix("hex:") {
        let end = body
            .find(|c: char| c.is_whitespace())
            .unwrap_or(body.len());
        (
            PayloadPattern::hex(&body[..end], scope).map_err(|e| e.to_string())?,
            &body[end..],
        )
    } else if let Some(body) = rest.strip_prefix("re:") {
        let (src, tail) = unquote_regex(body)?;
        (
            PayloadPattern::regex(&src, scope).map_err(|e| e.to_string())?,
            tail,
        )
    } else {
        return Err(format!("pattern body must start with lit:, hex: or re: (got `{rest}`)"));
    };
    let tail = tail.trim();
    if tail.is_empty() {
        return Ok(pattern);
    }
    if let Some(off) = tail.strip_prefix('@') {
        let off: usize = off
            .trim()
            .parse()
            .map_err(|_| format!("bad offset `{tail}`"))?;
        return Ok(pattern.with_offset(off));
    }
    Err(format!("unexpected trailing `{tail}` in pattern spec"))
}

/// Canonical text form of one pattern.
pub fn pattern_spec_canonical(pat: &PayloadPattern) -> String {
    use crate::filter::PatternKind;
    let body = match &pat.kind {
        PatternKind::Literal(b) => format!("lit:{}", escape_bytes(b)),
        PatternKind::Hex(b) => format!(
            "hex:{}",
            b.iter().map(|x| format!("{x:02X}")).collect::<String>()
        ),
        PatternKind::Regex(re) => format!("re:{}", quote_regex(re.as_str())),
    };
    match pat.offset_hint {
        Some(off) => format!("{} {} @{}", pat.scope, body, off),
        None => format!("{} {}", pat.scope, body),
    }
}

fn canonical_signature_text(sig: &Signature) -> String {
    let mut out = String::new();
    out.push_str(&format!("id: {}\n", sig.id));
    out.push_str(&format!("kind: {}\n", sig.kind.name()));
    out.push_str(&format!("category: {}\n", sig.category.name()));
    if let Some(cve) = &sig.cve_id {
        out.push_str(&format!("cve: {cve}\n"));
    }
    out.push_str(&format!("severity: {}\n", sig.severity.name()));
    if let Some(filter) = &sig.filter {
        // canonical form is the pretty-printed parse when it parses
        match parse_filter(filter) {
            Ok(ast) => out.push_str(&format!("filter: {ast}\n")),
            Err(_) => out.push_str(&format!("filter: {filter}\n")),
        }
    }
    if sig.kind == SigKind::Network && !sig.patterns.is_empty() {
        out.push_str(&format!(
            "match_mode: {}\n",
            match sig.match_mode {
                MatchMode::All => "all",
                MatchMode::Any => "any",
            }
        ));
        for spec in &sig.patterns {
            match parse_pattern_spec(spec) {
                Ok(pat) => out.push_str(&format!("pattern: {}\n", pattern_spec_canonical(&pat))),
                Err(_) => out.push_str(&format!("pattern: {spec}\n")),
            }
        }
    }
    if let Some(lp) = &sig.log_pattern {
        out.push_str(&format!("log_pattern: re:{}\n", quote_regex(lp)));
    }
    for (k, v) in &sig.attributes {
        out.push_str(&format!("attr: {k}={v}\n"));
    }
    for r in &sig.references {
        out.push_str(&format!("reference: {r}\n"));
    }
    out.push_str(&format!("reconstructed: {}\n", sig.reconstructed));
    out
}

/// Indexed, immutable signature database.
#[derive(Debug, Default)]
pub struct SignatureDb {
    sigs: Vec<Signature>,
    by_id: BTreeMap<String, usize>,
    by_category: BTreeMap<AttackCategory, Vec<usize>>,
    /// NETWORK signatures indexed by statically-determined destination
    /// port.
    by_dst_port: BTreeMap<u16, Vec<usize>>,
    /// NETWORK signatures whose filter does not pin destination ports.
    port_unconstrained: Vec<usize>,
    warnings: Vec<String>,
}

impl SignatureDb {
    pub fn empty() -> SignatureDb {
        SignatureDb::default()
    }

    /// The signature set bundled with the tool: MikroTik-CVE network
    /// signatures plus generic router-attack log signatures. Every
    /// bundled signature is a reconstruction and marked as such.
    pub fn builtin() -> SignatureDb {
        let mut db = SignatureDb::empty();
        db.merge_text(BUILTIN_CVE_DB, "builtin:mikrotik-cve", true)
            .expect("bundled CVE db must load");
        db.merge_text(BUILTIN_GENERIC_DB, "builtin:router-generic", true)
            .expect("bundled generic db must load");
        db
    }

    pub fn len(&self) -> usize {
        self.sigs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Signature> {
        self.sigs.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Signature> {
        self.by_id.get(id).map(|&i| &self.sigs[i])
    }

    pub fn by_category(&self, cat: AttackCategory) -> Vec<&Signature> {
        self.by_category
            .get(&cat)
            .map(|v| v.iter().map(|&i| &self.sigs[i]).collect())
            .unwrap_or_default()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// NETWORK signatures that could match a flow touching the given
    /// ports, in load order without duplicates.
    pub fn network_candidates(&self, ports: &[u16]) -> Vec<&Signature> {
        let mut idx: Vec<usize> = self.port_unconstrained.clone();
        for port in ports {
            if let Some(v) = self.by_dst_port.get(port) {
                idx.extend_from_slice(v);
            }
        }
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter().map(|i| &self.sigs[i]).collect()
    }

    pub fn network_signatures(&self) -> impl Iterator<Item = &Signature> {
        self.sigs.iter().filter(|s| s.kind == SigKind::Network)
    }

    pub fn log_signatures(&self) -> impl Iterator<Item = &Signature> {
        self.sigs.iter().filter(|s| s.kind == SigKind::Log)
    }

    fn insert(&mut self, sig: Signature) -> Result<(), SigDbError> {
        if self.by_id.contains_key(&sig.id) {
            return Err(SigDbError::DuplicateId(sig.id));
        }
        sig.compile()?;
        let idx = self.sigs.len();
        self.by_id.insert(sig.id.clone(), idx);
        self.by_category.entry(sig.category).or_default().push(idx);
        if sig.kind == SigKind::Network {
            match sig.static_dst_ports() {
                Some(ports) => {
                    for &p in ports {
                        self.by_dst_port.entry(p).or_default().push(idx);
                    }
                }
                None => self.port_unconstrained.push(idx),
            }
        }
        self.sigs.push(sig);
        Ok(())
    }

    /// Parse one file body into this database. All-or-nothing: on
    /// error the database is left untouched.
    pub fn merge_text(&mut self, text: &str, file: &str, strict: bool) -> Result<(), SigDbError> {
        let (sigs, warnings) = parse_db_text(text, file, strict)?;
        // validate everything before inserting anything
        let mut staged: Vec<Signature> = Vec::new();
        for sig in sigs {
            let findings = validate_signature(&sig);
            if let Some(f) = findings.first() {
                return Err(match f.code {
                    FindingCode::InvalidFilter => SigDbError::InvalidFilter {
                        id: sig.id.clone(),
                        source: parse_filter(sig.filter.as_deref().unwrap_or(""))
                            .err()
                            .unwrap_or(FilterError::Syntax {
                                col: 1,
                                expected: "filter".to_string(),
                            }),
                    },
                    _ => SigDbError::InvalidPattern {
                        id: sig.id.clone(),
                        msg: format!("{}: {}", f.code, f.detail),
                    },
                });
            }
            if self.by_id.contains_key(&sig.id) || staged.iter().any(|s| s.id == sig.id) {
                return Err(SigDbError::DuplicateId(sig.id));
            }
            staged.push(sig);
        }
        for sig in staged {
            self.insert(sig)?;
        }
        self.warnings.extend(warnings);
        Ok(())
    }

    pub fn load_file(path: &Path, strict: bool) -> Result<SignatureDb, SigDbError> {
        let mut db = SignatureDb::empty();
        db.merge_file(path, strict)?;
        Ok(db)
    }

    pub fn merge_file(&mut self, path: &Path, strict: bool) -> Result<(), SigDbError> {
        let text = std::fs::read_to_string(path).map_err(|source| SigDbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.merge_text(&text, &path.display().to_string(), strict)
    }

    /// Canonical serialization: signatures sorted by id, canonical
    /// field forms. Reloading the output yields an equal database.
    pub fn to_canonical_string(&self) -> String {
        let mut ids: Vec<&String> = self.by_id.keys().collect();
        ids.sort();
        let mut out = String::new();
        for (i, id) in ids.iter().enumerate() {
            if i > 0 {
                out.push_str("---\n");
            }
            out.push_str(&canonical_signature_text(self.get(id).unwrap()));
        }
        out
    }
}

impl PartialEq for SignatureDb {
    fn eq(&self, other: &SignatureDb) -> bool {
        self.to_canonical_string() == other.to_canonical_string()
    }
}

fn parse_db_text(
    text: &str,
    file: &str,
    strict: bool,
) -> Result<(Vec<Signature>, Vec<String>), SigDbError> {
    let mut sigs = Vec::new();
    let mut warnings = Vec::new();
    let mut fields: Vec<(usize, String, String)> = Vec::new();

    let mut flush = |fields: &mut Vec<(usize, String, String)>| -> Result<(), SigDbError> {
        if fields.is_empty() {
            return Ok(());
        }
        let sig = build_signature(fields, file, strict, &mut warnings)?;
        sigs.push(sig);
        fields.clear();
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "---" {
            flush(&mut fields)?;
            continue;
        }
        match line.split_once(':') {
            Some((key, value)) => {
                fields.push((lineno, key.trim().to_string(), value.trim().to_string()));
            }
            None => {
                return Err(SigDbError::Parse {
                    file: file.to_string(),
                    line: lineno,
                    msg: format!("expected `key: value`, got `{line}`"),
                })
            }
        }
    }
    flush(&mut fields)?;
    Ok((sigs, warnings))
}

fn build_signature(
    fields: &[(usize, String, String)],
    file: &str,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<Signature, SigDbError> {
    let err = |line: usize, msg: String| SigDbError::Parse {
        file: file.to_string(),
        line,
        msg,
    };
    let mut id = None;
    let mut kind = None;
    let mut category = None;
    let mut cve = None;
    let mut severity = None;
    let mut filter = None;
    let mut match_mode = None;
    let mut patterns = Vec::new();
    let mut log_pattern = None;
    let mut references = Vec::new();
    let mut reconstructed = false;
    let mut attributes = BTreeMap::new();
    let first_line = fields.first().map(|f| f.0).unwrap_or(0);

    for (line, key, value) in fields {
        let line = *line;
        match key.as_str() {
            "id" => id = Some(value.clone()),
            "kind" => {
                kind = Some(match value.as_str() {
                    "network" => SigKind::Network,
                    "log" => SigKind::Log,
                    other => return Err(err(line, format!("unknown kind `{other}`"))),
                })
            }
            "category" => {
                category = Some(AttackCategory::parse(value).ok_or_else(|| {
                    err(line, format!("unknown category `{value}`"))
                })?)
            }
            "cve" => cve = Some(value.clone()),
            "severity" => {
                severity = Some(
                    Severity::parse(value)
                        .ok_or_else(|| err(line, format!("unknown severity `{value}`")))?,
                )
            }
            "filter" => filter = Some(value.clone()),
            "match_mode" => {
                match_mode = Some(match value.as_str() {
                    "all" => MatchMode::All,
                    "any" => MatchMode::Any,
                    other => return Err(err(line, format!("unknown match_mode `{other}`"))),
                })
            }
            "pattern" => patterns.push(value.clone()),
            "log_pattern" => {
                let body = value
                    .strip_prefix("re:")
                    .ok_or_else(|| err(line, "log_pattern must use re:\"...\"".to_string()))?;
                let (src, tail) =
                    unquote_regex(body).map_err(|m| err(line, format!("log_pattern: {m}")))?;
                if !tail.trim().is_empty() {
                    return Err(err(line, "trailing text after log_pattern".to_string()));
                }
                log_pattern = Some(src);
            }
            "reference" => references.push(value.clone()),
            "reconstructed" => {
                reconstructed = match value.as_str() {
                    "true" => true,
                    "false" => false,
                    other => return Err(err(line, format!("bad reconstructed `{other}`"))),
                }
            }
            "attr" => match value.split_once('=') {
                Some((k, v)) => {
                    attributes.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => return Err(err(line, format!("attr must be key=value, got `{value}`"))),
            },
            unknown => {
                let msg = format!("{file}:{line}: unknown key `{unknown}`");
                if strict {
                    return Err(err(line, format!("unknown key `{unknown}`")));
                }
                warnings.push(msg);
            }
        }
    }

    let id = id.ok_or_else(|| err(first_line, "missing id".to_string()))?;
    let kind = kind.ok_or_else(|| err(first_line, format!("signature `{id}` missing kind")))?;
    let category = category
        .ok_or_else(|| err(first_line, format!("signature `{id}` missing category")))?;
    let mut sig = Signature::new(&id, kind, category);
    sig.cve_id = cve;
    sig.severity = severity.unwrap_or(Severity::Medium);
    sig.filter = filter;
    sig.match_mode = match_mode.unwrap_or(MatchMode::All);
    sig.patterns = patterns;
    sig.log_pattern = log_pattern;
    sig.references = references;
    sig.reconstructed = reconstructed;
    sig.attributes = attributes;
    Ok(sig)
}
