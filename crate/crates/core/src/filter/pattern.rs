//! Payload patterns: the content-matching half of a network signature.
//! BPF expressions cannot express content, so signatures pair a filter
//! with one or more of these.

use std::fmt;

use regex::bytes::Regex;
use thiserror::Error;

use crate::model::{Direction, PacketRecord, StreamPayload};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("pattern scope {scope} does not accept {target} input")]
    ScopeMismatch { scope: String, target: String },
    #[error("empty pattern")]
    Empty,
    #[error("bad hex encoding: {0}")]
    BadHex(String),
    #[error("regex error: {0}")]
    BadRegex(String),
}

/// Pattern body. Literal and hex both match raw bytes; regex is
/// byte-oriented, no backreferences, linear-time.
#[derive(Debug, Clone)]
pub enum PatternKind {
    Literal(Vec<u8>),
    Hex(Vec<u8>),
    Regex(Regex),
}

impl PartialEq for PatternKind {
    fn eq(&self, other: &PatternKind) -> bool {
        match (self, other) {
            (PatternKind::Literal(a), PatternKind::Literal(b)) => a == b,
            (PatternKind::Hex(a), PatternKind::Hex(b)) => a == b,
            (PatternKind::Regex(a), PatternKind::Regex(b)) => a.as_str() == b.as_str(),
            _ => false,
        }
    }
}

impl Eq for PatternKind {}

/// Where a pattern is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternScope {
    Packet,
    StreamFwd,
    StreamRev,
    StreamEither,
}

impl fmt::Display for PatternScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PatternScope::Packet => "packet",
            PatternScope::StreamFwd => "stream_fwd",
            PatternScope::StreamRev => "stream_rev",
            PatternScope::StreamEither => "stream_either",
        };
        f.write_str(s)
    }
}

impl PatternScope {
    pub fn parse(s: &str) -> Option<PatternScope> {
        match s {
            "packet" => Some(PatternScope::Packet),
            "stream_fwd" => Some(PatternScope::StreamFwd),
            "stream_rev" => Some(PatternScope::StreamRev),
            "stream_either" => Some(PatternScope::StreamEither),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadPattern {
    pub kind: PatternKind,
    pub scope: PatternScope,
    /// When set, only a match starting exactly at this offset counts.
    pub offset_hint: Option<usize>,
}

impl PayloadPattern {
    pub fn literal(bytes: &[u8], scope: PatternScope) -> Result<PayloadPattern, PatternError> {
        if bytes.is_empty() {
            return Err(PatternError::Empty);
        }
        Ok(PayloadPattern {
            kind: PatternKind::Literal(bytes.to_vec()),
            scope,
            offset_hint: None,
        })
    }

    pub fn hex(hex: &str, scope: PatternScope) -> Result<PayloadPattern, PatternError> {
        let cleaned: String = hex.chars().filter(|c| !c.is_whitespace()).collect();
        if cleaned.is_empty() {
            return Err(PatternError::Empty);
        }
        if !cleaned.len().is_multiple_of(2) || !cleaned.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(PatternError::BadHex(hex.to_string()));
        }
        let bytes = (0..cleaned.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&cleaned[i..i + 2], 16).unwrap())
            .collect();
        Ok(PayloadPattern {
            kind: PatternKind::Hex(bytes),
            scope,
            offset_hint: None,
        })
    }

    pub fn regex(src: &str, scope: PatternScope) -> Result<PayloadPattern, PatternError> {
        if src.is_empty() {
            return Err(PatternError::Empty);
        }
        let re = Regex::new(src).map_err(|e| PatternError::BadRegex(e.to_string()))?;
        Ok(PayloadPattern {
            kind: PatternKind::Regex(re),
            scope,
            offset_hint: None,
        })
    }

    pub fn with_offset(mut self, offset: usize) -> PayloadPattern {
        self.offset_hint = Some(offset);
        self
    }
}

/// Input a pattern is matched against.
pub enum MatchTarget<'a> {
    Packet(&'a PacketRecord),
    Stream(&'a StreamPayload),
}

fn find_literal(hay: &[u8], needle: &[u8], base: usize, out: &mut Vec<(usize, usize)>) {
    if needle.is_empty() || hay.len() < needle.len() {
        return;
    }
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        if &hay[i..i + needle.len()] == needle {
            out.push((base + i, base + i + needle.len()));
            i += needle.len(); // non-overlapping
        } else {
            i += 1;
        }
    }
}

fn find_regex(hay: &[u8], re: &Regex, base: usize, out: &mut Vec<(usize, usize)>) {
    for m in re.find_iter(hay) {
        out.push((base + m.start(), base + m.end()));
    }
}

fn match_runs(pat: &PayloadPattern, runs: &[(usize, &[u8])]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &(base, run) in runs {
        match &pat.kind {
            PatternKind::Literal(b) | PatternKind::Hex(b) => find_literal(run, b, base, &mut out),
            PatternKind::Regex(re) => find_regex(run, re, base, &mut out),
        }
    }
    if let Some(off) = pat.offset_hint {
        out.retain(|&(s, _)| s == off);
    }
    out
}

/// Like [`match_payload`] but returns (start, end) byte ranges.
pub fn match_payload_ranges(
    pat: &PayloadPattern,
    target: &MatchTarget<'_>,
) -> Result<Vec<(usize, usize)>, PatternError> {
    match (pat.scope, target) {
        (PatternScope::Packet, MatchTarget::Packet(pkt)) => {
            Ok(match_runs(pat, &[(0, pkt.payload.as_slice())]))
        }
        (PatternScope::Packet, MatchTarget::Stream(_)) => Err(PatternError::ScopeMismatch {
            scope: pat.scope.to_string(),
            target: "stream".to_string(),
        }),
        (scope, MatchTarget::Stream(stream)) => {
            let dir_ok = match scope {
                PatternScope::StreamFwd => stream.direction == Direction::Fwd,
                PatternScope::StreamRev => stream.direction == Direction::Rev,
                PatternScope::StreamEither => true,
                PatternScope::Packet => unreachable!(),
            };
            if !dir_ok {
                return Err(PatternError::ScopeMismatch {
                    scope: pat.scope.to_string(),
                    target: format!("{} stream", stream.direction),
                });
            }
            Ok(match_runs(pat, &stream.contiguous_runs()))
        }
        (_, MatchTarget::Packet(_)) => Err(PatternError::ScopeMismatch {
            scope: pat.scope.to_string(),
            target: "packet".to_string(),
        }),
    }
}

/// Return all non-overlapping leftmost match offsets of the pattern in
/// the target. Matching never crosses a reassembly gap.
pub fn match_payload(
    pat: &PayloadPattern,
    target: &MatchTarget<'_>,
) -> Result<Vec<usize>, PatternError> {
    Ok(match_payload_ranges(pat, target)?
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}
