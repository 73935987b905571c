//! Berkeley-Packet-Filter-compatible expression subset plus payload
//! patterns: the executable form of the network signatures.
//!
//! Grammar: primitives `tcp|udp|icmp|gre`, `[src|dst] host A.B.C.D`,
//! `[src|dst] net A.B.C.D/len`, `[src|dst] port N`,
//! `[src|dst] portrange N-M`; operators `not` > `and` > `or`;
//! parentheses. A bare qualifier means either direction.

mod eval;
mod parse;
mod pattern;

pub use eval::eval_filter;
pub use parse::{parse_filter, FilterError};
pub use pattern::{
    match_payload, match_payload_ranges, MatchTarget, PatternError, PatternKind, PatternScope,
    PayloadPattern,
};

use std::fmt;
use std::net::Ipv4Addr;

pub const MAX_FILTER_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    Src,
    Dst,
    Either,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtoKind {
    Tcp,
    Udp,
    Icmp,
    Gre,
}

impl fmt::Display for ProtoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtoKind::Tcp => f.write_str("tcp"),
            ProtoKind::Udp => f.write_str("udp"),
            ProtoKind::Icmp => f.write_str("icmp"),
            ProtoKind::Gre => f.write_str("gre"),
        }
    }
}

/// IPv4 network in CIDR form; host bits are ignored when matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cidr {
    pub addr: Ipv4Addr,
    pub prefix: u8,
}

impl Cidr {
    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        let mask = if self.prefix == 0 {
            0
        } else {
            u32::MAX << (32 - self.prefix as u32)
        };
        (u32::from(ip) & mask) == (u32::from(self.addr) & mask)
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FilterAst {
    And(Box<FilterAst>, Box<FilterAst>),
    Or(Box<FilterAst>, Box<FilterAst>),
    Not(Box<FilterAst>),
    Proto(ProtoKind),
    Host(Dir, Ipv4Addr),
    Net(Dir, Cidr),
    Port(Dir, u16),
    PortRange(Dir, u16, u16),
}

impl FilterAst {
    pub fn depth(&self) -> usize {
        match self {
            FilterAst::And(l, r) | FilterAst::Or(l, r) => 1 + l.depth().max(r.depth()),
            FilterAst::Not(x) => 1 + x.depth(),
            _ => 1,
        }
    }
}

fn dir_prefix(dir: &Dir) -> &'static str {
    match dir {
        Dir::Src => "src ",
        Dir::Dst => "dst ",
        Dir::Either => "",
    }
}

// precedence levels for the printer: or=0, and=1, not=2, primary=3
fn prec(ast: &FilterAst) -> u8 {
    match ast {
        FilterAst::Or(_, _) => 0,
        FilterAst::And(_, _) => 1,
        FilterAst::Not(_) => 2,
        _ => 3,
    }
}

fn fmt_child(ast: &FilterAst, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if prec(ast) < min {
        write!(f, "({ast})")
    } else {
        write!(f, "{ast}")
    }
}

impl fmt::Display for FilterAst {
    /// Canonical text form; reparsing yields a structurally identical
    /// tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterAst::And(l, r) => {
                fmt_child(l, 1, f)?;
                f.write_str(" and ")?;
                // right child at higher min keeps `a and b and c`
                // left-associated on reparse
                fmt_child(r, 2, f)
            }
            FilterAst::Or(l, r) => {
                fmt_child(l, 0, f)?;
                f.write_str(" or ")?;
                fmt_child(r, 1, f)
            }
            FilterAst::Not(x) => {
                f.write_str("not ")?;
                fmt_child(x, 2, f)
            }
            FilterAst::Proto(p) => write!(f, "{p}"),
            FilterAst::Host(d, ip) => write!(f, "{}host {ip}", dir_prefix(d)),
            FilterAst::Net(d, net) => write!(f, "{}net {net}", dir_prefix(d)),
            FilterAst::Port(d, n) => write!(f, "{}port {n}", dir_prefix(d)),
            FilterAst::PortRange(d, lo, hi) => {
                write!(f, "{}portrange {lo}-{hi}", dir_prefix(d))
            }
        }
    }
}
