//! Recursive-descent parser for the filter grammar. Errors carry
//! 1-based column positions.

use std::net::Ipv4Addr;

use thiserror::Error;

use super::{Cidr, Dir, FilterAst, ProtoKind, MAX_FILTER_DEPTH};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("syntax error at column {col}: expected {expected}")]
    Syntax { col: usize, expected: String },
    #[error("invalid value at column {col}: {msg}")]
    Value { col: usize, msg: String },
}

impl FilterError {
    pub fn column(&self) -> usize {
        match self {
            FilterError::Syntax { col, .. } | FilterError::Value { col, .. } => *col,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Num(u64),
    Ip(Ipv4Addr),
    Slash,
    Dash,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize, // 1-based
}

fn lex(text: &str) -> Result<Vec<Spanned>, FilterError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let col = i + 1;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                out.push(Spanned { tok: Tok::LParen, col });
                i += 1;
            }
            b')' => {
                out.push(Spanned { tok: Tok::RParen, col });
                i += 1;
            }
            b'/' => {
                out.push(Spanned { tok: Tok::Slash, col });
                i += 1;
            }
            b'-' => {
                out.push(Spanned { tok: Tok::Dash, col });
                i += 1;
            }
            b'0'..=b'9' | b'a'..=b'z' | b'A'..=b'Z' | b'.' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i], b'0'..=b'9' | b'a'..=b'z' | b'A'..=b'Z' | b'.' | b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = if word.contains('.') {
                    match word.parse::<Ipv4Addr>() {
                        Ok(ip) => Tok::Ip(ip),
                        Err(_) => {
                            return Err(FilterError::Value {
                                col,
                                msg: format!("bad IPv4 address `{word}`"),
                            })
                        }
                    }
                } else if word.bytes().all(|b| b.is_ascii_digit()) {
                    match word.parse::<u64>() {
                        Ok(n) => Tok::Num(n),
                        Err(_) => {
                            return Err(FilterError::Value {
                                col,
                                msg: format!("number out of range `{word}`"),
                            })
                        }
                    }
                } else {
                    Tok::Word(word.to_ascii_lowercase())
                };
                out.push(Spanned { tok, col });
            }
            other => {
                return Err(FilterError::Syntax {
                    col,
                    expected: format!("valid token, found `{}`", other as char),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn cur_col(&self) -> usize {
        self.peek().map(|s| s.col).unwrap_or(self.end_col)
    }

    fn bump(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Spanned { tok: Tok::Word(w), .. }) => Some(w.as_str()),
            _ => None,
        }
    }

    fn syntax(&self, expected: &str) -> FilterError {
        FilterError::Syntax {
            col: self.cur_col(),
            expected: expected.to_string(),
        }
    }

    fn parse_or(&mut self, depth: usize) -> Result<FilterAst, FilterError> {
        self.check_depth(depth)?;
        let mut lhs = self.parse_and(depth + 1)?;
        while self.expect_word() == Some("or") {
            self.bump();
            let rhs = self.parse_and(depth + 1)?;
            lhs = FilterAst::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self, depth: usize) -> Result<FilterAst, FilterError> {
        self.check_depth(depth)?;
        let mut lhs = self.parse_unary(depth + 1)?;
        while self.expect_word() == Some("and") {
            self.bump();
            let rhs = self.parse_unary(depth + 1)?;
            lhs = FilterAst::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self, depth: usize) -> Result<FilterAst, FilterError> {
        self.check_depth(depth)?;
        if self.expect_word() == Some("not") {
            self.bump();
            let inner = self.parse_unary(depth + 1)?;
            return Ok(FilterAst::Not(Box::new(inner)));
        }
        self.parse_primary(depth)
    }

    fn check_depth(&self, depth: usize) -> Result<(), FilterError> {
        if depth > MAX_FILTER_DEPTH {
            return Err(FilterError::Value {
                col: self.cur_col(),
                msg: format!("expression deeper than {MAX_FILTER_DEPTH}"),
            });
        }
        Ok(())
    }

    fn parse_primary(&mut self, depth: usize) -> Result<FilterAst, FilterError> {
        match self.peek() {
            Some(Spanned { tok: Tok::LParen, .. }) => {
                self.bump();
                let inner = self.parse_or(depth + 1)?;
                match self.peek() {
                    Some(Spanned { tok: Tok::RParen, .. }) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.syntax("`)`")),
                }
            }
            Some(Spanned { tok: Tok::Word(w), .. }) => match w.as_str() {
                "tcp" => {
                    self.bump();
                    Ok(FilterAst::Proto(ProtoKind::Tcp))
                }
                "udp" => {
                    self.bump();
                    Ok(FilterAst::Proto(ProtoKind::Udp))
                }
                "icmp" => {
                    self.bump();
                    Ok(FilterAst::Proto(ProtoKind::Icmp))
                }
                "gre" => {
                    self.bump();
                    Ok(FilterAst::Proto(ProtoKind::Gre))
                }
                "src" => {
                    self.bump();
                    self.parse_qualifier(Dir::Src)
                }
                "dst" => {
                    self.bump();
                    self.parse_qualifier(Dir::Dst)
                }
                "host" | "net" | "port" | "portrange" => self.parse_qualifier(Dir::Either),
                other => Err(FilterError::Syntax {
                    col: self.cur_col(),
                    expected: format!(
                        "tcp, udp, icmp, gre, src, dst, host, net, port, portrange or `(`, found `{other}`"
                    ),
                }),
            },
            _ => Err(self.syntax("expression")),
        }
    }

    fn parse_qualifier(&mut self, dir: Dir) -> Result<FilterAst, FilterError> {
        let kw = match self.expect_word() {
            Some(k @ ("host" | "net" | "port" | "portrange")) => k.to_string(),
            _ => return Err(self.syntax("host, net, port or portrange")),
        };
        self.bump();
        match kw.as_str() {
            "host" => {
                let ip = self.parse_ip()?;
                Ok(FilterAst::Host(dir, ip))
            }
            "net" => {
                let ip = self.parse_ip()?;
                match self.peek() {
                    Some(Spanned { tok: Tok::Slash, .. }) => {
                        self.bump();
                    }
                    _ => return Err(self.syntax("`/` after network address")),
                }
                let (len, col) = self.parse_num()?;
                if len > 32 {
                    return Err(FilterError::Value {
                        col,
                        msg: format!("prefix length {len} exceeds 32"),
                    });
                }
                Ok(FilterAst::Net(
                    dir,
                    Cidr {
                        addr: ip,
                        prefix: len as u8,
                    },
                ))
            }
            "port" => {
                let port = self.parse_port()?;
                Ok(FilterAst::Port(dir, port))
            }
            "portrange" => {
                let lo = self.parse_port()?;
                match self.peek() {
                    Some(Spanned { tok: Tok::Dash, .. }) => {
                        self.bump();
                    }
                    _ => return Err(self.syntax("`-` in port range")),
                }
                let hi = self.parse_port()?;
                if lo > hi {
                    return Err(FilterError::Value {
                        col: self.cur_col(),
                        msg: format!("port range {lo}-{hi} is inverted"),
                    });
                }
                Ok(FilterAst::PortRange(dir, lo, hi))
            }
            _ => unreachable!(),
        }
    }

    fn parse_ip(&mut self) -> Result<Ipv4Addr, FilterError> {
        match self.peek() {
            Some(Spanned { tok: Tok::Ip(ip), .. }) => {
                let ip = *ip;
                self.bump();
                Ok(ip)
            }
            _ => Err(self.syntax("IPv4 address")),
        }
    }

    fn parse_num(&mut self) -> Result<(u64, usize), FilterError> {
        match self.peek() {
            Some(Spanned { tok: Tok::Num(n), col }) => {
                let v = (*n, *col);
                self.bump();
                Ok(v)
            }
            _ => Err(self.syntax("number")),
        }
    }

    fn parse_port(&mut self) -> Result<u16, FilterError> {
        let (n, col) = self.parse_num()?;
        if n > 65535 {
            return Err(FilterError::Value {
                col,
                msg: format!("port {n} exceeds 65535"),
            });
        }
        Ok(n as u16)
    }
}

/// Parse a filter expression. Total over the grammar; everything else
/// is rejected with a position-annotated error.
pub fn parse_filter(text: &str) -> Result<FilterAst, FilterError> {
    if !text.is_ascii() {
        return Err(FilterError::Value {
            col: text
                .char_indices()
                .find(|(_, c)| !c.is_ascii())
                .map(|(i, _)| i + 1)
                .unwrap_or(1),
            msg: "filter text must be ASCII".to_string(),
        });
    }
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(FilterError::Syntax {
            col: 1,
            expected: "non-empty expression".to_string(),
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.len() + 1,
    };
    let ast = p.parse_or(0)?;
    if p.peek().is_some() {
        return Err(p.syntax("end of expression"));
    }
    Ok(ast)
}
