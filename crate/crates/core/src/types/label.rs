//! Flow labels and the header-matching rules that decide what a filter blocks.
//!
//! A label names a destination exactly and optionally pins the source (exact
//! address or prefix), protocol, and ports. Unpinned fields are wildcards.
//! Text form: `src>dst[:proto[:sport>dport]]`, e.g. `*>10.1.0.10`,
//! `10.0.0.0/8>10.1.0.10:tcp:*>80`.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::types::addr::Prefix;

pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

/// The fields of a data packet a flow label can match on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PacketHeader {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub proto: u8,
    pub sport: u16,
    pub dport: u16,
}

/// Source side of a flow label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SrcMatch {
    Any,
    /// Exact addresses are stored as /32 prefixes.
    Prefix(Prefix),
}

impl SrcMatch {
    pub fn exact(&self) -> Option<Ipv4Addr> {
        match self {
            SrcMatch::Prefix(p) if p.is_host() => Some(p.addr()),
            _ => None,
        }
    }

    fn contains(&self, ip: Ipv4Addr) -> bool {
        match self {
            SrcMatch::Any => true,
            SrcMatch::Prefix(p) => p.contains(ip),
        }
    }

    fn covers(&self, other: &SrcMatch) -> bool {
        match (self, other) {
            (SrcMatch::Any, _) => true,
            (SrcMatch::Prefix(_), SrcMatch::Any) => false,
            (SrcMatch::Prefix(g), SrcMatch::Prefix(s)) => g.covers(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowLabel {
    pub src: SrcMatch,
    pub dst: Ipv4Addr,
    pub proto: Option<u8>,
    pub sport: Option<u16>,
    pub dport: Option<u16>,
}

impl FlowLabel {
    /// Label matching everything sent to `dst`.
    pub fn to_dst(dst: Ipv4Addr) -> FlowLabel {
        FlowLabel {
            src: SrcMatch::Any,
            dst,
            proto: None,
            sport: None,
            dport: None,
        }
    }

    pub fn src_dst(src: Ipv4Addr, dst: Ipv4Addr) -> FlowLabel {
        FlowLabel {
            src: SrcMatch::Prefix(Prefix::host(src)),
            ..FlowLabel::to_dst(dst)
        }
    }

    /// The most specific label for a header: every field pinned.
    pub fn exact(h: &PacketHeader) -> FlowLabel {
        FlowLabel {
            src: SrcMatch::Prefix(Prefix::host(h.src)),
            dst: h.dst,
            proto: Some(h.proto),
            sport: Some(h.sport),
            dport: Some(h.dport),
        }
    }

    pub fn matches(&self, h: &PacketHeader) -> bool {
        self.dst == h.dst
            && self.src.contains(h.src)
            && field_matches(self.proto, h.proto)
            && field_matches(self.sport, h.sport)
            && field_matches(self.dport, h.dport)
    }

    /// True iff every header matched by `specific` is also matched by `self`.
    pub fn subsumes(&self, specific: &FlowLabel) -> bool {
        self.dst == specific.dst
            && self.src.covers(&specific.src)
            && field_covers(self.proto, specific.proto)
            && field_covers(self.sport, specific.sport)
            && field_covers(self.dport, specific.dport)
    }
}

fn field_matches<T: PartialEq>(want: Option<T>, got: T) -> bool {
    want.is_none_or(|w| w == got)
}

fn field_covers<T: PartialEq>(general: Option<T>, specific: Option<T>) -> bool {
    match (general, specific) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(g), Some(s)) => g == s,
    }
}

/// Convenience for tests and flows.
pub fn flow_label_matches(label: &FlowLabel, header: &PacketHeader) -> bool {
    label.matches(header)
}

pub fn flow_label_subsumes(general: &FlowLabel, specific: &FlowLabel) -> bool {
    general.subsumes(specific)
}

fn fmt_opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "*".to_string(), |x| x.to_string())
}

fn proto_name(p: u8) -> String {
    match p {
        PROTO_TCP => "tcp".into(),
        PROTO_UDP => "udp".into(),
        PROTO_ICMP => "icmp".into(),
        other => other.to_string(),
    }
}

fn parse_proto(s: &str) -> Result<Option<u8>, ParseError> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "*" => None,
        "tcp" => Some(PROTO_TCP),
        "udp" => Some(PROTO_UDP),
        "icmp" => Some(PROTO_ICMP),
        n => Some(n.parse().map_err(|_| ParseError::new(format!("bad protocol {s:?}")))?),
    })
}

fn parse_port(s: &str) -> Result<Option<u16>, ParseError> {
    if s == "*" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| ParseError::new(format!("bad port {s:?}")))
}

impl fmt::Display for SrcMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SrcMatch::Any => f.write_str("*"),
            SrcMatch::Prefix(p) => write!(f, "{p}"),
        }
    }
}

impl fmt::Display for FlowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}>{}", self.src, self.dst)?;
        if self.sport.is_some() || self.dport.is_some() {
            write!(
                f,
                ":{}:{}>{}",
                self.proto.map_or_else(|| "*".into(), proto_name),
                fmt_opt(self.sport),
                fmt_opt(self.dport)
            )
        } else if let Some(p) = self.proto {
            write!(f, ":{}", proto_name(p))
        } else {
            Ok(())
        }
    }
}

impl FromStr for FlowLabel {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<FlowLabel, ParseError> {
        let bad = || ParseError::new(format!("flow label {s:?} is not src>dst[:proto[:sport>dport]]"));
        let (src, rest) = s.split_once('>').ok_or_else(bad)?;
        let src = if src == "*" {
            SrcMatch::Any
        } else {
            SrcMatch::Prefix(src.parse()?)
        };
        let mut parts = rest.splitn(3, ':');
        let dst_text = parts.next().ok_or_else(bad)?;
        let dst = dst_text
            .parse::<Ipv4Addr>()
            .map_err(|_| ParseError::new(format!("label destination {dst_text:?} must be an exact IPv4 address")))?;
        let proto = parts.next().map(parse_proto).transpose()?.flatten();
        let (sport, dport) = match parts.next() {
            Some(ports) => {
                let (sp, dp) = ports.split_once('>').ok_or_else(bad)?;
                (parse_port(sp)?, parse_port(dp)?)
            }
            None => (None, None),
        };
        Ok(FlowLabel {
            src,
            dst,
            proto,
            sport,
            dport,
        })
    }
}

impl Serialize for FlowLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FlowLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<FlowLabel, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for PacketHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}>{}:{}/{}",
            self.src,
            self.sport,
            self.dst,
            self.dport,
            proto_name(self.proto)
        )
    }
}
