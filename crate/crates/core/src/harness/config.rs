//! Scenario files: schema, parsing and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contract::RateSpec;
use crate::error::ConfigError;
use crate::node::Granularity;
use crate::types::{FlowLabel, PacketHeader, Prefix, ProtocolParams, PROTO_ICMP, PROTO_TCP, PROTO_UDP};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub nodes: Vec<NodeConfig>,
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub contracts: Vec<ContractConfig>,
    #[serde(default)]
    pub params: ProtocolParams,
    #[serde(default)]
    pub flows: Vec<FlowConfig>,
    #[serde(default)]
    pub classifiers: Vec<ClassifierConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forgeries: Vec<ForgeryConfig>,
    pub duration_ms: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKindConfig {
    Host,
    Router,
    Relay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorConfig {
    Compliant,
    Cooperative,
    IgnoreRequests,
    OnOff { on_ms: u64, off_ms: u64 },
    Spoofer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub kind: NodeKindConfig,
    pub address: Ipv4Addr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<Prefix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ProtocolParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_capacity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_capacity: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
    pub delay_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_pps: Option<u32>,
}

/// `edge` is `[provider, client]`. `r1` is what the client may send the
/// provider, `r2` what the provider may send the client.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub edge: [String; 2],
    pub r1: f64,
    pub r2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst1: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst2: Option<u32>,
}

impl ContractConfig {
    pub fn r1_spec(&self) -> RateSpec {
        RateSpec::with_default_burst(self.r1, self.burst1)
    }

    pub fn r2_spec(&self) -> RateSpec {
        RateSpec::with_default_burst(self.r2, self.burst2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Proto {
    Number(u8),
    Name(String),
}

impl Proto {
    pub fn number(&self) -> Option<u8> {
        match self {
            Proto::Number(n) => Some(*n),
            Proto::Name(s) => match s.to_ascii_lowercase().as_str() {
                "udp" => Some(PROTO_UDP),
                "tcp" => Some(PROTO_TCP),
                "icmp" => Some(PROTO_ICMP),
                _ => None,
            },
        }
    }
}

fn default_proto() -> Proto {
    Proto::Name("udp".into())
}

fn default_size() -> u32 {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vary {
    Src,
    Sport,
}

/// Stamp out `count` copies of a flow, `every_ms` apart, each with a
/// different source address or port.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Repeat {
    pub count: u32,
    pub every_ms: u64,
    pub vary: Vary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub id: String,
    pub src: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_addr: Option<Ipv4Addr>,
    pub dst: String,
    #[serde(default = "default_proto")]
    pub proto: Proto,
    #[serde(default)]
    pub sport: u16,
    #[serde(default)]
    pub dport: u16,
    pub rate_pps: f64,
    #[serde(default = "default_size")]
    pub size_bytes: u32,
    #[serde(default)]
    pub start_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_ms: Option<u64>,
    #[serde(default)]
    pub undesired: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<Repeat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub host: String,
    pub label: FlowLabel,
    #[serde(default)]
    pub detection_ms: u64,
    #[serde(default)]
    pub granularity: Granularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeKind {
    ToVictimGw,
    ToAttackerGw,
    ToAttacker,
    VerifyReply,
}

/// Messages a spoofer injects. `nonce` defaults to a fresh guess per copy;
/// `claimed_requester` defaults to the node the flow label names as victim.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeryConfig {
    pub from: String,
    pub to: String,
    pub kind: ForgeKind,
    pub label: FlowLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_path: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_requester: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonce: Option<u64>,
    #[serde(default)]
    pub start_ms: u64,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default)]
    pub every_ms: u64,
}

fn one() -> u32 {
    1
}

/// One concrete flow after `repeat` expansion.
#[derive(Debug, Clone)]
pub struct ExpandedFlow {
    pub name: String,
    pub config_index: usize,
    pub src: String,
    pub dst: String,
    pub header: PacketHeader,
    pub rate_pps: f64,
    pub size_bytes: u32,
    pub start_ms: u64,
    pub stop_ms: Option<u64>,
    pub undesired: bool,
}

impl NodeConfig {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            NodeKindConfig::Host => "host",
            NodeKindConfig::Router => "router",
            NodeKindConfig::Relay => "relay",
        }
    }
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str, origin: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::from_json(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ScenarioConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn node(&self, id: &str) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_params(&self, n: &NodeConfig) -> ProtocolParams {
        n.params.unwrap_or(self.params)
    }

    /// Node that owns `addr`: exact address first, then longest prefix.
    pub fn owner(&self, addr: Ipv4Addr) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.address == addr).or_else(|| {
            self.nodes
                .iter()
                .filter(|n| n.prefix.is_some_and(|p| p.contains(addr)))
                .max_by_key(|n| n.prefix.map(|p| p.prefix_len()))
        })
    }

    pub fn contract_between(&self, a: &str, b: &str) -> Option<&ContractConfig> {
        self.contracts
            .iter()
            .find(|c| (c.edge[0] == a && c.edge[1] == b) || (c.edge[0] == b && c.edge[1] == a))
    }

    pub fn links_of<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a LinkConfig> + 'a {
        self.links.iter().filter(move |l| l.a == id || l.b == id)
    }

    /// The single router a host is attached to.
    pub fn gateway_of<'a>(&'a self, host: &'a str) -> Option<&'a str> {
        self.links_of(host)
            .next()
            .map(|l| if l.a == host { l.b.as_str() } else { l.a.as_str() })
    }

    pub fn expand_flows(&self) -> Vec<ExpandedFlow> {
        let mut out = Vec::new();
        for (i, f) in self.flows.iter().enumerate() {
            let base_src = f
                .src_addr
                .or_else(|| self.node(&f.src).map(|n| n.address))
                .unwrap_or(Ipv4Addr::UNSPECIFIED);
            let dst = self.node(&f.dst).map(|n| n.address).unwrap_or(Ipv4Addr::UNSPECIFIED);
            let proto = f.proto.number().unwrap_or(PROTO_UDP);
            let copies = f.repeat.as_ref().map_or(1, |r| r.count.max(1));
            for k in 0..copies {
                let (mut src, mut sport, mut shift) = (base_src, f.sport, 0);
                if let Some(r) = &f.repeat {
                    shift = u64::from(k) * r.every_ms;
                    match r.vary {
                        Vary::Src => src = Ipv4Addr::from(u32::from(base_src).wrapping_add(k)),
                        Vary::Sport => sport = f.sport.wrapping_add(k as u16),
                    }
                }
                out.push(ExpandedFlow {
                    name: if copies == 1 { f.id.clone() } else { format!("{}#{k}", f.id) },
                    config_index: i,
                    src: f.src.clone(),
                    dst: f.dst.clone(),
                    header: PacketHeader {
                        src,
                        dst,
                        proto,
                        sport,
                        dport: f.dport,
                    },
                    rate_pps: f.rate_pps,
                    size_bytes: f.size_bytes,
                    start_ms: f.start_ms + shift,
                    stop_ms: f.stop_ms.map(|s| s + shift),
                    undesired: f.undesired,
                });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(ConfigError::invalid("name", "must not be empty"));
        }
        if self.duration_ms == 0 {
            return Err(ConfigError::invalid("duration_ms", "must be positive"));
        }
        self.params.validate("params")?;
        self.validate_nodes()?;
        self.validate_links()?;
        self.validate_contracts()?;
        self.validate_classifiers()?;
        self.validate_flows()?;
        self.validate_forgeries()?;
        Ok(())
    }

    fn validate_nodes(&self) -> Result<(), ConfigError> {
        if self.nodes.is_empty() {
            return Err(ConfigError::invalid("nodes", "at least one node is required"));
        }
        let mut ids = BTreeSet::new();
        let mut addrs = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let f = |k: &str| format!("nodes[{i}].{k}");
            if n.id.is_empty() {
                return Err(ConfigError::invalid(f("id"), "must not be empty"));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(ConfigError::invalid(f("id"), format!("duplicate node id {:?}", n.id)));
            }
            if let Some(prev) = addrs.insert(n.address, n.id.as_str()) {
                return Err(ConfigError::invalid(
                    f("address"),
                    format!("{} is already used by {prev:?}", n.address),
                ));
            }
            if let Some(p) = &n.params {
                p.validate(&f("params"))?;
            }
            if n.filter_capacity == Some(0) {
                return Err(ConfigError::invalid(f("filter_capacity"), "must be positive"));
            }
            if n.shadow_capacity == Some(0) {
                return Err(ConfigError::invalid(f("shadow_capacity"), "must be positive"));
            }
            if let Some(b) = &n.behavior {
                let ok = match n.kind {
                    NodeKindConfig::Host => !matches!(b, BehaviorConfig::Cooperative),
                    NodeKindConfig::Router => matches!(b, BehaviorConfig::Cooperative | BehaviorConfig::IgnoreRequests),
                    NodeKindConfig::Relay => false,
                };
                if !ok {
                    return Err(ConfigError::invalid(
                        f("behavior"),
                        format!("{b:?} does not apply to a {:?}", n.kind),
                    ));
                }
                if let BehaviorConfig::OnOff { on_ms, off_ms } = b {
                    if *on_ms == 0 || *off_ms == 0 {
                        return Err(ConfigError::invalid(f("behavior"), "on_ms and off_ms must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_links(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            for (k, end) in [("a", &l.a), ("b", &l.b)] {
                if self.node(end).is_none() {
                    return Err(ConfigError::invalid(format!("links[{i}].{k}"), format!("unknown node {end:?}")));
                }
            }
            if l.a == l.b {
                return Err(ConfigError::invalid(format!("links[{i}].b"), "a link needs two distinct ends"));
            }
            let key = if l.a < l.b { (&l.a, &l.b) } else { (&l.b, &l.a) };
            if !seen.insert(key) {
                return Err(ConfigError::invalid(
                    format!("links[{i}]"),
                    format!("duplicate link {}-{}", l.a, l.b),
                ));
            }
            if l.delay_ms == 0 {
                return Err(ConfigError::invalid(format!("links[{i}].delay_ms"), "must be positive"));
            }
            if l.capacity_pps == Some(0) {
                return Err(ConfigError::invalid(format!("links[{i}].capacity_pps"), "must be positive"));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind != NodeKindConfig::Host {
                continue;
            }
            let links: Vec<_> = self.links_of(&n.id).collect();
            if links.len() != 1 {
                return Err(ConfigError::invalid(
                    format!("nodes[{i}]"),
                    format!("host {:?} must have exactly one link, found {}", n.id, links.len()),
                ));
            }
            let gw = self.gateway_of(&n.id).expect("one link");
            if self.node(gw).is_some_and(|g| g.kind == NodeKindConfig::Host) {
                return Err(ConfigError::invalid(
                    format!("nodes[{i}]"),
                    format!("host {:?} is linked to another host", n.id),
                ));
            }
        }
        Ok(())
    }

    fn validate_contracts(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for (i, c) in self.contracts.iter().enumerate() {
            let f = |k: &str| format!("contracts[{i}].{k}");
            for end in &c.edge {
                if self.node(end).is_none() {
                    return Err(ConfigError::invalid(f("edge"), format!("unknown node {end:?}")));
                }
            }
            let (a, b) = (&c.edge[0], &c.edge[1]);
            if !self.links.iter().any(|l| (&l.a == a && &l.b == b) || (&l.a == b && &l.b == a)) {
                return Err(ConfigError::invalid(f("edge"), format!("{a} and {b} are not adjacent")));
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if !seen.insert(key) {
                return Err(ConfigError::invalid(f("edge"), format!("second contract for {a}-{b}")));
            }
            if self.node(a).is_some_and(|n| n.kind == NodeKindConfig::Host) {
                return Err(ConfigError::invalid(f("edge"), "the provider (first entry) cannot be a host"));
            }
            c.r1_spec().validate(&f("r1"))?;
            c.r2_spec().validate(&f("r2"))?;
        }
        Ok(())
    }

    fn validate_classifiers(&self) -> Result<(), ConfigError> {
        for (i, c) in self.classifiers.iter().enumerate() {
            let f = |k: &str| format!("classifiers[{i}].{k}");
            let Some(h) = self.node(&c.host) else {
                return Err(ConfigError::invalid(f("host"), format!("unknown node {:?}", c.host)));
            };
            if h.kind != NodeKindConfig::Host {
                return Err(ConfigError::invalid(f("host"), format!("{:?} is not a host", c.host)));
            }
            if self.owner(c.label.dst).map(|n| n.id.as_str()) != Some(c.host.as_str()) {
                return Err(ConfigError::invalid(
                    f("label"),
                    format!("destination {} does not belong to {}", c.label.dst, c.host),
                ));
            }
        }
        Ok(())
    }

    fn validate_flows(&self) -> Result<(), ConfigError> {
        let mut ids = BTreeSet::new();
        for (i, fl) in self.flows.iter().enumerate() {
            let f = |k: &str| format!("flows[{i}].{k}");
            if !ids.insert(fl.id.as_str()) {
                return Err(ConfigError::invalid(f("id"), format!("duplicate flow id {:?}", fl.id)));
            }
            for (k, name) in [("src", &fl.src), ("dst", &fl.dst)] {
                match self.node(name) {
                    None => return Err(ConfigError::invalid(f(k), format!("unknown node {name:?}"))),
                    Some(n) if n.kind != NodeKindConfig::Host => return Err(ConfigError::invalid(f(k), format!("{name:?} is not a host"))),
                    _ => {}
                }
            }
            if fl.src == fl.dst {
                return Err(ConfigError::invalid(f("dst"), "a flow cannot target its own source"));
            }
            if fl.proto.number().is_none() {
                return Err(ConfigError::invalid(f("proto"), "expected udp, tcp, icmp or a protocol number"));
            }
            if !(fl.rate_pps.is_finite() && fl.rate_pps > 0.0) {
                return Err(ConfigError::invalid(f("rate_pps"), "must be positive"));
            }
            if fl.size_bytes == 0 {
                return Err(ConfigError::invalid(f("size_bytes"), "must be positive"));
            }
            if fl.stop_ms.is_some_and(|s| s <= fl.start_ms) {
                return Err(ConfigError::invalid(f("stop_ms"), "must be after start_ms"));
            }
            if let Some(r) = &fl.repeat {
                if r.count == 0 {
                    return Err(ConfigError::invalid(f("repeat.count"), "must be positive"));
                }
            }
        }
        for ef in self.expand_flows() {
            let i = ef.config_index;
            if self.owner(ef.header.src).map(|n| n.id.as_str()) != Some(ef.src.as_str()) {
                let field = if self.flows[i].repeat.is_some() { "repeat" } else { "src_addr" };
                return Err(ConfigError::invalid(
                    format!("flows[{i}].{field}"),
                    format!("source address {} of {} does not belong to {}", ef.header.src, ef.name, ef.src),
                ));
            }
            if ef.undesired && !self.classifiers.iter().any(|c| c.host == ef.dst && c.label.matches(&ef.header)) {
                return Err(ConfigError::invalid(
                    format!("flows[{i}].undesired"),
                    format!("no classifier at {} matches {}", ef.dst, ef.header),
                ));
            }
        }
        Ok(())
    }

    fn validate_forgeries(&self) -> Result<(), ConfigError> {
        for (i, g) in self.forgeries.iter().enumerate() {
            let f = |k: &str| format!("forgeries[{i}].{k}");
            match self.node(&g.from) {
                Some(n) if n.kind == NodeKindConfig::Host && n.behavior == Some(BehaviorConfig::Spoofer) => {}
                Some(_) => return Err(ConfigError::invalid(f("from"), "forgeries come from a host with behavior spoofer")),
                None => return Err(ConfigError::invalid(f("from"), format!("unknown node {:?}", g.from))),
            }
            if self.node(&g.to).is_none() {
                return Err(ConfigError::invalid(f("to"), format!("unknown node {:?}", g.to)));
            }
            if let Some(r) = &g.claimed_requester {
                if self.node(r).is_none() {
                    return Err(ConfigError::invalid(f("claimed_requester"), format!("unknown node {r:?}")));
                }
            }
            for n in g.attack_path.iter().flatten() {
                if self.node(n).is_none() {
                    return Err(ConfigError::invalid(f("attack_path"), format!("unknown node {n:?}")));
                }
            }
            if g.count == 0 {
                return Err(ConfigError::invalid(f("count"), "must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "name": "small",
        "nodes": [
            {"id": "v", "kind": "host", "address": "10.1.0.1"},
            {"id": "gv", "kind": "router", "address": "10.1.0.254"},
            {"id": "ga", "kind": "router", "address": "10.2.0.254"},
            {"id": "a", "kind": "host", "address": "10.2.0.1", "prefix": "10.2.0.0/16", "behavior": "ignore_requests"}
        ],
        "links": [
            {"a": "v", "b": "gv", "delay_ms": 10},
            {"a": "gv", "b": "ga", "delay_ms": 20},
            {"a": "ga", "b": "a", "delay_ms": 2}
        ],
        "contracts": [
            {"edge": ["gv", "v"], "r1": 100, "r2": 1},
            {"edge": ["ga", "a"], "r1": 100, "r2": 1, "burst2": 1}
        ],
        "flows": [
            {"id": "atk", "src": "a", "dst": "v", "rate_pps": 100, "undesired": true,
             "repeat": {"count": 3, "every_ms": 10, "vary": "src"}}
        ],
        "classifiers": [{"host": "v", "label": "*>10.1.0.1"}],
        "duration_ms": 1000
    }"#;

    fn small() -> ScenarioConfig {
        ScenarioConfig::from_json_str(SMALL, "small.json").unwrap()
    }

    fn invalid_field(text: &str) -> String {
        match ScenarioConfig::from_json_str(text, "x.json") {
            Err(ConfigError::Invalid { field, .. }) => field,
            other => panic!("expected a field error, got {other:?}"),
        }
    }

    #[test]
    fn parses_and_expands() {
        let c = small();
        let flows = c.expand_flows();
        assert_eq!(flows.len(), 3);
        assert_eq!(flows[2].name, "atk#2");
        assert_eq!(flows[2].header.src, "10.2.0.3".parse::<Ipv4Addr>().unwrap());
        assert_eq!(flows[2].start_ms, 20);
        assert_eq!(c.gateway_of("a"), Some("ga"));
        assert_eq!(c.contract_between("a", "ga").unwrap().r2_spec().burst, 1);
        assert_eq!(c.contract_between("gv", "v").unwrap().r1_spec().burst, 100);
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let broken = SMALL.replacen("\"kind\": \"host\",", "\"kind\": \"host\"", 1);
        match ScenarioConfig::from_json_str(&broken, "broken.json") {
            Err(ConfigError::Syntax { origin, line, .. }) => {
                assert_eq!(origin, "broken.json");
                assert_eq!(line, 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = SMALL.replacen("\"duration_ms\"", "\"duraton\": 1, \"duration_ms\"", 1);
        assert!(matches!(
            ScenarioConfig::from_json_str(&text, "x.json"),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn field_errors_name_the_field() {
        assert_eq!(
            invalid_field(&SMALL.replace("\"delay_ms\": 20", "\"delay_ms\": 0")),
            "links[1].delay_ms"
        );
        assert_eq!(
            invalid_field(&SMALL.replace("\"rate_pps\": 100", "\"rate_pps\": 0")),
            "flows[0].rate_pps"
        );
        assert_eq!(invalid_field(&SMALL.replace("\"b\": \"gv\"", "\"b\": \"nowhere\"")), "links[0].b");
        assert_eq!(invalid_field(&SMALL.replace("\"r2\": 1}", "\"r2\": 0}")), "contracts[0].r2");
        assert_eq!(
            invalid_field(&SMALL.replace("\"duration_ms\": 1000", "\"duration_ms\": 1000, \"params\": {\"t_tmp_ms\": 90000}")),
            "params.t_tmp_ms"
        );
        assert_eq!(
            invalid_field(&SMALL.replace(
                "\"classifiers\": [{\"host\": \"v\", \"label\": \"*>10.1.0.1\"}]",
                "\"classifiers\": []"
            )),
            "flows[0].undesired"
        );
        assert_eq!(invalid_field(&SMALL.replace("10.2.0.0/16", "10.2.0.0/31")), "flows[0].repeat");
        assert_eq!(
            invalid_field(&SMALL.replace("\"address\": \"10.2.0.254\"", "\"address\": \"10.1.0.1\"")),
            "nodes[2].address"
        );
    }

    #[test]
    fn hosts_need_exactly_one_link() {
        let text = SMALL.replace(
            "{\"a\": \"ga\", \"b\": \"a\", \"delay_ms\": 2}",
            "{\"a\": \"ga\", \"b\": \"a\", \"delay_ms\": 2}, {\"a\": \"gv\", \"b\": \"a\", \"delay_ms\": 2}",
        );
        assert_eq!(invalid_field(&text), "nodes[3]");
    }

    #[test]
    fn round_trips_through_json() {
        let c = small();
        let again = ScenarioConfig::from_json_str(&c.to_json(), "again").unwrap();
        assert_eq!(again.to_json(), c.to_json());
    }
}
