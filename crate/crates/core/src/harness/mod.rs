//! Scenario construction, metrics collection and the closed-form oracles.

pub mod builtin;
pub mod config;
pub mod oracle;
pub mod report;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::contract::RateSpec;
use crate::error::{ConfigError, SimError};
use crate::node::host::Forgery;
use crate::node::{Classifier, Host, HostBehavior, Note, Router, RouterBehavior, RouterConfig};
use crate::simnet::topology::{Link, NodeInfo, NodeKind, Topology};
use crate::simnet::{FlowSpec, NodeState, Simulation};
use crate::types::{AitfMessage, FlowLabel, Millis, NodeId, RequestType, SimTime};

pub use builtin::{builtin, builtin_names, load_scenario};
pub use config::{BehaviorConfig, ExpandedFlow, ForgeKind, NodeKindConfig, ScenarioConfig};
pub use oracle::{oracle_provisioning, oracle_r, Provisioning};
pub use report::{FlowReport, MetricsReport, NodeReport, OracleReport};

const FALLBACK_CAPACITY: usize = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub duration_ms: Option<u64>,
    pub trace: bool,
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Option<String>,
    pub event_log: String,
    pub sim: Simulation,
}

/// Contract rates seen from one node: what it accepts from each neighbor and
/// what it may send each neighbor.
#[derive(Default)]
struct Edges {
    inbound: BTreeMap<NodeId, RateSpec>,
    outbound: BTreeMap<NodeId, RateSpec>,
}

fn ceil_tokens(spec: &RateSpec, window: Millis) -> usize {
    (spec.rate * window.as_secs_f64() - 1e-9).ceil().max(0.0) as usize + spec.burst as usize
}

fn node_kind(k: NodeKindConfig) -> NodeKind {
    match k {
        NodeKindConfig::Host => NodeKind::Host,
        NodeKindConfig::Router => NodeKind::Gateway,
        NodeKindConfig::Relay => NodeKind::Relay,
    }
}

fn host_behavior(b: Option<&BehaviorConfig>) -> HostBehavior {
    match b {
        Some(BehaviorConfig::IgnoreRequests) => HostBehavior::IgnoreRequests,
        Some(BehaviorConfig::OnOff { on_ms, off_ms }) => HostBehavior::OnOff {
            on_ms: *on_ms,
            off_ms: *off_ms,
        },
        Some(BehaviorConfig::Spoofer) => HostBehavior::Spoofer,
        _ => HostBehavior::Compliant,
    }
}

fn is_cooperative(b: Option<&BehaviorConfig>) -> bool {
    matches!(b, None | Some(BehaviorConfig::Compliant | BehaviorConfig::Cooperative))
}

struct Built {
    topo: Topology,
    edges: Vec<Edges>,
    flows: Vec<ExpandedFlow>,
}

fn build_topology(cfg: &ScenarioConfig) -> Built {
    let ids: BTreeMap<&str, NodeId> = cfg
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), NodeId(i as u32)))
        .collect();
    let nodes = cfg
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| NodeInfo {
            id: NodeId(i as u32),
            name: n.id.clone(),
            kind: node_kind(n.kind),
            address: n.address,
            prefix: n.prefix,
        })
        .collect();
    let links = cfg
        .links
        .iter()
        .map(|l| Link {
            a: ids[l.a.as_str()],
            b: ids[l.b.as_str()],
            delay: Millis(l.delay_ms),
            capacity_pps: l.capacity_pps,
        })
        .collect();
    let mut edges: Vec<Edges> = cfg.nodes.iter().map(|_| Edges::default()).collect();
    for c in &cfg.contracts {
        let (p, cl) = (ids[c.edge[0].as_str()], ids[c.edge[1].as_str()]);
        edges[p.index()].inbound.insert(cl, c.r1_spec());
        edges[p.index()].outbound.insert(cl, c.r2_spec());
        edges[cl.index()].inbound.insert(p, c.r2_spec());
        edges[cl.index()].outbound.insert(p, c.r1_spec());
    }
    Built {
        topo: Topology::new(nodes, links),
        edges,
        flows: cfg.expand_flows(),
    }
}

/// Filter capacity that admits everything the contracts allow.
fn default_filter_capacity(e: &Edges, p: &crate::types::ProtocolParams) -> usize {
    if e.inbound.is_empty() && e.outbound.is_empty() {
        return FALLBACK_CAPACITY;
    }
    e.inbound.values().map(|s| ceil_tokens(s, p.t_tmp_ms)).sum::<usize>()
        + e.outbound.values().map(|s| ceil_tokens(s, p.t_ms)).sum::<usize>()
}

fn default_shadow_capacity(e: &Edges, p: &crate::types::ProtocolParams) -> usize {
    if e.inbound.is_empty() {
        return FALLBACK_CAPACITY;
    }
    e.inbound.values().map(|s| ceil_tokens(s, p.t_ms)).sum()
}

fn forged_message(topo: &Topology, g: &config::ForgeryConfig, rng: &mut ChaCha8Rng) -> AitfMessage {
    let requester = g
        .claimed_requester
        .as_deref()
        .and_then(|n| topo.id(n))
        .or_else(|| topo.resolve(g.label.dst))
        .unwrap_or(NodeId(0));
    let attack_path: Vec<NodeId> = g.attack_path.iter().flatten().filter_map(|n| topo.id(n)).collect();
    let filter = |req_type| AitfMessage::FilterRequest {
        label: g.label,
        req_type,
        attack_path: attack_path.clone(),
        requester,
    };
    match g.kind {
        ForgeKind::ToVictimGw => filter(RequestType::ToVictimGw),
        ForgeKind::ToAttackerGw => filter(RequestType::ToAttackerGw),
        ForgeKind::ToAttacker => filter(RequestType::ToAttacker),
        ForgeKind::VerifyReply => AitfMessage::VerifyReply {
            label: g.label,
            nonce: g.nonce.unwrap_or_else(|| rng.gen()),
            requester,
        },
    }
}

/// Build the simulation for `cfg` without running it.
pub fn build_simulation(cfg: &ScenarioConfig, seed: u64) -> Simulation {
    let Built { topo, edges, flows } = build_topology(cfg);
    let mut states = Vec::with_capacity(cfg.nodes.len());
    for (i, n) in cfg.nodes.iter().enumerate() {
        let id = NodeId(i as u32);
        let params = cfg.node_params(n);
        let e = &edges[i];
        states.push(match n.kind {
            NodeKindConfig::Host => {
                let gw = topo.neighbors(id).next().expect("validated: one link");
                NodeState::Host(Box::new(Host::new(
                    id,
                    gw,
                    params,
                    host_behavior(n.behavior.as_ref()),
                    e.outbound.get(&gw).copied(),
                    e.inbound.get(&gw).copied(),
                )))
            }
            NodeKindConfig::Router => NodeState::Router(Box::new(Router::new(
                id,
                params,
                RouterConfig {
                    filter_capacity: n.filter_capacity.unwrap_or_else(|| default_filter_capacity(e, &params)),
                    shadow_capacity: n.shadow_capacity.unwrap_or_else(|| default_shadow_capacity(e, &params)),
                    behavior: match n.behavior {
                        Some(BehaviorConfig::IgnoreRequests) => RouterBehavior::IgnoreRequests,
                        _ => RouterBehavior::Cooperative,
                    },
                    inbound: e.inbound.clone(),
                    outbound: e.outbound.clone(),
                    seed,
                },
            ))),
            NodeKindConfig::Relay => NodeState::Relay,
        });
    }
    for c in &cfg.classifiers {
        let id = topo.id(&c.host).expect("validated");
        if let NodeState::Host(h) = &mut states[id.index()] {
            h.add_classifier(Classifier {
                label: c.label,
                detection: Millis(c.detection_ms),
                granularity: c.granularity,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f0e5);
    for g in &cfg.forgeries {
        let from = topo.id(&g.from).expect("validated");
        let to = topo.id(&g.to).expect("validated");
        for k in 0..g.count {
            let msg = forged_message(&topo, g, &mut rng);
            if let NodeState::Host(h) = &mut states[from.index()] {
                h.add_forgery(Forgery {
                    at: SimTime(g.start_ms + u64::from(k) * g.every_ms),
                    to,
                    msg,
                });
            }
        }
    }
    let specs = flows
        .iter()
        .map(|f| FlowSpec {
            name: f.name.clone(),
            src: topo.id(&f.src).expect("validated"),
            header: f.header,
            rate_pps: f.rate_pps,
            size_bytes: f.size_bytes,
            start: SimTime(f.start_ms),
            stop: f.stop_ms.map(SimTime),
            undesired: f.undesired,
        })
        .collect();
    Simulation::new(topo, states, specs, cfg.params.t_ms)
}

/// Runs a scenario to its configured duration and measures the result.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutput, HarnessError> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(d) = opts.duration_ms {
        cfg.duration_ms = d;
    }
    cfg.validate()?;
    let mut sim = build_simulation(&cfg, cfg.seed);
    sim.enable_audit();
    if opts.trace {
        sim.enable_trace();
    }
    sim.run_until(SimTime(cfg.duration_ms))?;
    sim.check_conservation();
    check_bounds(&cfg, &mut sim);
    let report = measure(&cfg, &sim);
    Ok(RunOutput {
        report,
        trace: sim.trace().map(str::to_string),
        event_log: sim.event_log(),
        sim,
    })
}

fn all_parties_compliant(cfg: &ScenarioConfig) -> bool {
    cfg.nodes.iter().all(|n| is_cooperative(n.behavior.as_ref())) && cfg.forgeries.is_empty()
}

/// With every party compliant and every edge of a victim's gateway under
/// contract, the policer bounds that gateway's tables.
fn check_bounds(cfg: &ScenarioConfig, sim: &mut Simulation) {
    if !all_parties_compliant(cfg) {
        return;
    }
    let victims: BTreeMap<&str, ()> = cfg
        .expand_flows()
        .iter()
        .filter(|f| f.undesired)
        .map(|f| (cfg.node(&f.dst).expect("validated").id.as_str(), ()))
        .collect();
    let Built { edges, .. } = build_topology(cfg);
    let mut found = Vec::new();
    for v in victims.keys() {
        let Some(gw) = cfg.gateway_of(v) else { continue };
        let gid = sim.topology().id(gw).expect("validated");
        let e = &edges[gid.index()];
        if sim.topology().neighbors(gid).any(|n| !e.inbound.contains_key(&n)) {
            continue;
        }
        let params = cfg.node_params(cfg.node(gw).expect("validated"));
        let Some(r) = sim.router(gid) else { continue };
        let filter_bound = default_filter_capacity(e, &params);
        let shadow_bound = default_shadow_capacity(e, &params);
        if r.filters().high_water() > filter_bound {
            found.push(format!(
                "{gw}: filter high-water {} exceeds policer bound {filter_bound}",
                r.filters().high_water()
            ));
        }
        if r.shadow().high_water() > shadow_bound {
            found.push(format!(
                "{gw}: shadow high-water {} exceeds policer bound {shadow_bound}",
                r.shadow().high_water()
            ));
        }
    }
    for v in found {
        sim.add_violation(v);
    }
}

/// Nodes that will not act on a request for a flow from `src` to `dst`:
/// the source host unless compliant, and ignoring routers in the half of
/// the path a victim-side gateway could ask.
pub fn non_cooperating(cfg: &ScenarioConfig, topo: &Topology, src: &str, dst: &str) -> u32 {
    let mut n = 0;
    let src_cfg = cfg.node(src).expect("validated");
    if matches!(
        src_cfg.behavior,
        Some(BehaviorConfig::IgnoreRequests | BehaviorConfig::OnOff { .. })
    ) {
        n += 1;
    }
    let (Some(s), Some(d)) = (topo.id(src), topo.id(dst)) else {
        return n;
    };
    let path = topo.gateways_on_path(s, d).unwrap_or_default();
    let l = path.len();
    for (i, g) in path.iter().enumerate() {
        let ignoring = cfg.node(topo.name(*g)).and_then(|c| c.behavior.as_ref()) == Some(&BehaviorConfig::IgnoreRequests);
        if ignoring && i + 1 + i <= l {
            n += 1;
        }
    }
    n
}

fn detection_delay(cfg: &ScenarioConfig, f: &ExpandedFlow) -> Option<Millis> {
    cfg.classifiers
        .iter()
        .find(|c| c.host == f.dst && c.label.matches(&f.header))
        .map(|c| Millis(c.detection_ms))
}

/// Highest temporary-filter round per label, indexed for matching against
/// packet headers.
struct RoundIndex {
    by_src: BTreeMap<Ipv4Addr, Vec<(FlowLabel, usize)>>,
    wildcard: Vec<(FlowLabel, usize)>,
}

impl RoundIndex {
    fn new(sim: &Simulation) -> RoundIndex {
        let mut best: BTreeMap<FlowLabel, usize> = BTreeMap::new();
        for e in sim.events() {
            if let Note::TempFilterInstalled { label, round } = &e.note {
                let r = best.entry(*label).or_insert(0);
                *r = (*r).max(*round);
            }
        }
        let mut idx = RoundIndex {
            by_src: BTreeMap::new(),
            wildcard: Vec::new(),
        };
        for (label, round) in best {
            match label.src.exact() {
                Some(a) => idx.by_src.entry(a).or_default().push((label, round)),
                None => idx.wildcard.push((label, round)),
            }
        }
        idx
    }

    fn round(&self, f: &ExpandedFlow) -> Option<usize> {
        self.by_src
            .get(&f.header.src)
            .into_iter()
            .flatten()
            .chain(self.wildcard.iter())
            .filter(|(l, _)| l.matches(&f.header))
            .map(|(_, r)| *r)
            .max()
    }
}

/// Turn a finished run into a report.
pub fn measure(cfg: &ScenarioConfig, sim: &Simulation) -> MetricsReport {
    let topo = sim.topology();
    let metrics = sim.flow_metrics();
    let expanded = cfg.expand_flows();
    let rounds = RoundIndex::new(sim);
    let t = cfg.params.t_ms;

    let mut flows: Vec<FlowReport> = Vec::new();
    for (ci, fc) in cfg.flows.iter().enumerate() {
        let copies: Vec<(usize, &ExpandedFlow)> = expanded.iter().enumerate().filter(|(_, f)| f.config_index == ci).collect();
        let first = copies[0].1;
        let mut fr = FlowReport {
            id: fc.id.clone(),
            src: fc.src.clone(),
            dst: fc.dst.clone(),
            label: FlowLabel::exact(&first.header).to_string(),
            copies: copies.len() as u32,
            undesired: fc.undesired,
            offered_pkts: 0,
            offered_bytes: 0,
            delivered_pkts: 0,
            delivered_bytes: 0,
            window_offered: 0,
            window_delivered: 0,
            r: None,
            r_aggregate: None,
            periods: Vec::new(),
            drops: BTreeMap::new(),
            escalation_round: None,
            non_cooperating: None,
            predicted_r: None,
        };
        let mut periods: Vec<(u64, u64)> = Vec::new();
        for (i, f) in &copies {
            let m = &metrics[*i];
            fr.offered_pkts += m.offered_pkts;
            fr.offered_bytes += m.offered_bytes;
            fr.delivered_pkts += m.delivered_pkts;
            fr.delivered_bytes += m.delivered_bytes;
            fr.window_offered += m.window_offered;
            fr.window_delivered += m.window_delivered;
            for (k, v) in &m.drops {
                *fr.drops.entry(*k).or_insert(0) += v;
            }
            if periods.len() < m.periods.len() {
                periods.resize(m.periods.len(), (0, 0));
            }
            for (p, (o, d)) in m.periods.iter().enumerate() {
                periods[p].0 += o;
                periods[p].1 += d;
            }
            if f.undesired {
                fr.escalation_round = fr.escalation_round.max(rounds.round(f));
            }
        }
        fr.r = report::ratio(fr.window_delivered, fr.window_offered);
        fr.r_aggregate = report::ratio(fr.delivered_pkts, fr.offered_pkts);
        fr.periods = periods
            .into_iter()
            .enumerate()
            .map(|(index, (offered, delivered))| report::PeriodReport {
                index,
                offered,
                delivered,
                r: report::ratio(delivered, offered),
            })
            .collect();
        if fc.undesired {
            let n = non_cooperating(cfg, topo, &fc.src, &fc.dst);
            let t_d = detection_delay(cfg, first).unwrap_or(Millis(0));
            let t_r = victim_link_delay(cfg, topo, &fc.dst);
            fr.non_cooperating = Some(n);
            fr.predicted_r = Some(oracle_r(n, t_d, t_r, t));
        }
        flows.push(fr);
    }

    let nodes = topo
        .nodes()
        .iter()
        .map(|info| {
            let mut nr = NodeReport {
                name: info.name.clone(),
                kind: cfg.nodes[info.id.index()].kind_name().to_string(),
                filter_capacity: None,
                filter_high_water: None,
                shadow_capacity: None,
                shadow_high_water: None,
                table_full: None,
                shadow_overflow: None,
                client_high_water: BTreeMap::new(),
                router: None,
                host: None,
            };
            if let Some(r) = sim.router(info.id) {
                nr.filter_capacity = Some(r.filters().capacity());
                nr.filter_high_water = Some(r.filters().high_water());
                nr.shadow_capacity = Some(r.shadow().capacity());
                nr.shadow_high_water = Some(r.shadow().high_water());
                nr.table_full = Some(r.filters().table_full_count());
                nr.shadow_overflow = Some(r.shadow().overflow_count());
                nr.client_high_water = r
                    .filters()
                    .client_high_water()
                    .iter()
                    .map(|(c, n)| (topo.name(*c).to_string(), *n))
                    .collect();
                nr.router = Some(r.counters().clone());
            }
            if let Some(h) = sim.host(info.id) {
                nr.host = Some(h.counters().clone());
            }
            nr
        })
        .collect();

    let mut escalations = Vec::new();
    let mut long_term: BTreeMap<String, u64> = BTreeMap::new();
    for e in sim.events() {
        match &e.note {
            Note::Escalated { label, round, to } => escalations.push(report::EscalationReport {
                time_ms: e.time.as_ms(),
                node: topo.name(e.node).to_string(),
                label: label.to_string(),
                round: *round,
                to: topo.name(*to).to_string(),
            }),
            Note::LongTermFilterInstalled { .. } => {
                *long_term.entry(topo.name(e.node).to_string()).or_insert(0) += 1;
            }
            _ => {}
        }
    }
    let disconnections = sim
        .disconnections()
        .iter()
        .map(|d| report::DisconnectionReport {
            time_ms: d.time.as_ms(),
            by: topo.name(d.by).to_string(),
            neighbor: topo.name(d.neighbor).to_string(),
            until_ms: d.until.map(SimTime::as_ms),
        })
        .collect();

    MetricsReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        duration_ms: cfg.duration_ms,
        window_ms: t.as_ms(),
        flows,
        nodes,
        messages: sim.message_stats().clone(),
        disconnections,
        escalations,
        long_term_filters: long_term,
        oracle: oracle_block(cfg, topo, &expanded),
        violations: sim.violations().to_vec(),
    }
}

fn victim_link_delay(cfg: &ScenarioConfig, topo: &Topology, victim: &str) -> Millis {
    cfg.gateway_of(victim)
        .and_then(|gw| Some((topo.id(victim)?, topo.id(gw)?)))
        .and_then(|(v, g)| topo.path_delay(v, g))
        .unwrap_or(Millis(0))
}

fn oracle_block(cfg: &ScenarioConfig, topo: &Topology, flows: &[ExpandedFlow]) -> Option<OracleReport> {
    let f = flows.iter().find(|f| f.undesired)?;
    let gw = cfg.gateway_of(&f.dst)?;
    let victim_contract = cfg.contract_between(gw, &f.dst)?;
    let r1 = victim_contract.r1;
    let r2 = cfg
        .gateway_of(&f.src)
        .and_then(|agw| cfg.contract_between(agw, &f.src))
        .map_or(victim_contract.r2, |c| c.r2);
    let p = &cfg.params;
    let prov = oracle_provisioning(r1, r2, p.t_ms, p.t_tmp_ms);
    let n = non_cooperating(cfg, topo, &f.src, &f.dst);
    let t_d = detection_delay(cfg, f).unwrap_or(Millis(0));
    let t_r = victim_link_delay(cfg, topo, &f.dst);
    Some(OracleReport {
        victim: f.dst.clone(),
        victim_gateway: gw.to_string(),
        r1,
        r2,
        t_ms: p.t_ms.as_ms(),
        t_tmp_ms: p.t_tmp_ms.as_ms(),
        t_d_ms: t_d.as_ms(),
        t_r_ms: t_r.as_ms(),
        n,
        n_v_flows: prov.n_v_flows,
        n_v: prov.n_v,
        m_v: prov.m_v,
        n_a: prov.n_a,
        predicted_r: oracle_r(n, t_d, t_r, p.t_ms),
    })
}
