//! Discrete-event simulator: one virtual clock, an event heap ordered by
//! (time, insertion sequence), and hop-by-hop delivery over the topology.

pub mod topology;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::SimError;
use crate::node::{Ctx, Host, Note, Output, PacketVerdict, Router, Timer};
use crate::types::{AitfMessage, DataPacket, Millis, NodeId, PacketHeader, RequestType, SimTime};
use topology::{NodeKind, Topology};

/// A scheduled outbound flow.
#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub name: String,
    pub src: NodeId,
    pub header: PacketHeader,
    pub rate_pps: f64,
    pub size_bytes: u32,
    pub start: SimTime,
    pub stop: Option<SimTime>,
    pub undesired: bool,
}

impl FlowSpec {
    /// Emission time of the k-th packet.
    pub fn tick_time(&self, k: u64) -> SimTime {
        let offset = (k as f64 * 1000.0 / self.rate_pps).floor() as u64;
        self.start + Millis(offset)
    }
}

#[derive(Debug, Clone)]
pub enum NodeState {
    Host(Box<Host>),
    Router(Box<Router>),
    Relay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Filtered,
    ShadowHit,
    LinkDown,
    NoRoute,
    IngressRule,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlowMetrics {
    pub offered_pkts: u64,
    pub offered_bytes: u64,
    pub delivered_pkts: u64,
    pub delivered_bytes: u64,
    pub drops: BTreeMap<DropReason, u64>,
    /// Packets emitted in the first `window` after flow start, and how many
    /// of those arrived.
    pub window_offered: u64,
    pub window_delivered: u64,
    /// (offered, delivered) per window-length period, by emission time.
    pub periods: Vec<(u64, u64)>,
    #[serde(skip)]
    pub arrivals: Vec<SimTime>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MessageStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: BTreeMap<DropReason, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtocolEvent {
    pub time: SimTime,
    pub node: NodeId,
    #[serde(flatten)]
    pub note: Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Disconnection {
    pub time: SimTime,
    pub by: NodeId,
    pub neighbor: NodeId,
    pub until: Option<SimTime>,
}

#[derive(Debug, Clone)]
struct Envelope {
    origin: NodeId,
    dst: NodeId,
    msg: AitfMessage,
}

#[derive(Debug, Clone)]
enum EventKind {
    Packet { pkt: DataPacket, at: NodeId, from: NodeId },
    Message { env: Envelope, at: NodeId, from: NodeId },
    Timer { node: NodeId, timer: Timer },
    FlowTick { flow: usize, k: u64 },
    Forge { host: NodeId, idx: usize },
}

#[derive(Debug)]
struct Event {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

macro_rules! trace {
    ($sim:expr, $($arg:tt)*) => {
        if let Some(t) = $sim.trace.as_mut() {
            let _ = writeln!(t, "{} {}", $sim.now, format_args!($($arg)*));
        }
    };
}

pub struct Simulation {
    topo: Topology,
    nodes: Vec<NodeState>,
    flows: Vec<FlowSpec>,
    metrics: Vec<FlowMetrics>,
    window: Millis,
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Event>,
    link_down_until: Vec<SimTime>,
    messages: MessageStats,
    events: Vec<ProtocolEvent>,
    disconnections: Vec<Disconnection>,
    violations: Vec<String>,
    trace: Option<String>,
    audit: bool,
    executed: u64,
    started: bool,
}

impl Simulation {
    /// `window` is the measurement window (normally `T`).
    pub fn new(topo: Topology, mut nodes: Vec<NodeState>, flows: Vec<FlowSpec>, window: Millis) -> Simulation {
        for (i, f) in flows.iter().enumerate() {
            if let NodeState::Host(h) = &mut nodes[f.src.index()] {
                h.add_flow(i, f.header, f.start);
            }
        }
        let links = topo.links().len();
        Simulation {
            metrics: vec![FlowMetrics::default(); flows.len()],
            topo,
            nodes,
            flows,
            window,
            now: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            link_down_until: vec![SimTime::ZERO; links],
            messages: MessageStats::default(),
            events: Vec::new(),
            disconnections: Vec::new(),
            violations: Vec::new(),
            trace: None,
            audit: false,
            executed: 0,
            started: false,
        }
    }

    /// Record a line per packet hop as well as protocol events.
    pub fn enable_trace(&mut self) {
        self.trace = Some(String::new());
    }

    /// Check every forwarded packet against the forwarding router's table.
    pub fn enable_audit(&mut self) {
        self.audit = true;
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn router(&self, id: NodeId) -> Option<&Router> {
        match &self.nodes[id.index()] {
            NodeState::Router(r) => Some(r),
            _ => None,
        }
    }

    pub fn host(&self, id: NodeId) -> Option<&Host> {
        match &self.nodes[id.index()] {
            NodeState::Host(h) => Some(h),
            _ => None,
        }
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.flows
    }

    pub fn flow_metrics(&self) -> &[FlowMetrics] {
        &self.metrics
    }

    pub fn message_stats(&self) -> &MessageStats {
        &self.messages
    }

    pub fn events(&self) -> &[ProtocolEvent] {
        &self.events
    }

    pub fn disconnections(&self) -> &[Disconnection] {
        &self.disconnections
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn trace(&self) -> Option<&str> {
        self.trace.as_deref()
    }

    pub fn executed(&self) -> u64 {
        self.executed
    }

    fn schedule(&mut self, at: SimTime, kind: EventKind) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::ScheduledInPast {
                fire_at: at.as_ms(),
                now: self.now.as_ms(),
            });
        }
        self.seq += 1;
        self.queue.push(Event { at, seq: self.seq, kind });
        Ok(())
    }

    /// Arm a timer on a node from outside the event loop.
    pub fn schedule_timer(&mut self, node: NodeId, at: SimTime, timer: Timer) -> Result<(), SimError> {
        self.schedule(at, EventKind::Timer { node, timer })
    }

    /// Originate a protocol message at `from` right now.
    pub fn inject_message(&mut self, from: NodeId, to: NodeId, msg: AitfMessage) -> Result<(), SimError> {
        self.send_message(from, to, msg)
    }

    fn start(&mut self) -> Result<(), SimError> {
        self.started = true;
        for i in 0..self.flows.len() {
            let at = self.flows[i].tick_time(0);
            self.schedule(at, EventKind::FlowTick { flow: i, k: 0 })?;
        }
        for n in 0..self.nodes.len() {
            if let NodeState::Host(h) = &self.nodes[n] {
                let times: Vec<SimTime> = h.forgeries().iter().map(|f| f.at).collect();
                for (idx, at) in times.into_iter().enumerate() {
                    self.schedule(
                        at,
                        EventKind::Forge {
                            host: NodeId(n as u32),
                            idx,
                        },
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Execute every event with `fire_at <= t_end`; returns how many ran.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<u64, SimError> {
        if !self.started {
            self.start()?;
        }
        let mut count = 0;
        while self.queue.peek().is_some_and(|e| e.at <= t_end) {
            let ev = self.queue.pop().expect("peeked");
            debug_assert!(ev.at >= self.now);
            self.now = ev.at;
            self.dispatch(ev.kind)?;
            count += 1;
        }
        self.now = self.now.max(t_end);
        self.executed += count;
        Ok(count)
    }

    fn link_up(&self, a: NodeId, b: NodeId) -> Option<usize> {
        let l = self.topo.link_between(a, b)?;
        (self.now >= self.link_down_until[l]).then_some(l)
    }

    fn drop_packet(&mut self, pkt: &DataPacket, at: NodeId, reason: DropReason) {
        *self.metrics[pkt.flow].drops.entry(reason).or_insert(0) += 1;
        trace!(self, "{} drop {} {:?}", self.topo.name(at), pkt.header, reason);
    }

    /// Put a packet on the link from `at` toward its destination.
    fn forward_packet(&mut self, pkt: DataPacket, at: NodeId) -> Result<(), SimError> {
        let Some(next) = self.topo.next_hop_addr(at, pkt.header.dst) else {
            self.drop_packet(&pkt, at, DropReason::NoRoute);
            return Ok(());
        };
        let Some(l) = self.link_up(at, next) else {
            self.drop_packet(&pkt, at, DropReason::LinkDown);
            return Ok(());
        };
        let arrive = self.now + self.topo.links()[l].delay;
        self.schedule(arrive, EventKind::Packet { pkt, at: next, from: at })
    }

    fn send_message(&mut self, origin: NodeId, dst: NodeId, msg: AitfMessage) -> Result<(), SimError> {
        self.messages.sent += 1;
        let env = Envelope { origin, dst, msg };
        self.forward_message(env, origin)
    }

    fn forward_message(&mut self, env: Envelope, at: NodeId) -> Result<(), SimError> {
        let next = self.topo.next_hop(at, env.dst);
        let reason = match next {
            None => Some(DropReason::NoRoute),
            Some(n) if self.link_up(at, n).is_none() => Some(DropReason::LinkDown),
            _ => None,
        };
        if let Some(r) = reason {
            *self.messages.dropped.entry(r).or_insert(0) += 1;
            trace!(self, "{} msg-drop {} {:?}", self.topo.name(at), env.msg, r);
            return Ok(());
        }
        let next = next.expect("checked");
        let l = self.topo.link_between(at, next).expect("adjacent");
        let arrive = self.now + self.topo.links()[l].delay;
        self.schedule(arrive, EventKind::Message { env, at: next, from: at })
    }

    fn dispatch(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::FlowTick { flow, k } => self.on_flow_tick(flow, k),
            EventKind::Packet { pkt, at, from } => self.on_packet(pkt, at, from),
            EventKind::Message { env, at, from } => self.on_message(env, at, from),
            EventKind::Timer { node, timer } => {
                let mut ctx = Ctx::new(self.now, &self.topo, node);
                match &mut self.nodes[node.index()] {
                    NodeState::Host(h) => h.on_timer(&mut ctx, timer),
                    NodeState::Router(r) => r.on_timer(&mut ctx, timer),
                    NodeState::Relay => {}
                }
                let out = ctx.into_outputs();
                self.apply(node, out)
            }
            EventKind::Forge { host, idx } => {
                let mut ctx = Ctx::new(self.now, &self.topo, host);
                if let NodeState::Host(h) = &mut self.nodes[host.index()] {
                    h.forge(&mut ctx, idx);
                }
                let out = ctx.into_outputs();
                self.apply(host, out)
            }
        }
    }

    fn on_flow_tick(&mut self, flow: usize, k: u64) -> Result<(), SimError> {
        let spec = &self.flows[flow];
        if spec.stop.is_some_and(|s| self.now >= s) {
            return Ok(());
        }
        let src = spec.src;
        let next_at = spec.tick_time(k + 1);
        let emit = match &self.nodes[src.index()] {
            NodeState::Host(h) => h.may_emit(flow, self.now),
            _ => false,
        };
        if emit {
            let spec = &self.flows[flow];
            let pkt = DataPacket {
                header: spec.header,
                size_bytes: spec.size_bytes,
                recorded_route: Vec::new(),
                flow,
                emitted_at: self.now,
            };
            let period = (self.now.since(spec.start).as_ms() / self.window.as_ms().max(1)) as usize;
            let m = &mut self.metrics[flow];
            m.offered_pkts += 1;
            m.offered_bytes += u64::from(pkt.size_bytes);
            if period == 0 {
                m.window_offered += 1;
            }
            if m.periods.len() <= period {
                m.periods.resize(period + 1, (0, 0));
            }
            m.periods[period].0 += 1;
            trace!(self, "{} emit {}", self.topo.name(src), pkt.header);
            self.forward_packet(pkt, src)?;
        }
        self.schedule(next_at, EventKind::FlowTick { flow, k: k + 1 })
    }

    fn on_packet(&mut self, mut pkt: DataPacket, at: NodeId, from: NodeId) -> Result<(), SimError> {
        if self.link_up(from, at).is_none() {
            self.drop_packet(&pkt, at, DropReason::LinkDown);
            return Ok(());
        }
        let kind = self.topo.kind(at);
        if kind == NodeKind::Host {
            if self.topo.resolve(pkt.header.dst) != Some(at) {
                self.drop_packet(&pkt, at, DropReason::NoRoute);
                return Ok(());
            }
            self.deliver(pkt, at)?;
            return Ok(());
        }
        if let NodeState::Router(r) = &mut self.nodes[at.index()] {
            let mut ctx = Ctx::new(self.now, &self.topo, at);
            let verdict = r.on_packet(&mut ctx, &pkt, from);
            let leaked = self.audit && verdict == PacketVerdict::Forward && r.filters().would_match(&pkt.header, self.now);
            let out = ctx.into_outputs();
            self.apply(at, out)?;
            match verdict {
                PacketVerdict::DropFiltered => {
                    self.drop_packet(&pkt, at, DropReason::Filtered);
                    return Ok(());
                }
                PacketVerdict::DropShadow => {
                    self.drop_packet(&pkt, at, DropReason::ShadowHit);
                    return Ok(());
                }
                PacketVerdict::Forward => {}
            }
            if leaked {
                self.violations.push(format!(
                    "{}: {} forwarded {} past a live filter",
                    self.now,
                    self.topo.name(at),
                    pkt.header
                ));
            }
        }
        if kind == NodeKind::Gateway {
            pkt.recorded_route.push(at);
        }
        self.forward_packet(pkt, at)
    }

    fn deliver(&mut self, pkt: DataPacket, at: NodeId) -> Result<(), SimError> {
        let flow = pkt.flow;
        let start = self.flows[flow].start;
        let undesired = self.flows[flow].undesired;
        let period = (pkt.emitted_at.since(start).as_ms() / self.window.as_ms().max(1)) as usize;
        let m = &mut self.metrics[flow];
        m.delivered_pkts += 1;
        m.delivered_bytes += u64::from(pkt.size_bytes);
        if period == 0 {
            m.window_delivered += 1;
        }
        if m.periods.len() <= period {
            m.periods.resize(period + 1, (0, 0));
        }
        m.periods[period].1 += 1;
        if undesired {
            m.arrivals.push(self.now);
        }
        trace!(self, "{} recv {}", self.topo.name(at), pkt.header);
        let mut ctx = Ctx::new(self.now, &self.topo, at);
        if let NodeState::Host(h) = &mut self.nodes[at.index()] {
            h.on_packet(&mut ctx, &pkt);
        }
        let out = ctx.into_outputs();
        self.apply(at, out)
    }

    fn on_message(&mut self, env: Envelope, at: NodeId, from: NodeId) -> Result<(), SimError> {
        if self.link_up(from, at).is_none() {
            *self.messages.dropped.entry(DropReason::LinkDown).or_insert(0) += 1;
            return Ok(());
        }
        if at != env.dst {
            if self.topo.is_host(at) {
                *self.messages.dropped.entry(DropReason::NoRoute).or_insert(0) += 1;
                return Ok(());
            }
            // only a host's own gateway may tell it to stop sending
            let stop_for_host = matches!(
                env.msg,
                AitfMessage::FilterRequest {
                    req_type: RequestType::ToAttacker,
                    ..
                }
            ) && self.topo.is_host(env.dst)
                && self.topo.next_hop(at, env.dst) == Some(env.dst)
                && env.origin != at;
            if stop_for_host {
                *self.messages.dropped.entry(DropReason::IngressRule).or_insert(0) += 1;
                trace!(self, "{} msg-drop {} ingress", self.topo.name(at), env.msg);
                return Ok(());
            }
            return self.forward_message(env, at);
        }
        self.messages.delivered += 1;
        trace!(self, "{} msg {}", self.topo.name(at), env.msg);
        let mut ctx = Ctx::new(self.now, &self.topo, at);
        match &mut self.nodes[at.index()] {
            NodeState::Host(h) => h.on_message(&mut ctx, from, env.msg),
            NodeState::Router(r) => r.on_message(&mut ctx, from, env.origin, env.msg),
            NodeState::Relay => {}
        }
        let out = ctx.into_outputs();
        self.apply(at, out)
    }

    fn apply(&mut self, node: NodeId, outputs: Vec<Output>) -> Result<(), SimError> {
        for o in outputs {
            match o {
                Output::Send { to, msg } => self.send_message(node, to, msg)?,
                Output::Timer { at, timer } => self.schedule(at, EventKind::Timer { node, timer })?,
                Output::Disconnect { neighbor, duration } => self.disconnect(node, neighbor, duration),
                Output::Note(note) => {
                    if self.trace.is_some() {
                        let line = format!("{} {}", self.topo.name(node), note.named(&self.topo));
                        trace!(self, "{line}");
                    }
                    self.events.push(ProtocolEvent {
                        time: self.now,
                        node,
                        note,
                    });
                }
            }
        }
        Ok(())
    }

    /// Take the link down in both directions.
    pub fn disconnect(&mut self, by: NodeId, neighbor: NodeId, duration: Option<Millis>) {
        let Some(l) = self.topo.link_between(by, neighbor) else {
            return;
        };
        let until = duration.map(|d| self.now + d);
        self.link_down_until[l] = self.link_down_until[l].max(until.unwrap_or(SimTime::MAX));
        self.disconnections.push(Disconnection {
            time: self.now,
            by,
            neighbor,
            until,
        });
        trace!(self, "{} disconnect {}", self.topo.name(by), self.topo.name(neighbor));
    }

    /// Packets still on a link or queued at a hop.
    pub fn in_flight(&self) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for e in &self.queue {
            if let EventKind::Packet { pkt, .. } = &e.kind {
                *out.entry(pkt.flow).or_insert(0) += 1;
            }
        }
        out
    }

    /// Emitted = delivered + dropped + in flight, per flow. Violations are
    /// recorded and returned.
    pub fn check_conservation(&mut self) -> bool {
        let in_flight = self.in_flight();
        let mut ok = true;
        for (i, m) in self.metrics.iter().enumerate() {
            let dropped: u64 = m.drops.values().sum();
            let fl = in_flight.get(&i).copied().unwrap_or(0);
            if m.offered_pkts != m.delivered_pkts + dropped + fl {
                ok = false;
                self.violations.push(format!(
                    "flow {}: emitted {} != delivered {} + dropped {} + in flight {}",
                    self.flows[i].name, m.offered_pkts, m.delivered_pkts, dropped, fl
                ));
            }
        }
        ok
    }

    pub fn add_violation(&mut self, v: String) {
        self.violations.push(v);
    }

    /// One line per protocol event, stable across runs.
    pub fn event_log(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            let _ = writeln!(s, "{} {} {}", e.time, self.topo.name(e.node), e.note.named(&self.topo));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::testutil::{fig1, Fig1};
    use crate::node::{HostBehavior, RouterBehavior, RouterConfig};
    use crate::types::{FlowLabel, ProtocolParams, PROTO_UDP};

    fn nodes(f: &Fig1, attacker: HostBehavior) -> Vec<NodeState> {
        let params = ProtocolParams::default();
        f.topo
            .nodes()
            .iter()
            .map(|n| match n.kind {
                NodeKind::Host => {
                    let gw = f.topo.neighbors(n.id).next().unwrap();
                    let b = if n.id == f.b_host {
                        attacker.clone()
                    } else {
                        HostBehavior::Compliant
                    };
                    NodeState::Host(Box::new(Host::new(n.id, gw, params, b, None, None)))
                }
                NodeKind::Gateway => NodeState::Router(Box::new(Router::new(
                    n.id,
                    params,
                    RouterConfig {
                        filter_capacity: 100,
                        shadow_capacity: 100,
                        behavior: RouterBehavior::Cooperative,
                        inbound: BTreeMap::new(),
                        outbound: BTreeMap::new(),
                        seed: 1,
                    },
                ))),
                NodeKind::Relay => NodeState::Relay,
            })
            .collect()
    }

    fn flow(f: &Fig1, rate: f64, stop: Option<u64>) -> FlowSpec {
        FlowSpec {
            name: "b".into(),
            src: f.b_host,
            header: PacketHeader {
                src: f.addr(f.b_host),
                dst: f.addr(f.g_host),
                proto: PROTO_UDP,
                sport: 1,
                dport: 2,
            },
            rate_pps: rate,
            size_bytes: 100,
            start: SimTime::ZERO,
            stop: stop.map(SimTime),
            undesired: false,
        }
    }

    #[test]
    fn empty_run() {
        let f = fig1();
        let mut sim = Simulation::new(f.topo.clone(), nodes(&f, HostBehavior::Compliant), vec![], Millis(60_000));
        assert_eq!(sim.run_until(SimTime(0)).unwrap(), 0);
    }

    #[test]
    fn same_time_events_run_in_insertion_order() {
        let f = fig1();
        let mut sim = Simulation::new(f.topo.clone(), nodes(&f, HostBehavior::Compliant), vec![], Millis(60_000));
        sim.enable_trace();
        let label = FlowLabel::to_dst(f.addr(f.g_host));
        for nonce in [1, 2] {
            sim.inject_message(f.g_gw1, f.g_host, AitfMessage::reply_to(label, nonce, f.g_gw1))
                .unwrap();
        }
        sim.run_until(SimTime(100)).unwrap();
        let t = sim.trace().unwrap();
        let first = t.find("0000000000000001").expect("first message traced");
        let second = t.find("0000000000000002").expect("second message traced");
        assert!(first < second);
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let f = fig1();
        let mut sim = Simulation::new(f.topo.clone(), nodes(&f, HostBehavior::Compliant), vec![], Millis(60_000));
        sim.run_until(SimTime(10)).unwrap();
        assert!(matches!(
            sim.schedule_timer(f.g_gw1, SimTime(5), Timer::Pacer),
            Err(SimError::ScheduledInPast { .. })
        ));
    }

    #[test]
    fn fig1_recorded_route_and_delay() {
        let f = fig1();
        let mut fl = flow(&f, 1.0, Some(1));
        fl.undesired = true;
        let mut sim = Simulation::new(f.topo.clone(), nodes(&f, HostBehavior::Compliant), vec![fl], Millis(60_000));
        sim.enable_trace();
        sim.run_until(SimTime(101)).unwrap();
        assert_eq!(sim.flow_metrics()[0].delivered_pkts, 0);
        sim.run_until(SimTime(102)).unwrap();
        assert_eq!(sim.flow_metrics()[0].arrivals, vec![SimTime(102)]);
        assert_eq!(f.topo.gateways_on_path(f.b_host, f.g_host).unwrap(), f.path());
    }

    #[test]
    fn recorded_route_matches_path() {
        // capture the route through the victim's request, which carries it verbatim
        let f = fig1();
        let mut ns = nodes(&f, HostBehavior::Compliant);
        if let NodeState::Host(h) = &mut ns[f.g_host.index()] {
            h.add_classifier(crate::node::Classifier {
                label: FlowLabel::to_dst(f.addr(f.g_host)),
                detection: Millis(0),
                granularity: crate::node::Granularity::SrcDst,
            });
        }
        let mut sim = Simulation::new(f.topo.clone(), ns, vec![flow(&f, 1.0, Some(1))], Millis(60_000));
        sim.run_until(SimTime(200)).unwrap();
        let installed = sim
            .router(f.g_gw1)
            .unwrap()
            .filters()
            .get(&f.label())
            .expect("temp filter at G_gw1")
            .origin
            .attack_path
            .clone();
        assert_eq!(installed, f.path());
    }

    #[test]
    fn single_link_delay() {
        let f = fig1();
        let mut sim = Simulation::new(f.topo.clone(), nodes(&f, HostBehavior::Compliant), vec![], Millis(60_000));
        sim.enable_trace();
        let label = FlowLabel::to_dst(f.addr(f.b_host));
        sim.inject_message(f.b_gw1, f.b_host, AitfMessage::reply_to(label, 9, f.b_gw1))
            .unwrap();
        sim.run_until(SimTime(1)).unwrap();
        assert_eq!(sim.message_stats().delivered, 0);
        sim.run_until(SimTime(2)).unwrap();
        assert_eq!(sim.message_stats().delivered, 1);
    }

    #[test]
    fn message_across_disconnected_edge_is_dropped() {
        let f = fig1();
        let mut sim = Simulation::new(f.topo.clone(), nodes(&f, HostBehavior::Compliant), vec![], Millis(60_000));
        sim.disconnect(f.g_gw3, f.b_gw3, None);
        let label = FlowLabel::to_dst(f.addr(f.g_host));
        sim.inject_message(f.b_gw1, f.g_host, AitfMessage::reply_to(label, 1, f.b_gw1))
            .unwrap();
        sim.run_until(SimTime(1000)).unwrap();
        assert_eq!(sim.message_stats().delivered, 0);
        assert_eq!(sim.message_stats().dropped.get(&DropReason::LinkDown), Some(&1));
    }

    #[test]
    fn thousand_pps_for_one_second() {
        let f = fig1();
        let mut sim = Simulation::new(
            f.topo.clone(),
            nodes(&f, HostBehavior::Compliant),
            vec![flow(&f, 1000.0, Some(1000))],
            Millis(60_000),
        );
        sim.run_until(SimTime(2000)).unwrap();
        let m = &sim.flow_metrics()[0];
        assert_eq!(m.offered_pkts, 1000);
        assert_eq!(m.delivered_pkts, 1000);
        assert!(sim.check_conservation());
    }

    #[test]
    fn on_off_emission_gaps() {
        let f = fig1();
        let mut fl = flow(&f, 100.0, Some(9000));
        fl.undesired = true;
        let mut sim = Simulation::new(
            f.topo.clone(),
            nodes(&f, HostBehavior::OnOff { on_ms: 1000, off_ms: 2000 }),
            vec![fl.clone()],
            Millis(60_000),
        );
        sim.run_until(SimTime(10_000)).unwrap();
        // schedule replay: tick k goes out iff its time falls in an on phase
        let expected: Vec<SimTime> = (0..900)
            .map(|k| fl.tick_time(k))
            .filter(|t| t.as_ms() % 3000 < 1000)
            .map(|t| t + Millis(102))
            .collect();
        assert_eq!(sim.flow_metrics()[0].arrivals, expected);
    }

    #[test]
    fn stopped_flow_emits_nothing_after_stop() {
        let f = fig1();
        let mut sim = Simulation::new(
            f.topo.clone(),
            nodes(&f, HostBehavior::Compliant),
            vec![flow(&f, 100.0, None)],
            Millis(60_000),
        );
        sim.run_until(SimTime(500)).unwrap();
        let before = sim.flow_metrics()[0].offered_pkts;
        let stop = AitfMessage::FilterRequest {
            label: f.label(),
            req_type: RequestType::ToAttacker,
            attack_path: f.path(),
            requester: f.b_gw1,
        };
        sim.inject_message(f.b_gw1, f.b_host, stop).unwrap();
        sim.run_until(SimTime(502)).unwrap();
        let at_stop = sim.flow_metrics()[0].offered_pkts;
        assert!(at_stop >= before);
        sim.run_until(SimTime(20_000)).unwrap();
        assert_eq!(sim.flow_metrics()[0].offered_pkts, at_stop);
    }

    #[test]
    fn only_the_hosts_gateway_may_stop_it() {
        let f = fig1();
        let mut sim = Simulation::new(
            f.topo.clone(),
            nodes(&f, HostBehavior::Compliant),
            vec![flow(&f, 100.0, None)],
            Millis(60_000),
        );
        let stop = AitfMessage::FilterRequest {
            label: f.label(),
            req_type: RequestType::ToAttacker,
            attack_path: f.path(),
            requester: f.b_gw1,
        };
        sim.inject_message(f.g_gw1, f.b_host, stop).unwrap();
        sim.run_until(SimTime(1000)).unwrap();
        assert_eq!(sim.message_stats().dropped.get(&DropReason::IngressRule), Some(&1));
        assert_eq!(sim.flow_metrics()[0].offered_pkts, 101);
    }
}
