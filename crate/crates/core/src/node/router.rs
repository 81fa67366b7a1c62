//! Border router: victim's-gateway and attacker's-gateway roles.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contract::{RateSpec, TokenBucket, Verdict};
use crate::node::path::{AttackPathView, Counterpart};
use crate::node::{Ctx, Note, PacketVerdict, Timer};
use crate::tables::{FilterKind, FilterOrigin, FilterTable, ShadowLog, ShadowRejected};
use crate::types::{AitfMessage, DataPacket, FlowLabel, NodeId, Nonce, ProtocolParams, RequestType, SimTime};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterBehavior {
    #[default]
    Cooperative,
    /// Drops every request that asks it to act on the attacker side.
    IgnoreRequests,
}

#[derive(Debug, Clone)]
pub struct RouterConfig {
    pub filter_capacity: usize,
    pub shadow_capacity: usize,
    pub behavior: RouterBehavior,
    /// Rate at which each neighbor may send us requests.
    pub inbound: BTreeMap<NodeId, RateSpec>,
    /// Rate at which we may send requests to each neighbor.
    pub outbound: BTreeMap<NodeId, RateSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RouterCounters {
    pub requests_received: u64,
    pub requests_accepted: u64,
    pub policed_dropped: u64,
    pub ingress_rejected: u64,
    pub not_on_path: u64,
    pub duplicates: u64,
    pub requests_ignored: u64,
    pub handshakes_started: u64,
    pub handshake_timeouts: u64,
    pub nonce_mismatches: u64,
    pub long_term_installed: u64,
    pub budget_exhausted: u64,
    pub temp_installed: u64,
    pub escalations_sent: u64,
    pub on_off_detections: u64,
    pub disconnections: u64,
    pub requests_sent: u64,
}

/// Victim-side bookkeeping for one label, kept until its shadow entry expires.
#[derive(Debug, Clone)]
struct VictimChain {
    attack_path: Vec<NodeId>,
    round: usize,
    escalated: bool,
    temp_expires: SimTime,
    generation: u64,
    last_seen: Option<SimTime>,
    last_from: Option<NodeId>,
}

#[derive(Debug, Clone)]
struct Pending {
    label: FlowLabel,
    requester: NodeId,
    attack_path: Vec<NodeId>,
}

#[derive(Debug, Clone)]
struct GraceWatch {
    deadline: SimTime,
    client: NodeId,
    enforcing: bool,
    generation: u64,
    tripped: bool,
}

#[derive(Debug, Clone)]
pub struct Router {
    id: NodeId,
    params: ProtocolParams,
    behavior: RouterBehavior,
    policers: BTreeMap<NodeId, TokenBucket>,
    budgets: BTreeMap<NodeId, TokenBucket>,
    filters: FilterTable,
    shadow: ShadowLog,
    chains: BTreeMap<FlowLabel, VictimChain>,
    pending: BTreeMap<Nonce, Pending>,
    pending_keys: BTreeSet<(FlowLabel, NodeId)>,
    grace: BTreeMap<FlowLabel, GraceWatch>,
    rng: ChaCha8Rng,
    generation: u64,
    counters: RouterCounters,
}

impl Router {
    pub fn new(id: NodeId, params: ProtocolParams, cfg: RouterConfig) -> Router {
        let start = SimTime::ZERO;
        Router {
            id,
            params,
            behavior: cfg.behavior,
            policers: cfg.inbound.iter().map(|(n, s)| (*n, TokenBucket::new(*s, start))).collect(),
            budgets: cfg.outbound.iter().map(|(n, s)| (*n, TokenBucket::new(*s, start))).collect(),
            filters: FilterTable::new(cfg.filter_capacity),
            shadow: ShadowLog::new(cfg.shadow_capacity),
            chains: BTreeMap::new(),
            pending: BTreeMap::new(),
            pending_keys: BTreeSet::new(),
            grace: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(id.0) << 32 | 0x9e37)),
            generation: 0,
            counters: RouterCounters::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn behavior(&self) -> RouterBehavior {
        self.behavior
    }

    pub fn filters(&self) -> &FilterTable {
        &self.filters
    }

    pub fn shadow(&self) -> &ShadowLog {
        &self.shadow
    }

    pub fn counters(&self) -> &RouterCounters {
        &self.counters
    }

    pub fn pending_handshakes(&self) -> usize {
        self.pending.len()
    }

    fn next_generation(&mut self) -> u64 {
        self.generation += 1;
        self.generation
    }

    /// Drop victim chains whose shadow entry has run out.
    fn housekeeping(&mut self, now: SimTime) {
        for label in self.shadow.expire_labels(now) {
            self.chains.remove(&label);
        }
    }

    fn police(&mut self, from: NodeId, now: SimTime) -> Verdict {
        match self.policers.get_mut(&from) {
            Some(b) => b.police(now),
            None => Verdict::Accept,
        }
    }

    /// `from` is the neighbor that handed us the message; `source` is its
    /// originator as seen through ingress filtering.
    pub fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, source: NodeId, msg: AitfMessage) {
        self.housekeeping(ctx.now);
        match msg {
            AitfMessage::FilterRequest {
                label,
                req_type,
                attack_path,
                requester,
            } => {
                self.counters.requests_received += 1;
                if self.police(from, ctx.now) == Verdict::Drop {
                    self.counters.policed_dropped += 1;
                    ctx.note(Note::PolicedDrop { from, label });
                    return;
                }
                self.counters.requests_accepted += 1;
                match req_type {
                    RequestType::ToVictimGw => self.on_request_as_victim_gw(ctx, from, source, label, attack_path),
                    RequestType::ToAttackerGw | RequestType::ToAttacker => {
                        self.on_request_as_attacker_gw(ctx, label, attack_path, requester)
                    }
                }
            }
            AitfMessage::VerifyReply { label, nonce, .. } => self.on_verify_reply(ctx, label, nonce),
            AitfMessage::VerifyQuery { .. } => {}
        }
    }

    /// A victim-side request must arrive on the edge we route `label.dst`
    /// out of, and originate either at that destination or at the next
    /// gateway downstream of us on the attack path, which must also lie on
    /// our own route to the destination.
    pub fn ingress_verify(&self, ctx: &Ctx, label: &FlowLabel, from: NodeId, source: NodeId, attack_path: &[NodeId]) -> bool {
        if ctx.topo.next_hop_addr(self.id, label.dst) != Some(from) {
            return false;
        }
        let Some(victim) = ctx.topo.resolve(label.dst) else {
            return false;
        };
        if source == victim {
            return true;
        }
        let downstream = AttackPathView::new(attack_path)
            .position(self.id)
            .and_then(|i| attack_path.get(i + 1));
        downstream == Some(&source) && ctx.topo.path(self.id, victim).is_some_and(|route| route.contains(&source))
    }

    fn on_request_as_victim_gw(&mut self, ctx: &mut Ctx, from: NodeId, source: NodeId, label: FlowLabel, attack_path: Vec<NodeId>) {
        if !self.ingress_verify(ctx, &label, from, source, &attack_path) {
            self.counters.ingress_rejected += 1;
            ctx.note(Note::IngressRejected { from, label });
            return;
        }
        let view = AttackPathView::new(&attack_path);
        let Some(round) = view.round_of(self.id) else {
            self.counters.not_on_path += 1;
            ctx.note(Note::NotOnPath { label });
            return;
        };
        let counterpart = view.counterpart(self.id);
        if counterpart == Counterpart::None {
            self.counters.not_on_path += 1;
            ctx.note(Note::NotOnPath { label });
            return;
        }
        if self.chains.contains_key(&label) && self.filters.get_live(&label, ctx.now).is_some() {
            self.counters.duplicates += 1;
            ctx.note(Note::DuplicateRequest { label });
            return;
        }
        let origin = FilterOrigin {
            requester: Some(from),
            attack_path: attack_path.clone(),
            client: None,
        };
        if self
            .filters
            .install(label, ctx.now, self.params.t_tmp_ms, FilterKind::Temporary, origin)
            .is_err()
        {
            ctx.note(Note::TableFull { label });
            return;
        }
        self.counters.temp_installed += 1;
        ctx.note(Note::TempFilterInstalled { label, round });
        match self.shadow.log(label, ctx.now, self.params.t_ms, from, attack_path.clone()) {
            Ok(_) | Err(ShadowRejected::Duplicate) => {}
            Err(ShadowRejected::Full) => ctx.note(Note::ShadowOverflow { label }),
        }
        match counterpart {
            Counterpart::Remote(target) => {
                self.send_request(ctx, target, label, RequestType::ToAttackerGw, attack_path.clone());
            }
            Counterpart::Local => self.satisfy(ctx, label, attack_path.clone(), self.id),
            Counterpart::None => unreachable!(),
        }
        let generation = self.next_generation();
        let temp_expires = ctx.now + self.params.t_tmp_ms;
        let escalated = self.chains.get(&label).is_some_and(|c| c.escalated);
        self.chains.insert(
            label,
            VictimChain {
                attack_path,
                round,
                escalated,
                temp_expires,
                generation,
                last_seen: None,
                last_from: None,
            },
        );
        ctx.timer(temp_expires, Timer::TempExpiry { label, generation });
    }

    fn send_request(&mut self, ctx: &mut Ctx, to: NodeId, label: FlowLabel, req_type: RequestType, attack_path: Vec<NodeId>) {
        self.counters.requests_sent += 1;
        ctx.note(Note::RequestSent { to, req_type, label });
        ctx.send(
            to,
            AitfMessage::FilterRequest {
                label,
                req_type,
                attack_path,
                requester: self.id,
            },
        );
    }

    fn on_request_as_attacker_gw(&mut self, ctx: &mut Ctx, label: FlowLabel, attack_path: Vec<NodeId>, requester: NodeId) {
        if self.behavior == RouterBehavior::IgnoreRequests {
            self.counters.requests_ignored += 1;
            ctx.note(Note::RequestIgnored { label });
            return;
        }
        let live_long_term = self
            .filters
            .get_live(&label, ctx.now)
            .is_some_and(|e| e.kind == FilterKind::LongTerm);
        if live_long_term || self.pending_keys.contains(&(label, requester)) {
            self.counters.duplicates += 1;
            ctx.note(Note::DuplicateRequest { label });
            return;
        }
        let Some(victim) = ctx.topo.resolve(label.dst) else {
            return;
        };
        let nonce: Nonce = self.rng.gen();
        self.pending.insert(
            nonce,
            Pending {
                label,
                requester,
                attack_path,
            },
        );
        self.pending_keys.insert((label, requester));
        self.counters.handshakes_started += 1;
        ctx.note(Note::HandshakeStarted { label, query_to: victim });
        ctx.send(
            victim,
            AitfMessage::VerifyQuery {
                label,
                nonce,
                requester: self.id,
            },
        );
        ctx.timer(ctx.now + self.params.handshake_timeout_ms, Timer::HandshakeTimeout { nonce });
    }

    fn on_verify_reply(&mut self, ctx: &mut Ctx, label: FlowLabel, nonce: Nonce) {
        match self.pending.get(&nonce) {
            Some(p) if p.label == label => {}
            _ => {
                self.counters.nonce_mismatches += 1;
                ctx.note(Note::NonceMismatch { label });
                return;
            }
        }
        let p = self.pending.remove(&nonce).expect("checked above");
        self.pending_keys.remove(&(p.label, p.requester));
        self.satisfy(ctx, p.label, p.attack_path, p.requester);
    }

    /// Take over blocking: long-term filter, then ask the next node toward
    /// the attacker to stop.
    fn satisfy(&mut self, ctx: &mut Ctx, label: FlowLabel, attack_path: Vec<NodeId>, requester: NodeId) {
        let target = match AttackPathView::new(&attack_path).position(self.id) {
            Some(i) if i > 0 => Some(attack_path[i - 1]),
            _ => label.src.exact().and_then(|a| ctx.topo.resolve(a)),
        }
        .filter(|t| *t != self.id);
        let client = target.and_then(|t| ctx.topo.next_hop(self.id, t));
        if let Some(c) = client {
            if self.budgets.get(&c).is_some_and(|b| b.next_token_at(ctx.now) > ctx.now) {
                self.counters.budget_exhausted += 1;
                ctx.note(Note::BudgetExhausted { label });
                return;
            }
        }
        let origin = FilterOrigin {
            requester: Some(requester),
            attack_path: attack_path.clone(),
            client,
        };
        if self
            .filters
            .install(label, ctx.now, self.params.t_ms, FilterKind::LongTerm, origin)
            .is_err()
        {
            ctx.note(Note::TableFull { label });
            return;
        }
        self.counters.long_term_installed += 1;
        ctx.note(Note::LongTermFilterInstalled { label, client });
        let (Some(target), Some(client)) = (target, client) else {
            return;
        };
        if let Some(b) = self.budgets.get_mut(&client) {
            b.police(ctx.now);
        }
        self.send_request(ctx, target, label, RequestType::ToAttacker, attack_path);
        let generation = self.next_generation();
        let deadline = ctx.now + self.params.grace_attacker_ms;
        self.grace.insert(
            label,
            GraceWatch {
                deadline,
                client,
                enforcing: false,
                generation,
                tripped: false,
            },
        );
        ctx.timer(deadline, Timer::GraceExpiry { label, generation });
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        self.housekeeping(ctx.now);
        match timer {
            Timer::TempExpiry { label, generation } => self.on_temp_expiry(ctx, label, generation),
            Timer::HandshakeTimeout { nonce } => {
                if let Some(p) = self.pending.remove(&nonce) {
                    self.pending_keys.remove(&(p.label, p.requester));
                    self.counters.handshake_timeouts += 1;
                    ctx.note(Note::HandshakeTimeout { label: p.label });
                }
            }
            Timer::GraceExpiry { label, generation } => {
                if let Some(w) = self.grace.get_mut(&label) {
                    if w.generation == generation {
                        w.enforcing = true;
                        ctx.note(Note::GraceExpired { label });
                    }
                }
            }
            Timer::Detect { .. } | Timer::Pacer => {}
        }
    }

    fn on_temp_expiry(&mut self, ctx: &mut Ctx, label: FlowLabel, generation: u64) {
        let Some(chain) = self.chains.get(&label) else {
            return;
        };
        if chain.generation != generation {
            return;
        }
        if self
            .filters
            .get_live(&label, ctx.now)
            .is_some_and(|e| e.kind == FilterKind::LongTerm)
        {
            return;
        }
        let quiet_from = SimTime(chain.temp_expires.as_ms().saturating_sub(self.params.grace_victim_gw_ms.as_ms()));
        let still_arriving = chain.last_seen.is_some_and(|t| t >= quiet_from);
        if !still_arriving {
            self.filters.remove(&label);
            ctx.note(Note::TempFilterRemoved { label });
            return;
        }
        if !self.reinstall_temp(ctx, label) {
            return;
        }
        ctx.note(Note::TempFilterRenewed { label });
        if !self.chains[&label].escalated {
            self.escalate(ctx, label);
        }
    }

    fn reinstall_temp(&mut self, ctx: &mut Ctx, label: FlowLabel) -> bool {
        let chain = &self.chains[&label];
        let origin = FilterOrigin {
            requester: None,
            attack_path: chain.attack_path.clone(),
            client: None,
        };
        if self
            .filters
            .install(label, ctx.now, self.params.t_tmp_ms, FilterKind::Temporary, origin)
            .is_err()
        {
            ctx.note(Note::TableFull { label });
            return false;
        }
        let generation = self.next_generation();
        let temp_expires = ctx.now + self.params.t_tmp_ms;
        let chain = self.chains.get_mut(&label).expect("present");
        chain.generation = generation;
        chain.temp_expires = temp_expires;
        ctx.timer(temp_expires, Timer::TempExpiry { label, generation });
        true
    }

    /// Play the victim one level up, or cut the attacker side off when there
    /// is nobody left to ask.
    fn escalate(&mut self, ctx: &mut Ctx, label: FlowLabel) {
        let chain = self.chains.get_mut(&label).expect("present");
        chain.escalated = true;
        let path = chain.attack_path.clone();
        let round = chain.round;
        let last_from = chain.last_from;
        let view = AttackPathView::new(&path);
        match view.upstream(self.id) {
            Some(up) => {
                self.counters.escalations_sent += 1;
                ctx.note(Note::Escalated {
                    label,
                    round: round + 1,
                    to: up,
                });
                self.send_request(ctx, up, label, RequestType::ToVictimGw, path.clone());
            }
            None => {
                let neighbor = last_from.or_else(|| view.toward_attacker(self.id).and_then(|n| ctx.topo.next_hop(self.id, n)));
                if let Some(n) = neighbor {
                    self.counters.disconnections += 1;
                    ctx.note(Note::Disconnecting { neighbor: n, label });
                    ctx.disconnect(n, self.params.disconnect_ms);
                }
            }
        }
    }

    /// Data path. The caller has already dropped packets on a down link.
    pub fn on_packet(&mut self, ctx: &mut Ctx, pkt: &DataPacket, from: NodeId) -> PacketVerdict {
        let now = ctx.now;
        let hits = self.filters.match_packet(&pkt.header, now, Some(from));
        if !hits.is_empty() {
            for label in hits {
                if let Some(c) = self.chains.get_mut(&label) {
                    c.last_seen = Some(now);
                    c.last_from = Some(from);
                }
                if let Some(w) = self.grace.get_mut(&label) {
                    if w.enforcing && !w.tripped && w.client == from && now > w.deadline {
                        w.tripped = true;
                        self.counters.disconnections += 1;
                        ctx.note(Note::Disconnecting { neighbor: from, label });
                        ctx.disconnect(from, self.params.disconnect_ms);
                    }
                }
            }
            return PacketVerdict::DropFiltered;
        }
        self.housekeeping(now);
        let Some(entry) = self.shadow.lookup(&pkt.header, now) else {
            return PacketVerdict::Forward;
        };
        let label = entry.label;
        if !self.chains.contains_key(&label) {
            let path = entry.attack_path.clone();
            let round = AttackPathView::new(&path).round_of(self.id).unwrap_or(1);
            self.chains.insert(
                label,
                VictimChain {
                    attack_path: path,
                    round,
                    escalated: false,
                    temp_expires: now,
                    generation: 0,
                    last_seen: None,
                    last_from: None,
                },
            );
        }
        self.counters.on_off_detections += 1;
        ctx.note(Note::OnOffDetected { label });
        if self.reinstall_temp(ctx, label) {
            self.counters.temp_installed += 1;
            let round = self.chains[&label].round;
            ctx.note(Note::TempFilterInstalled { label, round });
        }
        let chain = self.chains.get_mut(&label).expect("present");
        chain.last_seen = Some(now);
        chain.last_from = Some(from);
        if !chain.escalated {
            self.escalate(ctx, label);
        }
        PacketVerdict::DropShadow
    }
}
