//! End-host: victim detection and request pacing, verification replies, and
//! the attacker's response to stop requests.

use std::collections::{BTreeMap, VecDeque};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::contract::{RateSpec, TokenBucket, Verdict};
use crate::node::{Ctx, Note, Timer};
use crate::types::{AitfMessage, DataPacket, FlowLabel, Millis, NodeId, PacketHeader, ProtocolParams, RequestType, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum HostBehavior {
    Compliant,
    IgnoreRequests,
    OnOff {
        on_ms: u64,
        off_ms: u64,
    },
    /// Compliant toward its own flows, but also emits forged messages.
    Spoofer,
}

/// How a victim turns an undesired packet into a request label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Request the classifier label itself.
    Label,
    /// Source and destination of the offending packet.
    #[default]
    SrcDst,
    /// The packet's full 5-tuple.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classifier {
    pub label: FlowLabel,
    pub detection: Millis,
    pub granularity: Granularity,
}

impl Classifier {
    pub fn request_label(&self, h: &PacketHeader) -> FlowLabel {
        match self.granularity {
            Granularity::Label => self.label,
            Granularity::SrcDst => FlowLabel::src_dst(h.src, h.dst),
            Granularity::Exact => FlowLabel::exact(h),
        }
    }
}

/// Emission state of one outbound flow.
#[derive(Debug, Clone)]
pub struct HostFlow {
    pub header: PacketHeader,
    stopped_until: SimTime,
    /// Start of the current on-off cycle; may precede time zero.
    anchor: i64,
}

/// A pre-built message a spoofer injects at a given time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forgery {
    pub at: SimTime,
    pub to: NodeId,
    pub msg: AitfMessage,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HostCounters {
    pub detections: u64,
    pub requests_sent: u64,
    pub verify_replied: u64,
    pub verify_refused: u64,
    pub stop_requests: u64,
    pub stop_policed: u64,
    pub forged_sent: u64,
}

const QUEUED: SimTime = SimTime::MAX;

#[derive(Debug, Clone)]
pub struct Host {
    id: NodeId,
    gateway: NodeId,
    params: ProtocolParams,
    behavior: HostBehavior,
    classifiers: Vec<Classifier>,
    /// Label -> when the request stops counting as outstanding.
    outstanding: BTreeMap<FlowLabel, SimTime>,
    queue: VecDeque<(FlowLabel, Vec<NodeId>)>,
    pacer: Option<TokenBucket>,
    pacer_armed: bool,
    inbound: Option<TokenBucket>,
    flows: BTreeMap<usize, HostFlow>,
    flows_by_src: BTreeMap<Ipv4Addr, Vec<usize>>,
    forgeries: Vec<Forgery>,
    counters: HostCounters,
}

impl Host {
    /// `outbound` polices our own requests to the gateway; `inbound` polices
    /// stop requests the gateway sends us.
    pub fn new(
        id: NodeId,
        gateway: NodeId,
        params: ProtocolParams,
        behavior: HostBehavior,
        outbound: Option<RateSpec>,
        inbound: Option<RateSpec>,
    ) -> Host {
        Host {
            id,
            gateway,
            params,
            behavior,
            classifiers: Vec::new(),
            outstanding: BTreeMap::new(),
            queue: VecDeque::new(),
            pacer: outbound.map(|s| TokenBucket::new(s, SimTime::ZERO)),
            pacer_armed: false,
            inbound: inbound.map(|s| TokenBucket::new(s, SimTime::ZERO)),
            flows: BTreeMap::new(),
            flows_by_src: BTreeMap::new(),
            forgeries: Vec::new(),
            counters: HostCounters::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn behavior(&self) -> &HostBehavior {
        &self.behavior
    }

    pub fn counters(&self) -> &HostCounters {
        &self.counters
    }

    pub fn add_classifier(&mut self, c: Classifier) {
        self.classifiers.push(c);
    }

    pub fn add_forgery(&mut self, f: Forgery) {
        self.forgeries.push(f);
    }

    pub fn forgeries(&self) -> &[Forgery] {
        &self.forgeries
    }

    pub fn add_flow(&mut self, flow: usize, header: PacketHeader, start: SimTime) {
        self.flows_by_src.entry(header.src).or_default().push(flow);
        self.flows.insert(
            flow,
            HostFlow {
                header,
                stopped_until: SimTime::ZERO,
                anchor: start.as_ms() as i64,
            },
        );
    }

    /// Whether the flow's next packet goes out at `now`.
    pub fn may_emit(&self, flow: usize, now: SimTime) -> bool {
        let Some(f) = self.flows.get(&flow) else {
            return false;
        };
        if now < f.stopped_until {
            return false;
        }
        match self.behavior {
            HostBehavior::OnOff { on_ms, off_ms } => {
                let period = (on_ms + off_ms) as i64;
                let phase = (now.as_ms() as i64 - f.anchor).rem_euclid(period);
                phase < on_ms as i64
            }
            _ => true,
        }
    }

    pub fn is_outstanding(&self, label: &FlowLabel, now: SimTime) -> bool {
        self.outstanding.get(label).is_some_and(|exp| now < *exp)
    }

    /// A delivered packet. Undesired ones start (or join) a request.
    pub fn on_packet(&mut self, ctx: &mut Ctx, pkt: &DataPacket) {
        let Some(c) = self.classifiers.iter().find(|c| c.label.matches(&pkt.header)) else {
            return;
        };
        let label = c.request_label(&pkt.header);
        let detection = c.detection;
        if self.is_outstanding(&label, ctx.now) {
            return;
        }
        self.counters.detections += 1;
        self.outstanding.insert(label, QUEUED);
        if detection.as_ms() == 0 {
            self.enqueue(ctx, label, pkt.recorded_route.clone());
        } else {
            ctx.timer(
                ctx.now + detection,
                Timer::Detect {
                    label,
                    attack_path: pkt.recorded_route.clone(),
                },
            );
        }
    }

    fn enqueue(&mut self, ctx: &mut Ctx, label: FlowLabel, attack_path: Vec<NodeId>) {
        self.queue.push_back((label, attack_path));
        self.pump(ctx);
    }

    /// Send queued requests as fast as our own contract allows.
    fn pump(&mut self, ctx: &mut Ctx) {
        while let Some((label, _)) = self.queue.front() {
            let label = *label;
            if let Some(p) = self.pacer.as_mut() {
                if p.police(ctx.now) == Verdict::Drop {
                    if !self.pacer_armed {
                        self.pacer_armed = true;
                        ctx.note(Note::RequestQueued { label });
                        ctx.timer(p.next_token_at(ctx.now), Timer::Pacer);
                    }
                    return;
                }
            }
            let (label, attack_path) = self.queue.pop_front().expect("front exists");
            self.outstanding.insert(label, ctx.now + self.params.t_ms);
            self.counters.requests_sent += 1;
            ctx.note(Note::RequestSent {
                to: self.gateway,
                req_type: RequestType::ToVictimGw,
                label,
            });
            ctx.send(
                self.gateway,
                AitfMessage::FilterRequest {
                    label,
                    req_type: RequestType::ToVictimGw,
                    attack_path,
                    requester: self.id,
                },
            );
        }
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx, timer: Timer) {
        match timer {
            Timer::Detect { label, attack_path } => self.enqueue(ctx, label, attack_path),
            Timer::Pacer => {
                self.pacer_armed = false;
                self.pump(ctx);
            }
            _ => {}
        }
    }

    pub fn on_message(&mut self, ctx: &mut Ctx, from: NodeId, msg: AitfMessage) {
        match msg {
            AitfMessage::VerifyQuery { label, nonce, requester } => {
                if self.answers_for(&label, ctx.now) {
                    self.counters.verify_replied += 1;
                    ctx.note(Note::VerifyReplied { label, to: requester });
                    ctx.send(requester, AitfMessage::reply_to(label, nonce, self.id));
                } else {
                    self.counters.verify_refused += 1;
                    ctx.note(Note::VerifyRefused { label });
                }
            }
            AitfMessage::FilterRequest {
                label,
                req_type: RequestType::ToAttacker,
                ..
            } => {
                self.counters.stop_requests += 1;
                if let Some(b) = self.inbound.as_mut() {
                    if b.police(ctx.now) == Verdict::Drop {
                        self.counters.stop_policed += 1;
                        ctx.note(Note::PolicedDrop { from, label });
                        return;
                    }
                }
                self.on_stop_request(ctx, label);
            }
            _ => {}
        }
    }

    /// Only a request we actually sent, and still stand behind, gets a reply.
    fn answers_for(&self, label: &FlowLabel, now: SimTime) -> bool {
        let sent_and_live = |exp: &SimTime| *exp != QUEUED && now < *exp;
        if self.outstanding.get(label).is_some_and(sent_and_live) {
            return true;
        }
        self.outstanding.iter().any(|(l, exp)| sent_and_live(exp) && l.subsumes(label))
    }

    fn on_stop_request(&mut self, ctx: &mut Ctx, label: FlowLabel) {
        let now = ctx.now;
        let candidates: Vec<usize> = match label.src.exact() {
            Some(a) => self.flows_by_src.get(&a).cloned().unwrap_or_default(),
            None => self.flows.keys().copied().collect(),
        };
        let matching: Vec<usize> = candidates.into_iter().filter(|i| label.matches(&self.flows[i].header)).collect();
        match self.behavior {
            HostBehavior::IgnoreRequests => ctx.note(Note::StopIgnored { label }),
            HostBehavior::Compliant | HostBehavior::Spoofer => {
                let until = now + self.params.t_ms;
                for i in matching {
                    let f = self.flows.get_mut(&i).expect("listed");
                    f.stopped_until = f.stopped_until.max(until);
                }
                ctx.note(Note::FlowStopped { label, until });
            }
            HostBehavior::OnOff { on_ms, off_ms } => {
                for i in matching {
                    // put the cycle at the start of its off phase
                    self.flows.get_mut(&i).expect("listed").anchor = now.as_ms() as i64 - on_ms as i64;
                }
                ctx.note(Note::FlowPaused {
                    label,
                    resume_at: now + Millis(off_ms),
                });
            }
        }
    }

    pub fn forge(&mut self, ctx: &mut Ctx, idx: usize) {
        let f = self.forgeries[idx].clone();
        self.counters.forged_sent += 1;
        let kind = match &f.msg {
            AitfMessage::FilterRequest { req_type, .. } => req_type.to_string(),
            AitfMessage::VerifyQuery { .. } => "VERIFY_QUERY".into(),
            AitfMessage::VerifyReply { .. } => "VERIFY_REPLY".into(),
        };
        ctx.note(Note::ForgedSent { to: f.to, kind });
        ctx.send(f.to, f.msg);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::testutil::{fig1, Fig1};
    use crate::node::Output;
    use crate::types::PROTO_UDP;

    fn victim(f: &Fig1, detection: u64) -> Host {
        let mut h = Host::new(
            f.g_host,
            f.g_gw1,
            ProtocolParams::default(),
            HostBehavior::Compliant,
            Some(RateSpec { rate: 100.0, burst: 100 }),
            None,
        );
        h.add_classifier(Classifier {
            label: FlowLabel::to_dst(f.addr(f.g_host)),
            detection: Millis(detection),
            granularity: Granularity::SrcDst,
        });
        h
    }

    fn header(f: &Fig1, sport: u16) -> PacketHeader {
        PacketHeader {
            src: f.addr(f.b_host),
            dst: f.addr(f.g_host),
            proto: PROTO_UDP,
            sport,
            dport: 9,
        }
    }

    fn pkt(f: &Fig1) -> DataPacket {
        DataPacket {
            header: header(f, 1),
            size_bytes: 100,
            recorded_route: f.path(),
            flow: 0,
            emitted_at: SimTime::ZERO,
        }
    }

    fn run<F: FnOnce(&mut Ctx)>(f: &Fig1, me: NodeId, now: u64, body: F) -> Vec<Output> {
        let mut ctx = Ctx::new(SimTime(now), &f.topo, me);
        body(&mut ctx);
        ctx.into_outputs()
    }

    fn requests(out: &[Output]) -> Vec<&AitfMessage> {
        out.iter()
            .filter_map(|o| match o {
                Output::Send { msg, .. } if msg.is_filter_request() => Some(msg),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn immediate_detection_then_dedup() {
        let f = fig1();
        let mut h = victim(&f, 0);
        let out = run(&f, f.g_host, 0, |c| h.on_packet(c, &pkt(&f)));
        let r = requests(&out);
        assert_eq!(r.len(), 1);
        match r[0] {
            AitfMessage::FilterRequest {
                label,
                req_type,
                attack_path,
                ..
            } => {
                assert_eq!(*label, f.label());
                assert_eq!(*req_type, RequestType::ToVictimGw);
                assert_eq!(*attack_path, f.path());
            }
            _ => unreachable!(),
        }
        let out = run(&f, f.g_host, 1, |c| h.on_packet(c, &pkt(&f)));
        assert!(requests(&out).is_empty());
    }

    #[test]
    fn detection_delay_timeline() {
        let f = fig1();
        let mut h = victim(&f, 100);
        let out = run(&f, f.g_host, 40, |c| h.on_packet(c, &pkt(&f)));
        assert!(requests(&out).is_empty());
        let timer = out
            .iter()
            .find_map(|o| match o {
                Output::Timer { at, timer } => Some((*at, timer.clone())),
                _ => None,
            })
            .unwrap();
        assert_eq!(timer.0, SimTime(140));
        // packets during detection do not start a second one
        let out = run(&f, f.g_host, 90, |c| h.on_packet(c, &pkt(&f)));
        assert!(out.is_empty());
        let out = run(&f, f.g_host, 140, |c| h.on_timer(c, timer.1));
        assert_eq!(requests(&out).len(), 1);
    }

    #[test]
    fn requests_are_paced_by_the_contract() {
        let f = fig1();
        let mut h = Host::new(
            f.g_host,
            f.g_gw1,
            ProtocolParams::default(),
            HostBehavior::Compliant,
            Some(RateSpec { rate: 1.0, burst: 1 }),
            None,
        );
        h.add_classifier(Classifier {
            label: FlowLabel::to_dst(f.addr(f.g_host)),
            detection: Millis(0),
            granularity: Granularity::Exact,
        });
        let mut sent = 0;
        let mut pacer_at = None;
        for sport in 0..3 {
            let mut p = pkt(&f);
            p.header.sport = sport;
            let out = run(&f, f.g_host, 0, |c| h.on_packet(c, &p));
            sent += requests(&out).len();
            for o in &out {
                if let Output::Timer { at, timer: Timer::Pacer } = o {
                    pacer_at = Some(*at);
                }
            }
        }
        assert_eq!(sent, 1);
        assert_eq!(pacer_at, Some(SimTime(1000)));
        let out = run(&f, f.g_host, 1000, |c| h.on_timer(c, Timer::Pacer));
        assert_eq!(requests(&out).len(), 1);
        assert!(out.iter().any(|o| matches!(
            o,
            Output::Timer {
                at: SimTime(2000),
                timer: Timer::Pacer
            }
        )));
    }

    fn query(f: &Fig1, label: FlowLabel) -> AitfMessage {
        AitfMessage::VerifyQuery {
            label,
            nonce: 0xfeed,
            requester: f.b_gw1,
        }
    }

    #[test]
    fn replies_only_to_own_requests() {
        let f = fig1();
        let mut h = victim(&f, 0);
        run(&f, f.g_host, 0, |c| h.on_packet(c, &pkt(&f)));
        let out = run(&f, f.g_host, 300, |c| h.on_message(c, f.g_gw1, query(&f, f.label())));
        assert!(out.contains(&Output::Send {
            to: f.b_gw1,
            msg: AitfMessage::reply_to(f.label(), 0xfeed, f.g_host)
        }));
        // a narrower label is covered by what we asked for
        let mut narrow = f.label();
        narrow.dport = Some(9);
        let out = run(&f, f.g_host, 300, |c| h.on_message(c, f.g_gw1, query(&f, narrow)));
        assert_eq!(out.iter().filter(|o| matches!(o, Output::Send { .. })).count(), 1);
        // never complained about this one
        let other = FlowLabel::src_dst("10.9.9.9".parse().unwrap(), f.addr(f.g_host));
        let out = run(&f, f.g_host, 300, |c| h.on_message(c, f.g_gw1, query(&f, other)));
        assert!(!out.iter().any(|o| matches!(o, Output::Send { .. })));
    }

    #[test]
    fn silent_once_request_is_older_than_t() {
        let f = fig1();
        let mut h = victim(&f, 0);
        run(&f, f.g_host, 0, |c| h.on_packet(c, &pkt(&f)));
        let t = ProtocolParams::default().t_ms.as_ms();
        let out = run(&f, f.g_host, t - 1, |c| h.on_message(c, f.g_gw1, query(&f, f.label())));
        assert!(out.iter().any(|o| matches!(o, Output::Send { .. })));
        let out = run(&f, f.g_host, t + 1, |c| h.on_message(c, f.g_gw1, query(&f, f.label())));
        assert!(!out.iter().any(|o| matches!(o, Output::Send { .. })));
    }

    fn attacker(f: &Fig1, behavior: HostBehavior) -> Host {
        let mut h = Host::new(
            f.b_host,
            f.b_gw1,
            ProtocolParams::default(),
            behavior,
            None,
            Some(RateSpec { rate: 1.0, burst: 1 }),
        );
        h.add_flow(0, header(f, 1), SimTime(0));
        h
    }

    fn stop(f: &Fig1) -> AitfMessage {
        AitfMessage::FilterRequest {
            label: f.label(),
            req_type: RequestType::ToAttacker,
            attack_path: f.path(),
            requester: f.b_gw1,
        }
    }

    #[test]
    fn compliant_attacker_stops_for_t() {
        let f = fig1();
        let mut h = attacker(&f, HostBehavior::Compliant);
        assert!(h.may_emit(0, SimTime(100)));
        run(&f, f.b_host, 500, |c| h.on_message(c, f.b_gw1, stop(&f)));
        assert!(!h.may_emit(0, SimTime(500)));
        assert!(!h.may_emit(0, SimTime(60_499)));
        assert!(h.may_emit(0, SimTime(60_500)));
    }

    #[test]
    fn ignoring_attacker_keeps_sending() {
        let f = fig1();
        let mut h = attacker(&f, HostBehavior::IgnoreRequests);
        run(&f, f.b_host, 500, |c| h.on_message(c, f.b_gw1, stop(&f)));
        assert!(h.may_emit(0, SimTime(501)));
    }

    #[test]
    fn on_off_schedule_and_pause() {
        let f = fig1();
        let mut h = attacker(&f, HostBehavior::OnOff { on_ms: 1000, off_ms: 2000 });
        // replay of the schedule: on for [0,1000), off for [1000,3000), ...
        for t in (0..9000).step_by(50) {
            let expected = t % 3000 < 1000;
            assert_eq!(h.may_emit(0, SimTime(t)), expected, "t={t}");
        }
        run(&f, f.b_host, 3500, |c| h.on_message(c, f.b_gw1, stop(&f)));
        assert!(!h.may_emit(0, SimTime(3500)));
        assert!(!h.may_emit(0, SimTime(5499)));
        assert!(h.may_emit(0, SimTime(5500)));
        assert!(!h.may_emit(0, SimTime(6500)));
    }

    #[test]
    fn stop_requests_are_policed() {
        let f = fig1();
        let mut h = attacker(&f, HostBehavior::Compliant);
        h.add_flow(1, header(&f, 2), SimTime(0));
        run(&f, f.b_host, 0, |c| h.on_message(c, f.b_gw1, stop(&f)));
        let msg = AitfMessage::FilterRequest {
            label: FlowLabel::exact(&header(&f, 2)),
            req_type: RequestType::ToAttacker,
            attack_path: vec![],
            requester: f.b_gw1,
        };
        run(&f, f.b_host, 10, |c| h.on_message(c, f.b_gw1, msg));
        assert_eq!(h.counters().stop_policed, 1);
        // flow 1 was already covered by the src/dst stop
        assert!(!h.may_emit(1, SimTime(10)));
    }
}
