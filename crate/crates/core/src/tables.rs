//! Per-router stores: the bounded wire-speed filter table and the shadow log
//! of filtering requests kept in bulk memory.
//!
//! Both stores use inclusive expiry: an entry with `expires_at == now` is
//! already gone. Lookups are indexed by exact source address, with a side
//! list for labels whose source is a prefix or wildcard.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::net::Ipv4Addr;

use serde::Serialize;
use thiserror::Error;

use crate::types::{FlowLabel, Millis, NodeId, PacketHeader, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Victim-side stopgap held for `T_tmp`.
    Temporary,
    /// Attacker-side filter held for `T`.
    LongTerm,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterOrigin {
    pub requester: Option<NodeId>,
    pub attack_path: Vec<NodeId>,
    /// For attacker-side filters: the neighbor that was asked to stop.
    pub client: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterEntry {
    pub label: FlowLabel,
    pub kind: FilterKind,
    pub installed_at: SimTime,
    pub expires_at: SimTime,
    pub origin: FilterOrigin,
    pub last_matched_at: Option<SimTime>,
    /// Neighbor the most recent matching packet arrived from.
    pub last_matched_from: Option<NodeId>,
}

impl FilterEntry {
    pub fn is_live(&self, now: SimTime) -> bool {
        now < self.expires_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("filter table full ({capacity} entries)")]
pub struct TableFull {
    pub capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Installed {
    New,
    /// The label already had a live entry; its expiry was extended.
    Refreshed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVerdict {
    Drop,
    Pass,
}

/// Labels bucketed by exact source so per-packet lookups stay cheap.
#[derive(Debug, Clone)]
struct SrcIndex<K> {
    by_src: HashMap<Ipv4Addr, Vec<K>>,
    other: Vec<K>,
}

impl<K> Default for SrcIndex<K> {
    fn default() -> Self {
        SrcIndex {
            by_src: HashMap::new(),
            other: Vec::new(),
        }
    }
}

impl<K: PartialEq + Copy> SrcIndex<K> {
    fn insert(&mut self, label: &FlowLabel, key: K) {
        match label.src.exact() {
            Some(a) => self.by_src.entry(a).or_default().push(key),
            None => self.other.push(key),
        }
    }

    fn remove(&mut self, label: &FlowLabel, key: K) {
        let list = match label.src.exact() {
            Some(a) => match self.by_src.get_mut(&a) {
                Some(l) => l,
                None => return,
            },
            None => &mut self.other,
        };
        if let Some(pos) = list.iter().position(|k| *k == key) {
            list.remove(pos);
        }
        if let Some(a) = label.src.exact() {
            if self.by_src.get(&a).is_some_and(|l| l.is_empty()) {
                self.by_src.remove(&a);
            }
        }
    }

    fn candidates<'a>(&'a self, h: &PacketHeader) -> impl Iterator<Item = K> + 'a {
        self.by_src.get(&h.src).into_iter().flatten().chain(self.other.iter()).copied()
    }
}

#[derive(Debug, Clone)]
pub struct FilterTable {
    capacity: usize,
    entries: HashMap<FlowLabel, FilterEntry>,
    index: SrcIndex<FlowLabel>,
    expiry: BinaryHeap<Reverse<(SimTime, FlowLabel)>>,
    high_water: usize,
    table_full: u64,
    per_client: HashMap<NodeId, usize>,
    per_client_high_water: BTreeMap<NodeId, usize>,
}

impl FilterTable {
    pub fn new(capacity: usize) -> FilterTable {
        FilterTable {
            capacity,
            entries: HashMap::new(),
            index: SrcIndex::default(),
            expiry: BinaryHeap::new(),
            high_water: 0,
            table_full: 0,
            per_client: HashMap::new(),
            per_client_high_water: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of stored entries, including any expired ones not yet purged.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn live_count(&self, now: SimTime) -> usize {
        self.entries.values().filter(|e| e.is_live(now)).count()
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn table_full_count(&self) -> u64 {
        self.table_full
    }

    pub fn client_high_water(&self) -> &BTreeMap<NodeId, usize> {
        &self.per_client_high_water
    }

    pub fn client_count(&self, client: NodeId) -> usize {
        self.per_client.get(&client).copied().unwrap_or(0)
    }

    pub fn get(&self, label: &FlowLabel) -> Option<&FilterEntry> {
        self.entries.get(label)
    }

    pub fn get_live(&self, label: &FlowLabel, now: SimTime) -> Option<&FilterEntry> {
        self.entries.get(label).filter(|e| e.is_live(now))
    }

    pub fn entries(&self) -> impl Iterator<Item = &FilterEntry> {
        self.entries.values()
    }

    /// Install (or refresh) a filter. Expired entries are purged first so they
    /// never count against capacity.
    pub fn install(
        &mut self,
        label: FlowLabel,
        now: SimTime,
        lifetime: Millis,
        kind: FilterKind,
        origin: FilterOrigin,
    ) -> Result<Installed, TableFull> {
        assert!(lifetime.0 > 0, "filter lifetime must be positive");
        self.expire(now);
        let expires_at = now + lifetime;
        if let Some(e) = self.entries.get_mut(&label) {
            if expires_at > e.expires_at {
                e.expires_at = expires_at;
                self.expiry.push(Reverse((expires_at, label)));
            }
            if kind == FilterKind::LongTerm {
                e.kind = FilterKind::LongTerm;
            }
            let old_client = e.origin.client;
            e.origin = origin;
            let new_client = e.origin.client;
            if old_client != new_client {
                self.move_client(old_client, new_client);
            }
            return Ok(Installed::Refreshed);
        }
        if self.entries.len() >= self.capacity {
            self.table_full += 1;
            return Err(TableFull { capacity: self.capacity });
        }
        let client = origin.client;
        self.entries.insert(
            label,
            FilterEntry {
                label,
                kind,
                installed_at: now,
                expires_at,
                origin,
                last_matched_at: None,
                last_matched_from: None,
            },
        );
        self.index.insert(&label, label);
        self.expiry.push(Reverse((expires_at, label)));
        self.high_water = self.high_water.max(self.entries.len());
        self.move_client(None, client);
        Ok(Installed::New)
    }

    fn move_client(&mut self, from: Option<NodeId>, to: Option<NodeId>) {
        if let Some(c) = from {
            if let Some(n) = self.per_client.get_mut(&c) {
                *n -= 1;
            }
        }
        if let Some(c) = to {
            let n = self.per_client.entry(c).or_insert(0);
            *n += 1;
            let hw = self.per_client_high_water.entry(c).or_insert(0);
            *hw = (*hw).max(*n);
        }
    }

    pub fn remove(&mut self, label: &FlowLabel) -> Option<FilterEntry> {
        let e = self.entries.remove(label)?;
        self.index.remove(label, *label);
        self.move_client(e.origin.client, None);
        Some(e)
    }

    /// Drop every entry with `expires_at <= now`. Idempotent for a fixed `now`.
    pub fn expire(&mut self, now: SimTime) -> usize {
        let mut removed = 0;
        while let Some(Reverse((at, label))) = self.expiry.peek().copied() {
            if at > now {
                break;
            }
            self.expiry.pop();
            if self.entries.get(&label).is_some_and(|e| e.expires_at == at) {
                self.remove(&label);
                removed += 1;
            }
        }
        removed
    }

    /// Labels of every live entry matching `header`, in index order. Each
    /// matching entry records the hit.
    pub fn match_packet(&mut self, header: &PacketHeader, now: SimTime, from: Option<NodeId>) -> Vec<FlowLabel> {
        let hits: Vec<FlowLabel> = self
            .index
            .candidates(header)
            .filter(|l| l.matches(header))
            .filter(|l| self.entries.get(l).is_some_and(|e| e.is_live(now)))
            .collect();
        for l in &hits {
            if let Some(e) = self.entries.get_mut(l) {
                e.last_matched_at = Some(now);
                e.last_matched_from = from;
            }
        }
        hits
    }

    pub fn filter_match(&mut self, header: &PacketHeader, now: SimTime) -> FilterVerdict {
        if self.match_packet(header, now, None).is_empty() {
            FilterVerdict::Pass
        } else {
            FilterVerdict::Drop
        }
    }

    /// Read-only check used by the forwarding audit.
    pub fn would_match(&self, header: &PacketHeader, now: SimTime) -> bool {
        self.index
            .candidates(header)
            .any(|l| l.matches(header) && self.entries.get(&l).is_some_and(|e| e.is_live(now)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowEntry {
    pub seq: u64,
    pub label: FlowLabel,
    pub logged_at: SimTime,
    pub expires_at: SimTime,
    pub requester: NodeId,
    pub attack_path: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ShadowRejected {
    #[error("shadow log full")]
    Full,
    #[error("label already logged")]
    Duplicate,
}

/// Memory of accepted filtering requests, each retained for `T`.
#[derive(Debug, Clone)]
pub struct ShadowLog {
    capacity: usize,
    next_seq: u64,
    entries: HashMap<u64, ShadowEntry>,
    by_label: HashMap<FlowLabel, u64>,
    index: SrcIndex<u64>,
    expiry: VecDeque<(SimTime, u64)>,
    out_of_order: BinaryHeap<Reverse<(SimTime, u64)>>,
    high_water: usize,
    overflow: u64,
}

impl ShadowLog {
    pub fn new(capacity: usize) -> ShadowLog {
        ShadowLog {
            capacity,
            next_seq: 0,
            entries: HashMap::new(),
            by_label: HashMap::new(),
            index: SrcIndex::default(),
            expiry: VecDeque::new(),
            out_of_order: BinaryHeap::new(),
            high_water: 0,
            overflow: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn overflow_count(&self) -> u64 {
        self.overflow
    }

    pub fn get(&self, label: &FlowLabel) -> Option<&ShadowEntry> {
        self.by_label.get(label).and_then(|s| self.entries.get(s))
    }

    pub fn log(
        &mut self,
        label: FlowLabel,
        now: SimTime,
        retention: Millis,
        requester: NodeId,
        attack_path: Vec<NodeId>,
    ) -> Result<u64, ShadowRejected> {
        self.expire(now);
        if self.by_label.contains_key(&label) {
            return Err(ShadowRejected::Duplicate);
        }
        if self.entries.len() >= self.capacity {
            self.overflow += 1;
            return Err(ShadowRejected::Full);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let expires_at = now + retention;
        self.entries.insert(
            seq,
            ShadowEntry {
                seq,
                label,
                logged_at: now,
                expires_at,
                requester,
                attack_path,
            },
        );
        self.by_label.insert(label, seq);
        self.index.insert(&label, seq);
        // Retention is normally constant, so the deque stays sorted; anything
        // that would break the order goes to the heap instead.
        if self.expiry.back().is_none_or(|(at, _)| *at <= expires_at) {
            self.expiry.push_back((expires_at, seq));
        } else {
            self.out_of_order.push(Reverse((expires_at, seq)));
        }
        self.high_water = self.high_water.max(self.entries.len());
        Ok(seq)
    }

    fn remove_seq(&mut self, seq: u64) -> Option<ShadowEntry> {
        let e = self.entries.remove(&seq)?;
        self.by_label.remove(&e.label);
        self.index.remove(&e.label, seq);
        Some(e)
    }

    /// Remove entries with `expires_at <= now`; returns the removed labels.
    pub fn expire_labels(&mut self, now: SimTime) -> Vec<FlowLabel> {
        let mut out = Vec::new();
        while let Some(&(at, seq)) = self.expiry.front() {
            if at > now {
                break;
            }
            self.expiry.pop_front();
            if let Some(e) = self.remove_seq(seq) {
                out.push(e.label);
            }
        }
        while let Some(Reverse((at, seq))) = self.out_of_order.peek().copied() {
            if at > now {
                break;
            }
            self.out_of_order.pop();
            if let Some(e) = self.remove_seq(seq) {
                out.push(e.label);
            }
        }
        out
    }

    pub fn expire(&mut self, now: SimTime) -> usize {
        self.expire_labels(now).len()
    }

    /// Earliest-logged live entry whose label matches `header`.
    pub fn lookup(&self, header: &PacketHeader, now: SimTime) -> Option<&ShadowEntry> {
        self.index
            .candidates(header)
            .filter_map(|s| self.entries.get(&s))
            .filter(|e| now < e.expires_at && e.label.matches(header))
            .min_by_key(|e| e.seq)
    }
}

pub fn shadow_lookup<'a>(log: &'a ShadowLog, header: &PacketHeader, now: SimTime) -> Option<&'a ShadowEntry> {
    log.lookup(header, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label(s: &str) -> FlowLabel {
        s.parse().unwrap()
    }

    fn hdr(src: &str, dst: &str) -> PacketHeader {
        PacketHeader {
            src: src.parse().unwrap(),
            dst: dst.parse().unwrap(),
            proto: 17,
            sport: 1,
            dport: 2,
        }
    }

    fn tmp(t: &mut FilterTable, l: &str, now: u64, life: u64) -> Result<Installed, TableFull> {
        t.install(label(l), SimTime(now), Millis(life), FilterKind::Temporary, FilterOrigin::default())
    }

    #[test]
    fn install_into_empty_table() {
        let mut t = FilterTable::new(60);
        assert_eq!(tmp(&mut t, "10.2.0.1>10.1.0.1", 0, 600), Ok(Installed::New));
        assert_eq!(t.len(), 1);
        assert_eq!(t.high_water(), 1);
    }

    #[test]
    fn full_table_rejects_new_label() {
        let mut t = FilterTable::new(60);
        for i in 0..60 {
            tmp(&mut t, &format!("10.2.0.{i}>10.1.0.1"), 0, 600).unwrap();
        }
        assert_eq!(tmp(&mut t, "10.3.0.1>10.1.0.1", 1, 600), Err(TableFull { capacity: 60 }));
        assert_eq!(t.table_full_count(), 1);
        // a duplicate still refreshes at capacity
        assert_eq!(tmp(&mut t, "10.2.0.7>10.1.0.1", 1, 600), Ok(Installed::Refreshed));
        assert_eq!(t.len(), 60);
    }

    #[test]
    fn match_before_and_after_expiry() {
        let mut t = FilterTable::new(4);
        tmp(&mut t, "10.2.0.1>10.1.0.1", 0, 600).unwrap();
        let h = hdr("10.2.0.1", "10.1.0.1");
        assert_eq!(t.filter_match(&h, SimTime(599)), FilterVerdict::Drop);
        assert_eq!(t.get(&label("10.2.0.1>10.1.0.1")).unwrap().last_matched_at, Some(SimTime(599)));
        assert_eq!(t.filter_match(&h, SimTime(600)), FilterVerdict::Pass);
        assert_eq!(t.filter_match(&h, SimTime(601)), FilterVerdict::Pass);
        assert_eq!(t.filter_match(&hdr("10.2.0.2", "10.1.0.1"), SimTime(10)), FilterVerdict::Pass);
    }

    #[test]
    fn expiry_is_inclusive_and_idempotent() {
        let mut t = FilterTable::new(4);
        tmp(&mut t, "10.2.0.1>10.1.0.1", 0, 600).unwrap();
        assert_eq!(t.expire(SimTime(599)), 0);
        assert_eq!(t.expire(SimTime(600)), 1);
        assert_eq!(t.expire(SimTime(600)), 0);
        assert!(t.is_empty());
    }

    #[test]
    fn refresh_extends_expiry() {
        let mut t = FilterTable::new(4);
        tmp(&mut t, "10.2.0.1>10.1.0.1", 0, 600).unwrap();
        tmp(&mut t, "10.2.0.1>10.1.0.1", 500, 600).unwrap();
        assert_eq!(t.expire(SimTime(600)), 0);
        assert_eq!(t.get(&label("10.2.0.1>10.1.0.1")).unwrap().expires_at, SimTime(1100));
        assert_eq!(t.expire(SimTime(1100)), 1);
    }

    #[test]
    fn per_client_counts_track_installs_and_expiry() {
        let mut t = FilterTable::new(10);
        let origin = FilterOrigin {
            client: Some(NodeId(7)),
            ..FilterOrigin::default()
        };
        for i in 0..3 {
            t.install(
                label(&format!("10.2.0.{i}>10.1.0.1")),
                SimTime(i),
                Millis(100),
                FilterKind::LongTerm,
                origin.clone(),
            )
            .unwrap();
        }
        assert_eq!(t.client_count(NodeId(7)), 3);
        t.expire(SimTime(101));
        assert_eq!(t.client_count(NodeId(7)), 1);
        assert_eq!(t.client_high_water()[&NodeId(7)], 3);
    }

    #[test]
    fn wildcard_entries_match() {
        let mut t = FilterTable::new(4);
        tmp(&mut t, "10.2.0.0/16>10.1.0.1", 0, 600).unwrap();
        assert_eq!(t.filter_match(&hdr("10.2.9.9", "10.1.0.1"), SimTime(1)), FilterVerdict::Drop);
        assert!(t.would_match(&hdr("10.2.9.9", "10.1.0.1"), SimTime(1)));
        t.remove(&label("10.2.0.0/16>10.1.0.1"));
        assert!(!t.would_match(&hdr("10.2.9.9", "10.1.0.1"), SimTime(1)));
    }

    #[test]
    fn shadow_window() {
        let mut s = ShadowLog::new(10);
        s.log(label("10.2.0.1>10.1.0.1"), SimTime(0), Millis(60_000), NodeId(0), vec![])
            .unwrap();
        let h = hdr("10.2.0.1", "10.1.0.1");
        assert!(s.lookup(&h, SimTime(59_999)).is_some());
        assert!(s.lookup(&h, SimTime(60_001)).is_none());
    }

    #[test]
    fn shadow_lookup_prefers_earliest() {
        let mut s = ShadowLog::new(10);
        s.log(label("10.2.0.0/16>10.1.0.1"), SimTime(0), Millis(1000), NodeId(0), vec![])
            .unwrap();
        s.log(label("10.2.0.1>10.1.0.1"), SimTime(5), Millis(1000), NodeId(0), vec![])
            .unwrap();
        let h = hdr("10.2.0.1", "10.1.0.1");
        let hit = s.lookup(&h, SimTime(10)).unwrap();
        assert_eq!(hit.label, label("10.2.0.0/16>10.1.0.1"));
        // brute-force scan agrees
        let all = [(0u64, label("10.2.0.0/16>10.1.0.1")), (1, label("10.2.0.1>10.1.0.1"))];
        let scan = all.iter().filter(|(_, l)| l.matches(&h)).min_by_key(|(s, _)| *s).unwrap();
        assert_eq!(hit.label, scan.1);
    }

    #[test]
    fn shadow_steady_state_is_rate_times_retention() {
        // 100 requests/s retained 60 s
        let mut s = ShadowLog::new(10_000);
        let mut max = 0;
        for i in 0..12_000u32 {
            let a = std::net::Ipv4Addr::from(0x0a02_0000 + i);
            let l = FlowLabel::src_dst(a, "10.1.0.1".parse().unwrap());
            s.log(l, SimTime(u64::from(i) * 10), Millis(60_000), NodeId(0), vec![]).unwrap();
            max = max.max(s.len());
        }
        assert_eq!(max, 6000);
        assert_eq!(s.high_water(), 6000);
    }

    #[test]
    fn shadow_duplicate_and_overflow() {
        let mut s = ShadowLog::new(1);
        s.log(label("10.2.0.1>10.1.0.1"), SimTime(0), Millis(10), NodeId(0), vec![])
            .unwrap();
        assert_eq!(
            s.log(label("10.2.0.1>10.1.0.1"), SimTime(1), Millis(10), NodeId(0), vec![]),
            Err(ShadowRejected::Duplicate)
        );
        assert_eq!(
            s.log(label("10.2.0.2>10.1.0.1"), SimTime(1), Millis(10), NodeId(0), vec![]),
            Err(ShadowRejected::Full)
        );
        assert_eq!(s.overflow_count(), 1);
        assert_eq!(s.expire_labels(SimTime(10)), vec![label("10.2.0.1>10.1.0.1")]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Install { label: usize, at: u64, life: u64 },
        Probe { header: usize, at: u64 },
    }

    fn labels() -> Vec<FlowLabel> {
        vec![
            label("10.2.0.1>10.1.0.1"),
            label("10.2.0.2>10.1.0.1"),
            label("10.2.0.0/16>10.1.0.1"),
            label("*>10.1.0.1"),
            label("*>10.1.0.2"),
            label("10.2.0.1>10.1.0.1:udp:*>2"),
        ]
    }

    fn headers() -> Vec<PacketHeader> {
        vec![
            hdr("10.2.0.1", "10.1.0.1"),
            hdr("10.2.0.2", "10.1.0.1"),
            hdr("10.3.0.1", "10.1.0.1"),
            hdr("10.2.0.1", "10.1.0.2"),
        ]
    }

    fn ops() -> impl Strategy<Value = Vec<Op>> {
        prop::collection::vec(
            prop_oneof![
                (0usize..6, 0u64..40, 1u64..30).prop_map(|(label, at, life)| Op::Install { label, at, life }),
                (0usize..4, 0u64..40).prop_map(|(header, at)| Op::Probe { header, at }),
            ],
            1..60,
        )
        .prop_map(|mut v| {
            // operations happen in time order
            v.sort_by_key(|o| match o {
                Op::Install { at, .. } | Op::Probe { at, .. } => *at,
            });
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        /// Timeline oracle: a flat list of (label, expires_at) scanned in full.
        #[test]
        fn filter_table_agrees_with_timeline(ops in ops()) {
            let ls = labels();
            let hs = headers();
            let mut t = FilterTable::new(usize::MAX);
            let mut oracle: Vec<(FlowLabel, u64)> = Vec::new();
            for op in ops {
                match op {
                    Op::Install { label, at, life } => {
                        tmp(&mut t, &ls[label].to_string(), at, life).unwrap();
                        let l = ls[label];
                        match oracle.iter_mut().find(|(x, exp)| *x == l && *exp > at) {
                            Some(e) => e.1 = e.1.max(at + life),
                            None => { oracle.retain(|(x, _)| *x != l); oracle.push((l, at + life)); }
                        }
                    }
                    Op::Probe { header, at } => {
                        let h = hs[header];
                        let expect = oracle.iter().any(|(l, exp)| at < *exp && l.matches(&h));
                        prop_assert_eq!(t.filter_match(&h, SimTime(at)) == FilterVerdict::Drop, expect);
                        let live = oracle.iter().filter(|(_, exp)| at < *exp).count();
                        prop_assert_eq!(t.live_count(SimTime(at)), live);
                    }
                }
            }
        }

        #[test]
        fn shadow_agrees_with_timeline(ops in ops(), retention in 1u64..30) {
            let ls = labels();
            let hs = headers();
            let mut s = ShadowLog::new(usize::MAX);
            let mut oracle: Vec<(u64, FlowLabel, u64)> = Vec::new();
            let mut seq = 0;
            for op in ops {
                match op {
                    Op::Install { label, at, .. } => {
                        let l = ls[label];
                        let live_dup = oracle.iter().any(|(_, x, exp)| *x == l && at < *exp);
                        let r = s.log(l, SimTime(at), Millis(retention), NodeId(0), vec![]);
                        prop_assert_eq!(r.is_ok(), !live_dup);
                        if !live_dup {
                            oracle.retain(|(_, x, _)| *x != l);
                            oracle.push((seq, l, at + retention));
                            seq += 1;
                        }
                    }
                    Op::Probe { header, at } => {
                        let h = hs[header];
                        let expect = oracle.iter().filter(|(_, l, exp)| at < *exp && l.matches(&h)).min_by_key(|(s, _, _)| *s).map(|x| x.1);
                        prop_assert_eq!(s.lookup(&h, SimTime(at)).map(|e| e.label), expect);
                    }
                }
            }
        }
    }
}
