//! Static topology and shortest-delay routing.
//!
//! Hosts never carry transit traffic. Among equal-delay next hops the lowest
//! node id wins, so routing is a pure function of the declared topology.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use crate::types::{Millis, NodeId, Prefix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Host,
    /// Border router that speaks the protocol and records routes.
    Gateway,
    /// Internal router: forwards only.
    Relay,
}

#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    pub address: Ipv4Addr,
    /// Additional addresses this node answers for (a host standing in for a
    /// whole client network).
    pub prefix: Option<Prefix>,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub delay: Millis,
    pub capacity_pps: Option<u32>,
}

const UNREACHABLE: u64 = u64::MAX / 4;

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeInfo>,
    links: Vec<Link>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
    by_name: HashMap<String, NodeId>,
    by_addr: HashMap<Ipv4Addr, NodeId>,
    /// Longest prefix first.
    prefixes: Vec<(Prefix, NodeId)>,
    next_hop: Vec<Vec<Option<NodeId>>>,
    dist: Vec<Vec<u64>>,
}

impl Topology {
    /// Build and route. Callers validate names and addresses beforehand.
    pub fn new(nodes: Vec<NodeInfo>, links: Vec<Link>) -> Topology {
        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, l) in links.iter().enumerate() {
            adjacency[l.a.index()].push((l.b, i));
            adjacency[l.b.index()].push((l.a, i));
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        let by_name = nodes.iter().map(|n| (n.name.clone(), n.id)).collect();
        let by_addr = nodes.iter().map(|n| (n.address, n.id)).collect();
        let mut prefixes: Vec<(Prefix, NodeId)> = nodes.iter().filter_map(|n| n.prefix.map(|p| (p, n.id))).collect();
        prefixes.sort_by(|a, b| b.0.prefix_len().cmp(&a.0.prefix_len()).then(a.1.cmp(&b.1)));

        let mut topo = Topology {
            nodes,
            links,
            adjacency,
            by_name,
            by_addr,
            prefixes,
            next_hop: vec![vec![None; n]; n],
            dist: vec![vec![UNREACHABLE; n]; n],
        };
        topo.compute_routes();
        topo
    }

    #[allow(clippy::needless_range_loop)]
    fn compute_routes(&mut self) {
        let n = self.nodes.len();
        let mut dist = vec![vec![UNREACHABLE; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0;
        }
        for l in &self.links {
            let (a, b) = (l.a.index(), l.b.index());
            dist[a][b] = dist[a][b].min(l.delay.0);
            dist[b][a] = dist[b][a].min(l.delay.0);
        }
        // Floyd-Warshall with hosts excluded as intermediate hops.
        for k in 0..n {
            if self.nodes[k].kind == NodeKind::Host {
                continue;
            }
            for i in 0..n {
                if dist[i][k] >= UNREACHABLE {
                    continue;
                }
                for j in 0..n {
                    let via = dist[i][k] + dist[k][j];
                    if via < dist[i][j] {
                        dist[i][j] = via;
                    }
                }
            }
        }
        for s in 0..n {
            for d in 0..n {
                if s == d || dist[s][d] >= UNREACHABLE {
                    continue;
                }
                let mut best: Option<(u64, NodeId)> = None;
                for &(nb, li) in &self.adjacency[s] {
                    let nbi = nb.index();
                    if nbi != d && self.nodes[nbi].kind == NodeKind::Host {
                        continue;
                    }
                    let cost = self.links[li].delay.0 + dist[nbi][d];
                    if cost >= UNREACHABLE {
                        continue;
                    }
                    // adjacency is sorted by id, so strict < keeps the lowest id on ties
                    if best.is_none_or(|(c, _)| cost < c) {
                        best = Some((cost, nb));
                    }
                }
                self.next_hop[s][d] = best.map(|(_, nb)| nb);
            }
        }
        self.dist = dist;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &NodeInfo {
        &self.nodes[id.index()]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.index()].kind
    }

    pub fn is_host(&self, id: NodeId) -> bool {
        self.kind(id) == NodeKind::Host
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[id.index()].iter().map(|(n, _)| *n)
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.adjacency[a.index()].iter().find(|(n, _)| *n == b).map(|(_, l)| *l)
    }

    /// Which node owns `addr`: exact address first, then longest prefix.
    pub fn resolve(&self, addr: Ipv4Addr) -> Option<NodeId> {
        self.by_addr
            .get(&addr)
            .copied()
            .or_else(|| self.prefixes.iter().find(|(p, _)| p.contains(addr)).map(|(_, id)| *id))
    }

    pub fn next_hop(&self, from: NodeId, to: NodeId) -> Option<NodeId> {
        self.next_hop[from.index()][to.index()]
    }

    pub fn next_hop_addr(&self, from: NodeId, addr: Ipv4Addr) -> Option<NodeId> {
        self.resolve(addr).and_then(|to| self.next_hop(from, to))
    }

    /// One-way delay along the routed path, if reachable.
    pub fn path_delay(&self, from: NodeId, to: NodeId) -> Option<Millis> {
        let d = self.dist[from.index()][to.index()];
        (d < UNREACHABLE).then_some(Millis(d))
    }

    /// Every node on the routed path, both ends included.
    pub fn path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let mut out = vec![from];
        let mut cur = from;
        while cur != to {
            cur = self.next_hop(cur, to)?;
            out.push(cur);
            if out.len() > self.nodes.len() {
                return None;
            }
        }
        Some(out)
    }

    /// Gateways on the routed path, in transit order: what a packet's
    /// recorded route will hold on arrival.
    pub fn gateways_on_path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        Some(
            self.path(from, to)?
                .into_iter()
                .filter(|n| self.kind(*n) == NodeKind::Gateway)
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u32, name: &str, kind: NodeKind, addr: &str) -> NodeInfo {
        NodeInfo {
            id: NodeId(id),
            name: name.into(),
            kind,
            address: addr.parse().unwrap(),
            prefix: None,
        }
    }

    fn link(a: u32, b: u32, d: u64) -> Link {
        Link {
            a: NodeId(a),
            b: NodeId(b),
            delay: Millis(d),
            capacity_pps: None,
        }
    }

    /// h0 - r1 - r2 - h3 with a slower parallel r1 - r4 - r2.
    fn diamond() -> Topology {
        Topology::new(
            vec![
                node(0, "h0", NodeKind::Host, "10.0.0.1"),
                node(1, "r1", NodeKind::Gateway, "10.0.0.2"),
                node(2, "r2", NodeKind::Gateway, "10.0.0.3"),
                node(3, "h3", NodeKind::Host, "10.0.0.4"),
                node(4, "r4", NodeKind::Relay, "10.0.0.5"),
            ],
            vec![link(0, 1, 1), link(1, 2, 10), link(2, 3, 1), link(1, 4, 5), link(4, 2, 6)],
        )
    }

    #[test]
    fn shortest_delay_path() {
        let t = diamond();
        assert_eq!(
            t.path(NodeId(0), NodeId(3)).unwrap(),
            vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]
        );
        assert_eq!(t.path_delay(NodeId(0), NodeId(3)), Some(Millis(12)));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        // r1 -> r2 direct (10) ties with r1 -> r4 -> r2 (5 + 5)
        let mut t = diamond();
        t.links[4].delay = Millis(5);
        let t = Topology::new(t.nodes.clone(), t.links.clone());
        assert_eq!(t.next_hop(NodeId(1), NodeId(2)), Some(NodeId(2)));
        assert_eq!(t.path_delay(NodeId(1), NodeId(2)), Some(Millis(10)));
    }

    #[test]
    fn hosts_do_not_transit() {
        // two routers joined only through a host
        let t = Topology::new(
            vec![
                node(0, "r0", NodeKind::Gateway, "10.0.0.1"),
                node(1, "h1", NodeKind::Host, "10.0.0.2"),
                node(2, "r2", NodeKind::Gateway, "10.0.0.3"),
            ],
            vec![link(0, 1, 1), link(1, 2, 1)],
        );
        assert_eq!(t.next_hop(NodeId(0), NodeId(2)), None);
        assert_eq!(t.next_hop(NodeId(0), NodeId(1)), Some(NodeId(1)));
    }

    #[test]
    fn resolve_prefers_exact_then_longest_prefix() {
        let mut nodes = diamond().nodes.clone();
        nodes[0].prefix = Some("10.2.0.0/16".parse().unwrap());
        nodes[3].prefix = Some("10.2.5.0/24".parse().unwrap());
        let t = Topology::new(nodes, diamond().links.clone());
        assert_eq!(t.resolve("10.0.0.3".parse().unwrap()), Some(NodeId(2)));
        assert_eq!(t.resolve("10.2.5.9".parse().unwrap()), Some(NodeId(3)));
        assert_eq!(t.resolve("10.2.6.9".parse().unwrap()), Some(NodeId(0)));
        assert_eq!(t.resolve("11.0.0.1".parse().unwrap()), None);
    }

    #[test]
    fn relays_are_not_gateways() {
        let mut links = diamond().links.clone();
        links[1].delay = Millis(100);
        let t = Topology::new(diamond().nodes.clone(), links);
        assert_eq!(t.gateways_on_path(NodeId(0), NodeId(3)).unwrap(), vec![NodeId(1), NodeId(2)]);
        assert_eq!(t.path(NodeId(0), NodeId(3)).unwrap().len(), 5);
    }
}
