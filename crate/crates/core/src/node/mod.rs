//! Protocol state machines for end-hosts and border routers.
//!
//! Each node is a deterministic transition function: an incoming message,
//! packet or timer mutates local state and pushes [`Output`]s that the
//! simulator carries out (sends, timers, disconnections, trace notes).

pub mod host;
pub mod path;
pub mod router;

use std::fmt;

use serde::Serialize;

use crate::simnet::topology::Topology;
use crate::types::{AitfMessage, FlowLabel, Millis, NodeId, Nonce, RequestType, SimTime};

pub use host::{Classifier, Granularity, Host, HostBehavior, HostFlow};
pub use path::{AttackPathView, Counterpart};
pub use router::{Router, RouterBehavior, RouterConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Timer {
    /// Victim-side temporary filter reached `T_tmp`.
    TempExpiry {
        label: FlowLabel,
        generation: u64,
    },
    HandshakeTimeout {
        nonce: Nonce,
    },
    /// Attacker's grace period is over.
    GraceExpiry {
        label: FlowLabel,
        generation: u64,
    },
    /// Detection delay elapsed for a host's undesired flow.
    Detect {
        label: FlowLabel,
        attack_path: Vec<NodeId>,
    },
    /// A host's outbound request pacer has a token again.
    Pacer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Send { to: NodeId, msg: AitfMessage },
    Timer { at: SimTime, timer: Timer },
    Disconnect { neighbor: NodeId, duration: Option<Millis> },
    Note(Note),
}

/// Protocol-level events, recorded in the trace and used for metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Note {
    RequestSent {
        to: NodeId,
        req_type: RequestType,
        label: FlowLabel,
    },
    RequestQueued {
        label: FlowLabel,
    },
    PolicedDrop {
        from: NodeId,
        label: FlowLabel,
    },
    IngressRejected {
        from: NodeId,
        label: FlowLabel,
    },
    NotOnPath {
        label: FlowLabel,
    },
    DuplicateRequest {
        label: FlowLabel,
    },
    TempFilterInstalled {
        label: FlowLabel,
        round: usize,
    },
    TempFilterRenewed {
        label: FlowLabel,
    },
    TempFilterRemoved {
        label: FlowLabel,
    },
    TableFull {
        label: FlowLabel,
    },
    ShadowOverflow {
        label: FlowLabel,
    },
    HandshakeStarted {
        label: FlowLabel,
        query_to: NodeId,
    },
    HandshakeTimeout {
        label: FlowLabel,
    },
    NonceMismatch {
        label: FlowLabel,
    },
    LongTermFilterInstalled {
        label: FlowLabel,
        client: Option<NodeId>,
    },
    BudgetExhausted {
        label: FlowLabel,
    },
    RequestIgnored {
        label: FlowLabel,
    },
    Escalated {
        label: FlowLabel,
        round: usize,
        to: NodeId,
    },
    OnOffDetected {
        label: FlowLabel,
    },
    GraceExpired {
        label: FlowLabel,
    },
    Disconnecting {
        neighbor: NodeId,
        label: FlowLabel,
    },
    VerifyReplied {
        label: FlowLabel,
        to: NodeId,
    },
    VerifyRefused {
        label: FlowLabel,
    },
    FlowStopped {
        label: FlowLabel,
        until: SimTime,
    },
    FlowPaused {
        label: FlowLabel,
        resume_at: SimTime,
    },
    StopIgnored {
        label: FlowLabel,
    },
    ForgedSent {
        to: NodeId,
        kind: String,
    },
}

/// `event key=value ...`, keys in sorted order.
impl fmt::Display for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_to(f, None)
    }
}

const NODE_KEYS: [&str; 5] = ["client", "from", "neighbor", "query_to", "to"];

impl Note {
    /// Like the `Display` form, with node ids replaced by their names.
    pub fn named<'a>(&'a self, topo: &'a Topology) -> impl fmt::Display + 'a {
        struct Named<'a>(&'a Note, &'a Topology);
        impl fmt::Display for Named<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.write_to(f, Some(self.1))
            }
        }
        Named(self, topo)
    }

    fn write_to(&self, f: &mut fmt::Formatter<'_>, topo: Option<&Topology>) -> fmt::Result {
        let serde_json::Value::Object(map) = serde_json::to_value(self).map_err(|_| fmt::Error)? else {
            return Err(fmt::Error);
        };
        if let Some(serde_json::Value::String(e)) = map.get("event") {
            f.write_str(e)?;
        }
        for (k, v) in map.iter().filter(|(k, _)| *k != "event") {
            match v {
                serde_json::Value::String(s) => write!(f, " {k}={s}")?,
                serde_json::Value::Null => write!(f, " {k}=-")?,
                serde_json::Value::Number(n) if NODE_KEYS.contains(&k.as_str()) => match (topo, n.as_u64()) {
                    (Some(t), Some(i)) if (i as usize) < t.len() => write!(f, " {k}={}", t.name(NodeId(i as u32)))?,
                    _ => write!(f, " {k}={n}")?,
                },
                other => write!(f, " {k}={other}")?,
            }
        }
        Ok(())
    }
}

/// What a node sees of the world while handling one event.
pub struct Ctx<'a> {
    pub now: SimTime,
    pub topo: &'a Topology,
    pub me: NodeId,
    out: Vec<Output>,
}

impl<'a> Ctx<'a> {
    pub fn new(now: SimTime, topo: &'a Topology, me: NodeId) -> Self {
        Ctx {
            now,
            topo,
            me,
            out: Vec::new(),
        }
    }

    pub fn send(&mut self, to: NodeId, msg: AitfMessage) {
        self.out.push(Output::Send { to, msg });
    }

    pub fn timer(&mut self, at: SimTime, timer: Timer) {
        debug_assert!(at >= self.now);
        self.out.push(Output::Timer { at, timer });
    }

    pub fn disconnect(&mut self, neighbor: NodeId, duration: Option<Millis>) {
        self.out.push(Output::Disconnect { neighbor, duration });
    }

    pub fn note(&mut self, n: Note) {
        self.out.push(Output::Note(n));
    }

    pub fn outputs(&self) -> &[Output] {
        &self.out
    }

    pub fn into_outputs(self) -> Vec<Output> {
        self.out
    }
}

/// Data-plane decision for a packet at a router.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketVerdict {
    Forward,
    DropFiltered,
    DropShadow,
}

#[cfg(test)]
pub(crate) mod testutil {
    use std::net::Ipv4Addr;

    use crate::simnet::topology::{Link, NodeInfo, NodeKind, Topology};
    use crate::types::{FlowLabel, Millis, NodeId};

    pub struct Fig1 {
        pub topo: Topology,
        pub g_host: NodeId,
        pub g_gw1: NodeId,
        pub g_gw2: NodeId,
        pub g_gw3: NodeId,
        pub b_gw3: NodeId,
        pub b_gw2: NodeId,
        pub b_gw1: NodeId,
        pub b_host: NodeId,
    }

    impl Fig1 {
        pub fn addr(&self, n: NodeId) -> Ipv4Addr {
            self.topo.node(n).address
        }

        /// B_host to G_host.
        pub fn label(&self) -> FlowLabel {
            FlowLabel::src_dst(self.addr(self.b_host), self.addr(self.g_host))
        }

        pub fn path(&self) -> Vec<NodeId> {
            vec![self.b_gw1, self.b_gw2, self.b_gw3, self.g_gw3, self.g_gw2, self.g_gw1]
        }
    }

    pub fn fig1() -> Fig1 {
        let spec = [
            ("G_host", NodeKind::Host, "10.1.1.1"),
            ("G_gw1", NodeKind::Gateway, "10.1.0.1"),
            ("G_gw2", NodeKind::Gateway, "10.3.0.1"),
            ("G_gw3", NodeKind::Gateway, "10.5.0.1"),
            ("B_gw3", NodeKind::Gateway, "10.6.0.1"),
            ("B_gw2", NodeKind::Gateway, "10.4.0.1"),
            ("B_gw1", NodeKind::Gateway, "10.2.0.1"),
            ("B_host", NodeKind::Host, "10.2.1.1"),
        ];
        let nodes = spec
            .iter()
            .enumerate()
            .map(|(i, (name, kind, addr))| NodeInfo {
                id: NodeId(i as u32),
                name: name.to_string(),
                kind: *kind,
                address: addr.parse().unwrap(),
                prefix: None,
            })
            .collect();
        let links = [50, 5, 10, 20, 10, 5, 2]
            .iter()
            .enumerate()
            .map(|(i, d)| Link {
                a: NodeId(i as u32),
                b: NodeId(i as u32 + 1),
                delay: Millis(*d),
                capacity_pps: None,
            })
            .collect();
        Fig1 {
            topo: Topology::new(nodes, links),
            g_host: NodeId(0),
            g_gw1: NodeId(1),
            g_gw2: NodeId(2),
            g_gw3: NodeId(3),
            b_gw3: NodeId(4),
            b_gw2: NodeId(5),
            b_gw1: NodeId(6),
            b_host: NodeId(7),
        }
    }
}
