use std::fmt;

use serde::{Deserialize, Serialize};

use crate::types::addr::NodeId;
use crate::types::label::{FlowLabel, PacketHeader};
use crate::types::time::SimTime;

/// A data packet in flight. `recorded_route` grows by one entry at every
/// border router that forwards it; it is how a victim learns the attack path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub header: PacketHeader,
    pub size_bytes: u32,
    pub recorded_route: Vec<NodeId>,
    /// Simulator bookkeeping: which scenario flow emitted it and when.
    pub flow: usize,
    pub emitted_at: SimTime,
}

/// Who a filtering request is addressed to, relative to the flow it names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestType {
    ToVictimGw,
    ToAttackerGw,
    ToAttacker,
}

pub type Nonce = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AitfMessage {
    FilterRequest {
        label: FlowLabel,
        req_type: RequestType,
        /// Border routers from the attacker end to the victim end.
        attack_path: Vec<NodeId>,
        requester: NodeId,
    },
    VerifyQuery {
        label: FlowLabel,
        nonce: Nonce,
        requester: NodeId,
    },
    VerifyReply {
        label: FlowLabel,
        nonce: Nonce,
        requester: NodeId,
    },
}

impl AitfMessage {
    pub fn label(&self) -> &FlowLabel {
        match self {
            AitfMessage::FilterRequest { label, .. } | AitfMessage::VerifyQuery { label, .. } | AitfMessage::VerifyReply { label, .. } => {
                label
            }
        }
    }

    pub fn requester(&self) -> NodeId {
        match self {
            AitfMessage::FilterRequest { requester, .. }
            | AitfMessage::VerifyQuery { requester, .. }
            | AitfMessage::VerifyReply { requester, .. } => *requester,
        }
    }

    pub fn is_filter_request(&self) -> bool {
        matches!(self, AitfMessage::FilterRequest { .. })
    }

    /// Reply to a query: same label, same nonce.
    pub fn reply_to(label: FlowLabel, nonce: Nonce, me: NodeId) -> AitfMessage {
        AitfMessage::VerifyReply {
            label,
            nonce,
            requester: me,
        }
    }
}

impl fmt::Display for RequestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestType::ToVictimGw => "TO_VICTIM_GW",
            RequestType::ToAttackerGw => "TO_ATTACKER_GW",
            RequestType::ToAttacker => "TO_ATTACKER",
        })
    }
}

impl fmt::Display for AitfMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AitfMessage::FilterRequest { label, req_type, .. } => {
                write!(f, "FILTER_REQ({req_type}, {label})")
            }
            AitfMessage::VerifyQuery { label, nonce, .. } => {
                write!(f, "VERIFY_QUERY({label}, {nonce:016x})")
            }
            AitfMessage::VerifyReply { label, nonce, .. } => {
                write!(f, "VERIFY_REPLY({label}, {nonce:016x})")
            }
        }
    }
}
