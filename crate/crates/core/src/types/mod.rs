//! Domain types shared by every module.

pub mod addr;
pub mod label;
pub mod message;
pub mod params;
pub mod time;

pub use addr::{NodeId, Prefix};
pub use label::{flow_label_matches, flow_label_subsumes, FlowLabel, PacketHeader, SrcMatch, PROTO_ICMP, PROTO_TCP, PROTO_UDP};
pub use message::{AitfMessage, DataPacket, Nonce, RequestType};
pub use params::ProtocolParams;
pub use time::{Millis, SimTime};
