use std::fmt;

use super::time::SimTime;
use crate::protocols::{ControlMessage, MessageKind, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketClass {
    Data,
    Control,
}

impl PacketClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PacketClass::Data => "data",
            PacketClass::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Destination {
    Node(NodeId),
    Broadcast,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Node(n) => write!(f, "{n}"),
            Destination::Broadcast => f.write_str("*"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoRoute,
    TtlExpired,
    LinkBreak,
    BufferOverflow,
    DiscoveryFailed,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::NoRoute => "no-route",
            DropReason::TtlExpired => "ttl-expired",
            DropReason::LinkBreak => "link-break",
            DropReason::BufferOverflow => "buffer-overflow",
            DropReason::DiscoveryFailed => "discovery-failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data { session: u32 },
    Control(ControlMessage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub source: NodeId,
    pub destination: Destination,
    pub created_at: SimTime,
    pub ttl: u8,
    pub size: u32,
    pub payload: Payload,
}

impl Packet {
    pub fn class(&self) -> PacketClass {
        match self.payload {
            Payload::Data { .. } => PacketClass::Data,
            Payload::Control(_) => PacketClass::Control,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match &self.payload {
            Payload::Data { .. } => MessageKind::Data,
            Payload::Control(msg) => msg.kind(),
        }
    }

    /// Final destination of a data packet.
    pub fn target(&self) -> Option<NodeId> {
        match self.destination {
            Destination::Node(n) => Some(n),
            Destination::Broadcast => None,
        }
    }

    pub fn session(&self) -> Option<u32> {
        match self.payload {
            Payload::Data { session } => Some(session),
            Payload::Control(_) => None,
        }
    }
}
