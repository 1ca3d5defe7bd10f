//! Routing protocol state machines.
//!
//! Every protocol implements [`RoutingProtocol`] and is instantiated once per
//! node. Implementations are registered by name in a [`ProtocolRegistry`] and
//! selected at runtime through a [`ProtocolSpec`] (name plus parameter
//! profile). Instances only talk to each other through simulated packets:
//! they receive events through the trait and answer by pushing actions into
//! the [`NodeContext`].

pub mod dsdv;
pub mod dymo;
pub mod mpr;
pub mod olsr;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::packet::{DropReason, Packet};
use crate::engine::time::SimTime;

pub use dsdv::{Dsdv, DsdvAdvert, DsdvParams};
pub use dymo::{Dymo, DymoParams};
pub use olsr::{Olsr, OlsrParams};

pub type NodeId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error("protocol {protocol} has no {profile} profile")]
    MissingProfile { protocol: String, profile: Profile },
    #[error("invalid {protocol} parameters: {reason}")]
    InvalidParams {
        protocol: &'static str,
        reason: String,
    },
}

/// Wrap-safe "newer than" for 32-bit sequence numbers.
pub fn seq_newer(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) > 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Profile {
    Default,
    Mod,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Default => "default",
            Profile::Mod => "mod",
        })
    }
}

impl FromStr for Profile {
    type Err = ProtocolError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" => Ok(Profile::Default),
            "mod" | "modified" => Ok(Profile::Mod),
            other => Err(ProtocolError::UnknownProfile(other.to_owned())),
        }
    }
}

/// Type of a frame as seen in the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Data,
    DsdvFullDump,
    DsdvIncremental,
    Rreq,
    Rrep,
    Rerr,
    Hello,
    Tc,
}

/// Neighbor state advertised in an OLSR Hello.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkCode {
    Asymmetric,
    Symmetric,
    Mpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlMessage {
    DsdvUpdate {
        full: bool,
        entries: Vec<DsdvAdvert>,
    },
    Rreq {
        origin: NodeId,
        origin_seq: u32,
        target: NodeId,
        target_seq: Option<u32>,
        hop_count: u8,
    },
    /// Route to `origin` travelling back towards `target`.
    Rrep {
        origin: NodeId,
        origin_seq: u32,
        target: NodeId,
        hop_count: u8,
    },
    Rerr {
        unreachable: Vec<(NodeId, u32)>,
    },
    Hello {
        neighbors: Vec<(NodeId, LinkCode)>,
    },
    Tc {
        originator: NodeId,
        msg_seq: u32,
        ansn: u32,
        selectors: Vec<NodeId>,
    },
}

impl ControlMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            ControlMessage::DsdvUpdate { full: true, .. } => MessageKind::DsdvFullDump,
            ControlMessage::DsdvUpdate { full: false, .. } => MessageKind::DsdvIncremental,
            ControlMessage::Rreq { .. } => MessageKind::Rreq,
            ControlMessage::Rrep { .. } => MessageKind::Rrep,
            ControlMessage::Rerr { .. } => MessageKind::Rerr,
            ControlMessage::Hello { .. } => MessageKind::Hello,
            ControlMessage::Tc { .. } => MessageKind::Tc,
        }
    }

    /// Approximate on-air size in bytes (IP/UDP header plus body).
    pub fn size_bytes(&self) -> u32 {
        const HEADER: u32 = 28;
        HEADER
            + match self {
                ControlMessage::DsdvUpdate { entries, .. } => 4 + 12 * entries.len() as u32,
                ControlMessage::Rreq { .. } => 24,
                ControlMessage::Rrep { .. } => 20,
                ControlMessage::Rerr { unreachable } => 4 + 8 * unreachable.len() as u32,
                ControlMessage::Hello { neighbors } => 8 + 8 * neighbors.len() as u32,
                ControlMessage::Tc { selectors, .. } => 12 + 4 * selectors.len() as u32,
            }
    }

    /// Node the message speaks for.
    pub fn originator(&self, sender: NodeId) -> NodeId {
        match self {
            ControlMessage::Rreq { origin, .. } | ControlMessage::Rrep { origin, .. } => *origin,
            ControlMessage::Tc { originator, .. } => *originator,
            _ => sender,
        }
    }
}

/// Read-only view of one routing table row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub metric: u32,
    pub sequence_number: Option<u32>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Broadcast {
        msg: ControlMessage,
        ttl: u8,
    },
    Unicast {
        next_hop: NodeId,
        destination: NodeId,
        msg: ControlMessage,
        ttl: u8,
    },
    ForwardData {
        next_hop: NodeId,
        packet: Packet,
    },
    DropData {
        packet: Packet,
        reason: DropReason,
    },
    SetTimer {
        delay: SimTime,
        token: u64,
    },
}

/// Handle through which a protocol instance acts on the simulated world.
pub struct NodeContext<'a> {
    pub now: SimTime,
    pub node: NodeId,
    pub node_count: usize,
    pub rng: &'a mut ChaCha8Rng,
    actions: &'a mut Vec<Action>,
}

impl<'a> NodeContext<'a> {
    pub fn new(
        now: SimTime,
        node: NodeId,
        node_count: usize,
        rng: &'a mut ChaCha8Rng,
        actions: &'a mut Vec<Action>,
    ) -> Self {
        Self {
            now,
            node,
            node_count,
            rng,
            actions,
        }
    }

    pub fn broadcast(&mut self, msg: ControlMessage, ttl: u8) {
        self.actions.push(Action::Broadcast { msg, ttl });
    }

    pub fn unicast(&mut self, next_hop: NodeId, destination: NodeId, msg: ControlMessage) {
        self.actions.push(Action::Unicast {
            next_hop,
            destination,
            msg,
            ttl: u8::MAX,
        });
    }

    pub fn forward(&mut self, next_hop: NodeId, packet: Packet) {
        self.actions.push(Action::ForwardData { next_hop, packet });
    }

    pub fn drop_data(&mut self, packet: Packet, reason: DropReason) {
        self.actions.push(Action::DropData { packet, reason });
    }

    pub fn set_timer(&mut self, delay: SimTime, token: u64) {
        self.actions.push(Action::SetTimer { delay, token });
    }
}

/// Per-node routing protocol instance driven by engine events.
pub trait RoutingProtocol {
    fn name(&self) -> &'static str;

    /// Called once at time zero.
    fn start(&mut self, ctx: &mut NodeContext<'_>);

    fn on_timer(&mut self, ctx: &mut NodeContext<'_>, token: u64);

    /// A control frame from neighbor `from` arrived; `ttl` is the remaining
    /// hop budget carried by the frame.
    fn on_control(&mut self, ctx: &mut NodeContext<'_>, from: NodeId, msg: &ControlMessage, ttl: u8);

    /// A data packet that is not addressed to this node needs a next hop.
    /// Covers both origination and transit.
    fn on_data(&mut self, ctx: &mut NodeContext<'_>, packet: Packet);

    /// A unicast transmission to `next_hop` failed at transmission time.
    /// `packet` is the data packet that could not be sent, if any.
    fn on_link_failure(&mut self, ctx: &mut NodeContext<'_>, next_hop: NodeId, packet: Option<Packet>);

    /// Next hop of a currently usable route.
    fn next_hop(&self, destination: NodeId, now: SimTime) -> Option<NodeId>;

    fn routes(&self, now: SimTime) -> Vec<RouteEntry>;
}

/// Fully resolved protocol selection.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolParams {
    Dsdv(DsdvParams),
    Dymo(DymoParams),
    Olsr(OlsrParams),
}

impl ProtocolParams {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolParams::Dsdv(_) => dsdv::NAME,
            ProtocolParams::Dymo(_) => dymo::NAME,
            ProtocolParams::Olsr(_) => olsr::NAME,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            ProtocolParams::Dsdv(p) => p.validate(),
            ProtocolParams::Dymo(p) => p.validate(),
            ProtocolParams::Olsr(p) => p.validate(),
        }
    }

    /// Apply one `key=value` override, e.g. `dymo.net_diameter=20`.
    /// Returns `Ok(false)` when the key belongs to another protocol.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ProtocolError> {
        match self {
            ProtocolParams::Dsdv(p) => p.set(key, value),
            ProtocolParams::Dymo(p) => p.set(key, value),
            ProtocolParams::Olsr(p) => p.set(key, value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub profile: Profile,
    pub params: ProtocolParams,
}

impl ProtocolSpec {
    pub fn name(&self) -> &'static str {
        self.params.name()
    }

    /// Label used in scenario ids and figures, e.g. `mod-olsr`.
    pub fn label(&self) -> String {
        match self.profile {
            Profile::Default => self.name().to_owned(),
            Profile::Mod => format!("mod-{}", self.name()),
        }
    }
}

type Factory = fn(&ProtocolParams, NodeId) -> Box<dyn RoutingProtocol>;

struct Registration {
    profiles: Vec<(Profile, ProtocolParams)>,
    factory: Factory,
}

/// Protocols known by name together with their parameter profiles.
pub struct ProtocolRegistry {
    entries: BTreeMap<&'static str, Registration>,
}

impl ProtocolRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: &'static str,
        profiles: Vec<(Profile, ProtocolParams)>,
        factory: Factory,
    ) {
        self.entries.insert(name, Registration { profiles, factory });
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn profiles(&self, name: &str) -> Vec<Profile> {
        self.entries
            .get(name)
            .map(|r| r.profiles.iter().map(|(p, _)| *p).collect())
            .unwrap_or_default()
    }

    pub fn spec(&self, name: &str, profile: Profile) -> Result<ProtocolSpec, ProtocolError> {
        let key = name.trim().to_ascii_lowercase();
        let reg = self
            .entries
            .get(key.as_str())
            .ok_or_else(|| ProtocolError::UnknownProtocol(name.to_owned()))?;
        let params = reg
            .profiles
            .iter()
            .find(|(p, _)| *p == profile)
            .map(|(_, params)| params.clone())
            .ok_or_else(|| ProtocolError::MissingProfile {
                protocol: key.clone(),
                profile,
            })?;
        Ok(ProtocolSpec { profile, params })
    }

    pub fn instantiate(&self, spec: &ProtocolSpec, node: NodeId) -> Result<Box<dyn RoutingProtocol>, ProtocolError> {
        let reg = self
            .entries
            .get(spec.name())
            .ok_or_else(|| ProtocolError::UnknownProtocol(spec.name().to_owned()))?;
        Ok((reg.factory)(&spec.params, node))
    }
}

impl Default for ProtocolRegistry {
    /// DSDV (default profile only), DYMO and OLSR (default and mod).
    fn default() -> Self {
        let mut registry = Self::empty();
        registry.register(
            dsdv::NAME,
            vec![(Profile::Default, ProtocolParams::Dsdv(DsdvParams::default()))],
            |params, node| match params {
                ProtocolParams::Dsdv(p) => Box::new(Dsdv::new(node, p.clone())),
                _ => unreachable!("dsdv factory given foreign parameters"),
            },
        );
        registry.register(
            dymo::NAME,
            vec![
                (Profile::Default, ProtocolParams::Dymo(DymoParams::default())),
                (Profile::Mod, ProtocolParams::Dymo(DymoParams::modified())),
            ],
            |params, node| match params {
                ProtocolParams::Dymo(p) => Box::new(Dymo::new(node, p.clone())),
                _ => unreachable!("dymo factory given foreign parameters"),
            },
        );
        registry.register(
            olsr::NAME,
            vec![
                (Profile::Default, ProtocolParams::Olsr(OlsrParams::default())),
                (Profile::Mod, ProtocolParams::Olsr(OlsrParams::modified())),
            ],
            |params, node| match params {
                ProtocolParams::Olsr(p) => Box::new(Olsr::new(node, p.clone())),
                _ => unreachable!("olsr factory given foreign parameters"),
            },
        );
        registry
    }
}

pub(crate) fn parse_value<T: FromStr>(protocol: &'static str, key: &str, value: &str) -> Result<T, ProtocolError>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ProtocolError::InvalidParams {
        protocol,
        reason: format!("{key}={value}: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_comparison_wraps() {
        assert!(seq_newer(11, 10));
        assert!(!seq_newer(10, 10));
        assert!(!seq_newer(9, 10));
        assert!(seq_newer(2, u32::MAX - 2));
    }

    #[test]
    fn registry_profiles() {
        let reg = ProtocolRegistry::default();
        assert_eq!(reg.names().collect::<Vec<_>>(), ["dsdv", "dymo", "olsr"]);
        assert_eq!(reg.profiles("dsdv"), [Profile::Default]);
        assert!(matches!(
            reg.spec("dsdv", Profile::Mod),
            Err(ProtocolError::MissingProfile { .. })
        ));
        assert!(matches!(reg.spec("aodv", Profile::Default), Err(ProtocolError::UnknownProtocol(_))));

        let dymo = reg.spec("dymo", Profile::Default).unwrap();
        let ProtocolParams::Dymo(p) = &dymo.params else { panic!() };
        assert_eq!((p.net_diameter, p.rreq_wait_time_ms), (10, 1000));
        let dymo = reg.spec("DYMO", Profile::Mod).unwrap();
        let ProtocolParams::Dymo(p) = &dymo.params else { panic!() };
        assert_eq!((p.net_diameter, p.rreq_wait_time_ms), (30, 600));
        assert_eq!(dymo.label(), "mod-dymo");

        let olsr = reg.spec("olsr", Profile::Default).unwrap();
        let ProtocolParams::Olsr(p) = &olsr.params else { panic!() };
        assert_eq!((p.hello_interval, p.tc_interval), (2.0, 5.0));
        let olsr = reg.spec("olsr", Profile::Mod).unwrap();
        let ProtocolParams::Olsr(p) = &olsr.params else { panic!() };
        assert_eq!((p.hello_interval, p.tc_interval), (1.0, 3.0));

        let inst = reg.instantiate(&olsr, 3).unwrap();
        assert_eq!(inst.name(), "olsr");
    }

    #[test]
    fn profile_parsing() {
        assert_eq!("MOD".parse::<Profile>().unwrap(), Profile::Mod);
        assert_eq!("default".parse::<Profile>().unwrap(), Profile::Default);
        assert!("fast".parse::<Profile>().is_err());
    }
}
