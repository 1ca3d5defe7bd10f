//! Optimized Link State Routing.
//!
//! Hellos (one hop, never forwarded) carry link states and MPR choices.
//! Every node originates a TC listing its MPR selectors each `tc_interval`;
//! TCs are flooded, but a node only relays a TC received from one of its
//! selectors. Routes are hop-count shortest paths over symmetric links,
//! two-hop links learned from Hellos, and TC edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;

use super::mpr::select_mprs;
use super::{
    parse_value, seq_newer, ControlMessage, LinkCode, NodeContext, NodeId, ProtocolError,
    RouteEntry, RoutingProtocol,
};
use crate::engine::packet::{DropReason, Packet};
use crate::engine::time::SimTime;

pub const NAME: &str = "olsr";

const TIMER_HELLO: u64 = 1;
const TIMER_TC: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsrParams {
    pub hello_interval: f64,
    pub tc_interval: f64,
    /// Defaults to three Hello intervals.
    pub neighbor_hold_time: Option<f64>,
    /// Defaults to three TC intervals.
    pub topology_hold_time: Option<f64>,
}

impl Default for OlsrParams {
    fn default() -> Self {
        Self {
            hello_interval: 2.0,
            tc_interval: 5.0,
            neighbor_hold_time: None,
            topology_hold_time: None,
        }
    }
}

impl OlsrParams {
    /// Faster Hello and TC cadence.
    pub fn modified() -> Self {
        Self {
            hello_interval: 1.0,
            tc_interval: 3.0,
            ..Self::default()
        }
    }

    pub fn neighbor_hold(&self) -> f64 {
        self.neighbor_hold_time.unwrap_or(3.0 * self.hello_interval)
    }

    pub fn topology_hold(&self) -> f64 {
        self.topology_hold_time.unwrap_or(3.0 * self.tc_interval)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let fail = |reason: String| ProtocolError::InvalidParams {
            protocol: NAME,
            reason,
        };
        for (key, v) in [("hello_interval", self.hello_interval), ("tc_interval", self.tc_interval)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(fail(format!("{key} must be positive, got {v}")));
            }
        }
        if self.neighbor_hold() < 3.0 * self.hello_interval {
            return Err(fail("neighbor_hold_time must be at least 3 hello intervals".into()));
        }
        if self.topology_hold() < 3.0 * self.tc_interval {
            return Err(fail("topology_hold_time must be at least 3 tc intervals".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ProtocolError> {
        let Some(field) = key.strip_prefix("olsr.") else {
            return Ok(false);
        };
        match field {
            "hello_interval" => self.hello_interval = parse_value(NAME, key, value)?,
            "tc_interval" => self.tc_interval = parse_value(NAME, key, value)?,
            "neighbor_hold_time" => self.neighbor_hold_time = Some(parse_value(NAME, key, value)?),
            "topology_hold_time" => self.topology_hold_time = Some(parse_value(NAME, key, value)?),
            _ => {
                return Err(ProtocolError::InvalidParams {
                    protocol: NAME,
                    reason: format!("unknown key {key}"),
                })
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Default)]
struct Link {
    heard_until: SimTime,
    sym_until: SimTime,
    selector_until: SimTime,
    two_hop: BTreeSet<NodeId>,
}

#[derive(Debug, Clone)]
struct Topology {
    ansn: u32,
    selectors: BTreeSet<NodeId>,
    expires: SimTime,
}

#[derive(Debug)]
pub struct Olsr {
    me: NodeId,
    params: OlsrParams,
    links: BTreeMap<NodeId, Link>,
    mprs: BTreeSet<NodeId>,
    topology: BTreeMap<NodeId, Topology>,
    seen: BTreeMap<(NodeId, u32), SimTime>,
    msg_seq: u32,
    ansn: u32,
    advertised: BTreeSet<NodeId>,
    table: BTreeMap<NodeId, (NodeId, u32)>,
}

impl Olsr {
    pub fn new(me: NodeId, params: OlsrParams) -> Self {
        Self {
            me,
            params,
            links: BTreeMap::new(),
            mprs: BTreeSet::new(),
            topology: BTreeMap::new(),
            seen: BTreeMap::new(),
            msg_seq: 0,
            ansn: 0,
            advertised: BTreeSet::new(),
            table: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &OlsrParams {
        &self.params
    }

    pub fn symmetric_neighbors(&self, now: SimTime) -> BTreeSet<NodeId> {
        self.links
            .iter()
            .filter(|(_, l)| l.sym_until > now)
            .map(|(n, _)| *n)
            .collect()
    }

    pub fn mprs(&self) -> &BTreeSet<NodeId> {
        &self.mprs
    }

    pub fn mpr_selectors(&self, now: SimTime) -> BTreeSet<NodeId> {
        self.links
            .iter()
            .filter(|(_, l)| l.selector_until > now && l.sym_until > now)
            .map(|(n, _)| *n)
            .collect()
    }

    fn hold(secs: f64) -> SimTime {
        SimTime::from_secs_f64(secs)
    }

    /// Drops expired state; true if anything route-relevant went away.
    fn purge(&mut self, now: SimTime) -> bool {
        let before = (self.links.len(), self.topology.len());
        let sym_lapsed = self
            .links
            .values()
            .any(|l| l.sym_until != SimTime::ZERO && l.sym_until <= now);
        self.links.retain(|_, l| l.heard_until > now);
        for l in self.links.values_mut() {
            if l.sym_until <= now {
                l.sym_until = SimTime::ZERO;
            }
        }
        self.topology.retain(|_, t| t.expires > now);
        let keep = Self::hold(self.params.topology_hold());
        self.seen.retain(|_, t| now.saturating_sub(*t) < keep);
        sym_lapsed || before != (self.links.len(), self.topology.len())
    }

    fn recompute(&mut self, now: SimTime) {
        let sym = self.symmetric_neighbors(now);
        let two_hop: BTreeMap<NodeId, BTreeSet<NodeId>> = sym
            .iter()
            .map(|n| (*n, self.links[n].two_hop.clone()))
            .collect();
        self.mprs = select_mprs(self.me, &sym, &two_hop);

        let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        adj.insert(self.me, sym.clone());
        for (n, reach) in &two_hop {
            adj.entry(*n).or_default().extend(reach.iter().copied());
        }
        for (o, t) in &self.topology {
            adj.entry(*o).or_default().extend(t.selectors.iter().copied());
        }

        self.table.clear();
        let mut queue = VecDeque::new();
        for n in &sym {
            self.table.insert(*n, (*n, 1));
            queue.push_back(*n);
        }
        while let Some(u) = queue.pop_front() {
            let (first, hops) = self.table[&u];
            let Some(next) = adj.get(&u) else { continue };
            for v in next {
                if *v == self.me || self.table.contains_key(v) {
                    continue;
                }
                self.table.insert(*v, (first, hops + 1));
                queue.push_back(*v);
            }
        }
    }

    fn send_hello(&mut self, ctx: &mut NodeContext<'_>) {
        let now = ctx.now;
        let neighbors = self
            .links
            .iter()
            .map(|(n, l)| {
                let code = if l.sym_until <= now {
                    LinkCode::Asymmetric
                } else if self.mprs.contains(n) {
                    LinkCode::Mpr
                } else {
                    LinkCode::Symmetric
                };
                (*n, code)
            })
            .collect();
        ctx.broadcast(ControlMessage::Hello { neighbors }, 1);
    }

    fn send_tc(&mut self, ctx: &mut NodeContext<'_>) {
        let selectors = self.mpr_selectors(ctx.now);
        if selectors != self.advertised {
            self.ansn = self.ansn.wrapping_add(1);
            self.advertised = selectors.clone();
        }
        self.msg_seq = self.msg_seq.wrapping_add(1);
        self.seen.insert((self.me, self.msg_seq), ctx.now);
        ctx.broadcast(
            ControlMessage::Tc {
                originator: self.me,
                msg_seq: self.msg_seq,
                ansn: self.ansn,
                selectors: selectors.into_iter().collect(),
            },
            u8::MAX,
        );
    }

    /// Returns true when symmetry or two-hop reach changed.
    fn handle_hello(&mut self, now: SimTime, from: NodeId, neighbors: &[(NodeId, LinkCode)]) -> bool {
        let hold = now + Self::hold(self.params.neighbor_hold());
        let me = self.me;
        let link = self.links.entry(from).or_default();
        let was_sym = link.sym_until > now;
        link.heard_until = hold;
        match neighbors.iter().find(|(n, _)| *n == me) {
            Some((_, code)) => {
                link.sym_until = hold;
                link.selector_until = if *code == LinkCode::Mpr { hold } else { SimTime::ZERO };
            }
            None => {
                link.sym_until = SimTime::ZERO;
                link.selector_until = SimTime::ZERO;
            }
        }
        let two_hop: BTreeSet<NodeId> = neighbors
            .iter()
            .filter(|(n, code)| *n != me && *code != LinkCode::Asymmetric)
            .map(|(n, _)| *n)
            .collect();
        let changed = was_sym != (link.sym_until > now) || two_hop != link.two_hop;
        link.two_hop = two_hop;
        changed
    }

    /// Returns true when the topology set changed.
    fn handle_tc(&mut self, ctx: &mut NodeContext<'_>, from: NodeId, msg: &ControlMessage, ttl: u8) -> bool {
        let ControlMessage::Tc {
            originator,
            msg_seq,
            ansn,
            selectors,
        } = msg
        else {
            return false;
        };
        let now = ctx.now;
        let from_sym = self.links.get(&from).is_some_and(|l| l.sym_until > now);
        if !from_sym || *originator == self.me || self.seen.contains_key(&(*originator, *msg_seq)) {
            return false;
        }
        self.seen.insert((*originator, *msg_seq), now);
        let stale = self
            .topology
            .get(originator)
            .is_some_and(|t| seq_newer(t.ansn, *ansn));
        let mut changed = false;
        if !stale {
            let selectors: BTreeSet<NodeId> = selectors.iter().copied().collect();
            changed = self
                .topology
                .get(originator)
                .is_none_or(|t| t.selectors != selectors);
            self.topology.insert(
                *originator,
                Topology {
                    ansn: *ansn,
                    selectors,
                    expires: now + Self::hold(self.params.topology_hold()),
                },
            );
        }
        let relay = self.links.get(&from).is_some_and(|l| l.selector_until > now);
        if relay && ttl > 1 {
            ctx.broadcast(msg.clone(), ttl - 1);
        }
        changed
    }
}

impl RoutingProtocol for Olsr {
    fn name(&self) -> &'static str {
        NAME
    }

    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        let hello = ctx.rng.random_range(0.0..self.params.hello_interval);
        let tc = ctx.rng.random_range(0.0..self.params.tc_interval);
        ctx.set_timer(SimTime::from_secs_f64(hello), TIMER_HELLO);
        ctx.set_timer(SimTime::from_secs_f64(tc), TIMER_TC);
    }

    fn on_timer(&mut self, ctx: &mut NodeContext<'_>, token: u64) {
        if self.purge(ctx.now) {
            self.recompute(ctx.now);
        }
        match token {
            TIMER_HELLO => {
                self.send_hello(ctx);
                ctx.set_timer(SimTime::from_secs_f64(self.params.hello_interval), TIMER_HELLO);
            }
            TIMER_TC => {
                self.send_tc(ctx);
                ctx.set_timer(SimTime::from_secs_f64(self.params.tc_interval), TIMER_TC);
            }
            _ => {}
        }
    }

    fn on_control(&mut self, ctx: &mut NodeContext<'_>, from: NodeId, msg: &ControlMessage, ttl: u8) {
        let expired = self.purge(ctx.now);
        let changed = match msg {
            ControlMessage::Hello { neighbors } => self.handle_hello(ctx.now, from, neighbors),
            ControlMessage::Tc { .. } => self.handle_tc(ctx, from, msg, ttl),
            _ => false,
        };
        if expired || changed {
            self.recompute(ctx.now);
        }
    }

    fn on_data(&mut self, ctx: &mut NodeContext<'_>, packet: Packet) {
        match packet.target().and_then(|d| self.next_hop(d, ctx.now)) {
            Some(next) => ctx.forward(next, packet),
            None => ctx.drop_data(packet, DropReason::NoRoute),
        }
    }

    fn on_link_failure(&mut self, ctx: &mut NodeContext<'_>, _next_hop: NodeId, packet: Option<Packet>) {
        if let Some(p) = packet {
            ctx.drop_data(p, DropReason::LinkBreak);
        }
    }

    fn next_hop(&self, destination: NodeId, _now: SimTime) -> Option<NodeId> {
        self.table.get(&destination).map(|(n, _)| *n)
    }

    fn routes(&self, _now: SimTime) -> Vec<RouteEntry> {
        self.table
            .iter()
            .map(|(d, (n, h))| RouteEntry {
                destination: *d,
                next_hop: *n,
                metric: *h,
                sequence_number: None,
                valid: true,
            })
            .collect()
    }
}
