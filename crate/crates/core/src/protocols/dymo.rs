//! Dynamic MANET On-demand routing.
//!
//! Routes are discovered with an expanding ring search: the first RREQ goes
//! out with `ers_initial_ttl`, each retry after `rreq_wait_time` grows the
//! ring by `ers_increment`, and the last try floods up to `net_diameter`.
//! The target, or an intermediate node with a fresh enough route, answers
//! with a unicast RREP that installs state along the reverse path. Data
//! waiting at the origin is buffered during discovery. Link breaks are
//! detected when a unicast transmission fails; routes through the lost
//! neighbor are invalidated and a RERR is broadcast if anyone upstream
//! depends on them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    parse_value, seq_newer, ControlMessage, NodeContext, NodeId, ProtocolError, RouteEntry,
    RoutingProtocol,
};
use crate::engine::packet::{DropReason, Packet};
use crate::engine::time::SimTime;

pub const NAME: &str = "dymo";

const TIMER_RREQ: u64 = 1 << 48;
const SEEN_HOLD: SimTime = SimTime::from_millis(30_000);

#[derive(Debug, Clone, PartialEq)]
pub struct DymoParams {
    pub net_diameter: u8,
    pub rreq_wait_time_ms: u64,
    pub rreq_tries: u8,
    pub ers_initial_ttl: u8,
    pub ers_increment: u8,
    pub route_lifetime: f64,
    pub buffer_capacity: usize,
}

impl Default for DymoParams {
    fn default() -> Self {
        Self {
            net_diameter: 10,
            rreq_wait_time_ms: 1000,
            rreq_tries: 3,
            ers_initial_ttl: 1,
            ers_increment: 2,
            route_lifetime: 5.0,
            buffer_capacity: 64,
        }
    }
}

impl DymoParams {
    /// Wider network diameter and a shorter RREQ wait.
    pub fn modified() -> Self {
        Self {
            net_diameter: 30,
            rreq_wait_time_ms: 600,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let fail = |reason: String| ProtocolError::InvalidParams {
            protocol: NAME,
            reason,
        };
        if self.ers_initial_ttl < 1 || self.ers_initial_ttl > self.net_diameter {
            return Err(fail(format!(
                "ers_initial_ttl {} must lie in 1..={}",
                self.ers_initial_ttl, self.net_diameter
            )));
        }
        if self.rreq_wait_time_ms == 0 {
            return Err(fail("rreq_wait_time must be positive".into()));
        }
        if self.rreq_tries == 0 {
            return Err(fail("rreq_tries must be at least 1".into()));
        }
        if !(self.route_lifetime > 0.0 && self.route_lifetime.is_finite()) {
            return Err(fail("route_lifetime must be positive".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ProtocolError> {
        let Some(field) = key.strip_prefix("dymo.") else {
            return Ok(false);
        };
        match field {
            "net_diameter" => self.net_diameter = parse_value(NAME, key, value)?,
            "rreq_wait_time" | "rreq_wait_time_ms" => self.rreq_wait_time_ms = parse_value(NAME, key, value)?,
            "rreq_tries" => self.rreq_tries = parse_value(NAME, key, value)?,
            "ers_initial_ttl" => self.ers_initial_ttl = parse_value(NAME, key, value)?,
            "ers_increment" => self.ers_increment = parse_value(NAME, key, value)?,
            "route_lifetime" => self.route_lifetime = parse_value(NAME, key, value)?,
            "buffer_capacity" => self.buffer_capacity = parse_value(NAME, key, value)?,
            _ => {
                return Err(ProtocolError::InvalidParams {
                    protocol: NAME,
                    reason: format!("unknown key {key}"),
                })
            }
        }
        Ok(true)
    }

    /// TTL of every ring of one discovery, in order.
    pub fn ring_schedule(&self) -> Vec<u8> {
        let mut rings = vec![self.ers_initial_ttl];
        while rings.len() < self.rreq_tries as usize {
            let last = *rings.last().expect("non-empty");
            if last >= self.net_diameter {
                break;
            }
            let next = if rings.len() + 1 == self.rreq_tries as usize {
                self.net_diameter
            } else {
                last.saturating_add(self.ers_increment).min(self.net_diameter)
            };
            if next <= last {
                break;
            }
            rings.push(next);
        }
        rings
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Route {
    next_hop: NodeId,
    hops: u8,
    seq: u32,
    expires: SimTime,
    valid: bool,
    precursors: BTreeSet<NodeId>,
}

impl Route {
    fn usable(&self, now: SimTime) -> bool {
        self.valid && now < self.expires
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Discovery {
    ring: usize,
}

#[derive(Debug)]
pub struct Dymo {
    me: NodeId,
    params: DymoParams,
    rings: Vec<u8>,
    seq: u32,
    routes: BTreeMap<NodeId, Route>,
    discoveries: BTreeMap<NodeId, Discovery>,
    buffer: VecDeque<Packet>,
    seen: BTreeMap<(NodeId, u32), SimTime>,
}

impl Dymo {
    pub fn new(me: NodeId, params: DymoParams) -> Self {
        Self {
            me,
            rings: params.ring_schedule(),
            params,
            seq: 0,
            routes: BTreeMap::new(),
            discoveries: BTreeMap::new(),
            buffer: VecDeque::new(),
            seen: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &DymoParams {
        &self.params
    }

    pub fn discovering(&self, target: NodeId) -> bool {
        self.discoveries.contains_key(&target)
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn route(&self, destination: NodeId, now: SimTime) -> Option<RouteEntry> {
        self.routes.get(&destination).map(|r| RouteEntry {
            destination,
            next_hop: r.next_hop,
            metric: r.hops as u32,
            sequence_number: Some(r.seq),
            valid: r.usable(now),
        })
    }

    pub fn precursors(&self, destination: NodeId) -> Vec<NodeId> {
        self.routes
            .get(&destination)
            .map(|r| r.precursors.iter().copied().collect())
            .unwrap_or_default()
    }

    fn lifetime(&self) -> SimTime {
        SimTime::from_secs_f64(self.params.route_lifetime)
    }

    /// Installs or refreshes a route learned from a routing message.
    /// Returns true when the route was taken.
    fn learn(&mut self, now: SimTime, dest: NodeId, next_hop: NodeId, hops: u8, seq: u32) -> bool {
        if dest == self.me {
            return false;
        }
        let expires = now + self.lifetime();
        let take = match self.routes.get(&dest) {
            None => true,
            Some(r) => {
                seq_newer(seq, r.seq) || (seq == r.seq && (!r.usable(now) || hops < r.hops))
            }
        };
        if take {
            let precursors = self
                .routes
                .remove(&dest)
                .map(|r| r.precursors)
                .unwrap_or_default();
            self.routes.insert(
                dest,
                Route {
                    next_hop,
                    hops,
                    seq,
                    expires,
                    valid: true,
                    precursors,
                },
            );
        }
        take
    }

    fn refresh(&mut self, now: SimTime, dest: NodeId) {
        let lifetime = self.lifetime();
        if let Some(r) = self.routes.get_mut(&dest) {
            if r.usable(now) {
                r.expires = now + lifetime;
            }
        }
    }

    fn start_discovery(&mut self, ctx: &mut NodeContext<'_>, target: NodeId) {
        if self.discoveries.contains_key(&target) {
            return;
        }
        let now = ctx.now;
        self.seen.retain(|_, t| now.saturating_sub(*t) < SEEN_HOLD);
        self.discoveries.insert(target, Discovery { ring: 0 });
        self.send_rreq(ctx, target, 0);
    }

    fn send_rreq(&mut self, ctx: &mut NodeContext<'_>, target: NodeId, ring: usize) {
        self.seq = self.seq.wrapping_add(1);
        self.seen.insert((self.me, self.seq), ctx.now);
        let target_seq = self.routes.get(&target).map(|r| r.seq);
        ctx.broadcast(
            ControlMessage::Rreq {
                origin: self.me,
                origin_seq: self.seq,
                target,
                target_seq,
                hop_count: 0,
            },
            self.rings[ring],
        );
        let wait = SimTime::from_millis(self.params.rreq_wait_time_ms);
        ctx.set_timer(wait, TIMER_RREQ | (ring as u64) << 32 | target as u64);
    }

    fn on_rreq_timeout(&mut self, ctx: &mut NodeContext<'_>, target: NodeId, ring: usize) {
        match self.discoveries.get(&target) {
            Some(d) if d.ring == ring => {}
            _ => return,
        }
        if ring + 1 < self.rings.len() {
            self.discoveries.insert(target, Discovery { ring: ring + 1 });
            self.send_rreq(ctx, target, ring + 1);
        } else {
            self.discoveries.remove(&target);
            let (failed, kept): (Vec<_>, Vec<_>) = self
                .buffer
                .drain(..)
                .partition(|p| p.target() == Some(target));
            self.buffer = kept.into();
            for p in failed {
                ctx.drop_data(p, DropReason::DiscoveryFailed);
            }
        }
    }

    /// Sends buffered packets for `dest` once a route exists.
    fn flush(&mut self, ctx: &mut NodeContext<'_>, dest: NodeId) {
        let Some(next) = self.next_hop(dest, ctx.now) else {
            return;
        };
        self.discoveries.remove(&dest);
        if !self.buffer.iter().any(|p| p.target() == Some(dest)) {
            return;
        }
        let (ready, kept): (Vec<_>, Vec<_>) = self
            .buffer
            .drain(..)
            .partition(|p| p.target() == Some(dest));
        self.buffer = kept.into();
        self.refresh(ctx.now, dest);
        for p in ready {
            ctx.forward(next, p);
        }
    }

    fn buffer_packet(&mut self, ctx: &mut NodeContext<'_>, packet: Packet, front: bool) {
        if self.buffer.len() >= self.params.buffer_capacity {
            ctx.drop_data(packet, DropReason::BufferOverflow);
            return;
        }
        if front {
            self.buffer.push_front(packet);
        } else {
            self.buffer.push_back(packet);
        }
    }

    /// Invalidates routes through `neighbor`; returns the ones someone
    /// upstream relies on.
    fn invalidate_via(&mut self, neighbor: NodeId) -> Vec<(NodeId, u32)> {
        let mut announce = Vec::new();
        for (dest, r) in self.routes.iter_mut() {
            if r.valid && r.next_hop == neighbor {
                r.valid = false;
                if !r.precursors.is_empty() {
                    announce.push((*dest, r.seq));
                    r.precursors.clear();
                }
            }
        }
        announce
    }

    fn handle_rreq(
        &mut self,
        ctx: &mut NodeContext<'_>,
        from: NodeId,
        msg: &ControlMessage,
        ttl: u8,
    ) {
        let ControlMessage::Rreq {
            origin,
            origin_seq,
            target,
            target_seq,
            hop_count,
        } = *msg
        else {
            return;
        };
        if origin == self.me || self.seen.contains_key(&(origin, origin_seq)) {
            return;
        }
        self.seen.insert((origin, origin_seq), ctx.now);
        let back_hops = hop_count.saturating_add(1);
        if self.learn(ctx.now, origin, from, back_hops, origin_seq) {
            self.flush(ctx, origin);
        }
        if target == self.me {
            self.seq = self.seq.wrapping_add(1);
            ctx.unicast(
                from,
                origin,
                ControlMessage::Rrep {
                    origin: self.me,
                    origin_seq: self.seq,
                    target: origin,
                    hop_count: 0,
                },
            );
            return;
        }
        let fresh = self.routes.get(&target).filter(|r| {
            r.usable(ctx.now) && target_seq.is_none_or(|s| !seq_newer(s, r.seq))
        });
        if let Some(r) = fresh.cloned() {
            // answer for the target and tell the target about the origin
            if let Some(route) = self.routes.get_mut(&target) {
                route.precursors.insert(from);
            }
            if let Some(back) = self.routes.get_mut(&origin) {
                back.precursors.insert(r.next_hop);
            }
            ctx.unicast(
                from,
                origin,
                ControlMessage::Rrep {
                    origin: target,
                    origin_seq: r.seq,
                    target: origin,
                    hop_count: r.hops,
                },
            );
            ctx.unicast(
                r.next_hop,
                target,
                ControlMessage::Rrep {
                    origin,
                    origin_seq,
                    target,
                    hop_count: back_hops,
                },
            );
            return;
        }
        if ttl > 1 {
            ctx.broadcast(
                ControlMessage::Rreq {
                    origin,
                    origin_seq,
                    target,
                    target_seq,
                    hop_count: back_hops,
                },
                ttl - 1,
            );
        }
    }

    fn handle_rrep(&mut self, ctx: &mut NodeContext<'_>, from: NodeId, msg: &ControlMessage) {
        let ControlMessage::Rrep {
            origin,
            origin_seq,
            target,
            hop_count,
        } = *msg
        else {
            return;
        };
        let hops = hop_count.saturating_add(1);
        let learned = self.learn(ctx.now, origin, from, hops, origin_seq);
        if target == self.me {
            if learned || self.next_hop(origin, ctx.now).is_some() {
                self.flush(ctx, origin);
            }
            return;
        }
        if learned {
            self.flush(ctx, origin);
        }
        let Some(next) = self.next_hop(target, ctx.now) else {
            return;
        };
        if let Some(r) = self.routes.get_mut(&origin) {
            r.precursors.insert(next);
        }
        if let Some(r) = self.routes.get_mut(&target) {
            r.precursors.insert(from);
        }
        ctx.unicast(
            next,
            target,
            ControlMessage::Rrep {
                origin,
                origin_seq,
                target,
                hop_count: hops,
            },
        );
    }

    fn handle_rerr(&mut self, ctx: &mut NodeContext<'_>, from: NodeId, unreachable: &[(NodeId, u32)]) {
        let mut announce = Vec::new();
        for (dest, seq) in unreachable {
            if let Some(r) = self.routes.get_mut(dest) {
                if r.valid && r.next_hop == from {
                    r.valid = false;
                    if seq_newer(*seq, r.seq) {
                        r.seq = *seq;
                    }
                    if !r.precursors.is_empty() {
                        announce.push((*dest, r.seq));
                        r.precursors.clear();
                    }
                }
            }
        }
        if !announce.is_empty() {
            ctx.broadcast(ControlMessage::Rerr { unreachable: announce }, 1);
        }
    }
}

impl RoutingProtocol for Dymo {
    fn name(&self) -> &'static str {
        NAME
    }

    fn start(&mut self, _ctx: &mut NodeContext<'_>) {}

    fn on_timer(&mut self, ctx: &mut NodeContext<'_>, token: u64) {
        if token & TIMER_RREQ != 0 {
            let ring = ((token >> 32) & 0xffff) as usize;
            let target = (token & 0xffff_ffff) as NodeId;
            self.on_rreq_timeout(ctx, target, ring);
        }
    }

    fn on_control(&mut self, ctx: &mut NodeContext<'_>, from: NodeId, msg: &ControlMessage, ttl: u8) {
        match msg {
            ControlMessage::Rreq { .. } => self.handle_rreq(ctx, from, msg, ttl),
            ControlMessage::Rrep { .. } => self.handle_rrep(ctx, from, msg),
            ControlMessage::Rerr { unreachable } => self.handle_rerr(ctx, from, unreachable),
            _ => {}
        }
    }

    fn on_data(&mut self, ctx: &mut NodeContext<'_>, packet: Packet) {
        let Some(dst) = packet.target() else {
            return;
        };
        if let Some(next) = self.next_hop(dst, ctx.now) {
            self.refresh(ctx.now, dst);
            self.refresh(ctx.now, packet.source);
            ctx.forward(next, packet);
        } else if packet.source == self.me {
            self.buffer_packet(ctx, packet, false);
            self.start_discovery(ctx, dst);
        } else {
            let seq = self.routes.get(&dst).map_or(0, |r| r.seq);
            ctx.drop_data(packet, DropReason::NoRoute);
            ctx.broadcast(
                ControlMessage::Rerr {
                    unreachable: vec![(dst, seq)],
                },
                1,
            );
        }
    }

    fn on_link_failure(&mut self, ctx: &mut NodeContext<'_>, next_hop: NodeId, packet: Option<Packet>) {
        let announce = self.invalidate_via(next_hop);
        if !announce.is_empty() {
            ctx.broadcast(ControlMessage::Rerr { unreachable: announce }, 1);
        }
        if let Some(p) = packet {
            match p.target() {
                Some(dst) if p.source == self.me => {
                    self.buffer_packet(ctx, p, true);
                    self.start_discovery(ctx, dst);
                }
                _ => ctx.drop_data(p, DropReason::LinkBreak),
            }
        }
    }

    fn next_hop(&self, destination: NodeId, now: SimTime) -> Option<NodeId> {
        self.routes
            .get(&destination)
            .filter(|r| r.usable(now))
            .map(|r| r.next_hop)
    }

    fn routes(&self, now: SimTime) -> Vec<RouteEntry> {
        self.routes
            .keys()
            .filter_map(|d| self.route(*d, now))
            .collect()
    }
}
