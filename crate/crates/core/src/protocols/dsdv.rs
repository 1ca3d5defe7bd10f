//! Destination-Sequenced Distance Vector.
//!
//! Every node periodically broadcasts its whole table (a full dump) and
//! bumps its own even sequence number. Route changes are batched into
//! incremental updates, at most one per `triggered_update_min_interval`.
//! A fresher sequence number that arrives over a longer path from a
//! different neighbor is held for `settling_time` so the shorter path
//! carrying the same sequence number has a chance to arrive first.
//! Broken routes are advertised with an infinite metric and an odd
//! sequence number.

use std::collections::BTreeMap;

use rand::Rng;

use super::{
    parse_value, seq_newer, ControlMessage, NodeContext, NodeId, ProtocolError, RouteEntry,
    RoutingProtocol,
};
use crate::engine::packet::{DropReason, Packet};
use crate::engine::time::SimTime;

pub const NAME: &str = "dsdv";

/// Metric of an unreachable destination.
pub const INFINITE_METRIC: u32 = u32::MAX;

const TIMER_DUMP: u64 = 1;
const TIMER_TRIGGER: u64 = 2;
const TIMER_SETTLE: u64 = 3 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct DsdvParams {
    pub periodic_full_dump_interval: f64,
    pub triggered_update_min_interval: f64,
    pub settling_time: f64,
}

impl Default for DsdvParams {
    fn default() -> Self {
        Self {
            periodic_full_dump_interval: 15.0,
            triggered_update_min_interval: 1.0,
            settling_time: 6.0,
        }
    }
}

impl DsdvParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let fields = [
            ("periodic_full_dump_interval", self.periodic_full_dump_interval),
            ("triggered_update_min_interval", self.triggered_update_min_interval),
            ("settling_time", self.settling_time),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ProtocolError::InvalidParams {
                    protocol: NAME,
                    reason: format!("{name} must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ProtocolError> {
        let Some(field) = key.strip_prefix("dsdv.") else {
            return Ok(false);
        };
        let slot = match field {
            "periodic_full_dump_interval" => &mut self.periodic_full_dump_interval,
            "triggered_update_min_interval" => &mut self.triggered_update_min_interval,
            "settling_time" => &mut self.settling_time,
            _ => {
                return Err(ProtocolError::InvalidParams {
                    protocol: NAME,
                    reason: format!("unknown key {key}"),
                })
            }
        };
        *slot = parse_value(NAME, key, value)?;
        Ok(true)
    }

    /// Neighbors silent for this long are considered gone.
    pub fn neighbor_hold_time(&self) -> f64 {
        3.0 * self.periodic_full_dump_interval
    }
}

/// One advertised row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsdvAdvert {
    pub destination: NodeId,
    pub metric: u32,
    pub seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Route {
    next_hop: NodeId,
    metric: u32,
    seq: u32,
    /// Needs to go out in the next incremental update.
    changed: bool,
}

impl Route {
    fn valid(&self) -> bool {
        self.metric != INFINITE_METRIC
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    next_hop: NodeId,
    metric: u32,
    seq: u32,
}

#[derive(Debug)]
pub struct Dsdv {
    me: NodeId,
    params: DsdvParams,
    seq: u32,
    table: BTreeMap<NodeId, Route>,
    settling: BTreeMap<NodeId, Candidate>,
    neighbors: BTreeMap<NodeId, SimTime>,
    last_incremental: Option<SimTime>,
    trigger_armed: bool,
}

impl Dsdv {
    pub fn new(me: NodeId, params: DsdvParams) -> Self {
        Self {
            me,
            params,
            seq: 0,
            table: BTreeMap::new(),
            settling: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            last_incremental: None,
            trigger_armed: false,
        }
    }

    pub fn params(&self) -> &DsdvParams {
        &self.params
    }

    pub fn own_seq(&self) -> u32 {
        self.seq
    }

    pub fn route(&self, destination: NodeId) -> Option<RouteEntry> {
        self.table.get(&destination).map(|r| RouteEntry {
            destination,
            next_hop: r.next_hop,
            metric: r.metric,
            sequence_number: Some(r.seq),
            valid: r.valid(),
        })
    }

    /// Inserts a route directly; meant for tests and bootstrapping.
    pub fn insert_route(&mut self, destination: NodeId, next_hop: NodeId, metric: u32, seq: u32) {
        self.table.insert(
            destination,
            Route {
                next_hop,
                metric,
                seq,
                changed: false,
            },
        );
    }

    fn adopt(&mut self, destination: NodeId, next_hop: NodeId, metric: u32, seq: u32) -> bool {
        self.settling.remove(&destination);
        let new = Route {
            next_hop,
            metric,
            seq,
            changed: true,
        };
        match self.table.get(&destination) {
            Some(old) if old.next_hop == next_hop && old.metric == metric && old.seq == seq => false,
            _ => {
                self.table.insert(destination, new);
                true
            }
        }
    }

    /// Applies an advertisement heard from neighbor `from`. Returns the
    /// destinations whose route changed and the destinations that entered
    /// the settling phase.
    pub fn process_advert(&mut self, now: SimTime, from: NodeId, advert: &[DsdvAdvert]) -> AdvertOutcome {
        self.neighbors.insert(from, now);
        let mut outcome = AdvertOutcome::default();
        for entry in advert {
            let dest = entry.destination;
            if dest == self.me {
                if entry.metric == INFINITE_METRIC && seq_newer(entry.seq, self.seq) {
                    // someone declared us unreachable; out-number the rumour
                    self.seq = (entry.seq.wrapping_add(1)) & !1;
                    outcome.self_refreshed = true;
                }
                continue;
            }
            let metric = if entry.metric == INFINITE_METRIC {
                INFINITE_METRIC
            } else {
                entry.metric.saturating_add(1).min(INFINITE_METRIC - 1)
            };
            let changed = match self.table.get(&dest).copied() {
                None => metric != INFINITE_METRIC && self.adopt(dest, from, metric, entry.seq),
                Some(cur) if seq_newer(entry.seq, cur.seq) => {
                    if metric == INFINITE_METRIC {
                        cur.next_hop == from && self.adopt(dest, from, metric, entry.seq)
                    } else if !cur.valid() || cur.next_hop == from || metric <= cur.metric {
                        self.adopt(dest, from, metric, entry.seq)
                    } else {
                        let better = match self.settling.get(&dest) {
                            None => true,
                            Some(c) => seq_newer(entry.seq, c.seq) || (entry.seq == c.seq && metric < c.metric),
                        };
                        if better {
                            let fresh = self.settling.get(&dest).is_none_or(|c| c.seq != entry.seq);
                            self.settling.insert(
                                dest,
                                Candidate {
                                    next_hop: from,
                                    metric,
                                    seq: entry.seq,
                                },
                            );
                            if fresh {
                                outcome.settling.push(dest);
                            }
                        }
                        false
                    }
                }
                Some(cur) if entry.seq == cur.seq => {
                    if metric < cur.metric || (cur.next_hop == from && metric != cur.metric) {
                        self.adopt(dest, from, metric, entry.seq)
                    } else {
                        false
                    }
                }
                Some(_) => false,
            };
            if changed {
                outcome.changed.push(dest);
            }
        }
        outcome
    }

    /// Promotes the settling candidate for `destination`, if still pending.
    pub fn settle(&mut self, destination: NodeId) -> bool {
        let Some(c) = self.settling.remove(&destination) else {
            return false;
        };
        match self.table.get(&destination) {
            Some(cur) if !seq_newer(c.seq, cur.seq) => false,
            _ => self.adopt(destination, c.next_hop, c.metric, c.seq),
        }
    }

    /// Marks every route through `neighbor` unreachable.
    pub fn break_link(&mut self, neighbor: NodeId) -> Vec<NodeId> {
        self.neighbors.remove(&neighbor);
        self.settling.retain(|_, c| c.next_hop != neighbor);
        let mut broken = Vec::new();
        for (dest, route) in self.table.iter_mut() {
            if route.next_hop == neighbor && route.valid() {
                route.metric = INFINITE_METRIC;
                route.seq = route.seq.wrapping_add(1) | 1;
                route.changed = true;
                broken.push(*dest);
            }
        }
        broken
    }

    /// Whole table, own entry first.
    pub fn full_dump(&mut self) -> Vec<DsdvAdvert> {
        let mut out = Vec::with_capacity(self.table.len() + 1);
        out.push(DsdvAdvert {
            destination: self.me,
            metric: 0,
            seq: self.seq,
        });
        for (dest, route) in self.table.iter_mut() {
            route.changed = false;
            out.push(DsdvAdvert {
                destination: *dest,
                metric: route.metric,
                seq: route.seq,
            });
        }
        out
    }

    fn incremental(&mut self) -> Vec<DsdvAdvert> {
        let mut out = Vec::new();
        for (dest, route) in self.table.iter_mut() {
            if route.changed {
                route.changed = false;
                out.push(DsdvAdvert {
                    destination: *dest,
                    metric: route.metric,
                    seq: route.seq,
                });
            }
        }
        out
    }

    fn arm_trigger(&mut self, ctx: &mut NodeContext<'_>) {
        if self.trigger_armed {
            return;
        }
        self.trigger_armed = true;
        let min = SimTime::from_secs_f64(self.params.triggered_update_min_interval);
        let earliest = self.last_incremental.map_or(ctx.now, |t| t + min);
        ctx.set_timer(earliest.saturating_sub(ctx.now), TIMER_TRIGGER);
    }

    fn expire_neighbors(&mut self, now: SimTime) -> bool {
        let hold = SimTime::from_secs_f64(self.params.neighbor_hold_time());
        let silent: Vec<NodeId> = self
            .neighbors
            .iter()
            .filter(|(_, heard)| now.saturating_sub(**heard) > hold)
            .map(|(n, _)| *n)
            .collect();
        let mut any = false;
        for n in silent {
            any |= !self.break_link(n).is_empty();
        }
        any
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct AdvertOutcome {
    pub changed: Vec<NodeId>,
    pub settling: Vec<NodeId>,
    pub self_refreshed: bool,
}

impl RoutingProtocol for Dsdv {
    fn name(&self) -> &'static str {
        NAME
    }

    fn start(&mut self, ctx: &mut NodeContext<'_>) {
        let interval = self.params.periodic_full_dump_interval;
        let offset = ctx.rng.random_range(0.0..interval);
        ctx.set_timer(SimTime::from_secs_f64(offset), TIMER_DUMP);
    }

    fn on_timer(&mut self, ctx: &mut NodeContext<'_>, token: u64) {
        match token {
            TIMER_DUMP => {
                if self.expire_neighbors(ctx.now) {
                    self.arm_trigger(ctx);
                }
                self.seq = self.seq.wrapping_add(2) & !1;
                let entries = self.full_dump();
                ctx.broadcast(ControlMessage::DsdvUpdate { full: true, entries }, 1);
                let interval = SimTime::from_secs_f64(self.params.periodic_full_dump_interval);
                ctx.set_timer(interval, TIMER_DUMP);
            }
            TIMER_TRIGGER => {
                self.trigger_armed = false;
                let entries = self.incremental();
                if !entries.is_empty() {
                    self.last_incremental = Some(ctx.now);
                    ctx.broadcast(ControlMessage::DsdvUpdate { full: false, entries }, 1);
                }
            }
            t if t & TIMER_SETTLE == TIMER_SETTLE => {
                let dest = (t & 0xffff_ffff) as NodeId;
                if self.settle(dest) {
                    self.arm_trigger(ctx);
                }
            }
            _ => {}
        }
    }

    fn on_control(&mut self, ctx: &mut NodeContext<'_>, from: NodeId, msg: &ControlMessage, _ttl: u8) {
        let ControlMessage::DsdvUpdate { entries, .. } = msg else {
            return;
        };
        let outcome = self.process_advert(ctx.now, from, entries);
        let settle = SimTime::from_secs_f64(self.params.settling_time);
        for dest in &outcome.settling {
            ctx.set_timer(settle, TIMER_SETTLE | *dest as u64);
        }
        if !outcome.changed.is_empty() || outcome.self_refreshed {
            self.arm_trigger(ctx);
        }
    }

    fn on_data(&mut self, ctx: &mut NodeContext<'_>, packet: Packet) {
        let Some(dst) = packet.target() else {
            return;
        };
        match self.next_hop(dst, ctx.now) {
            Some(next) => ctx.forward(next, packet),
            None => ctx.drop_data(packet, DropReason::NoRoute),
        }
    }

    /// Breaks are left to neighbor expiry so the control plane never
    /// depends on data traffic.
    fn on_link_failure(&mut self, ctx: &mut NodeContext<'_>, _next_hop: NodeId, packet: Option<Packet>) {
        if let Some(p) = packet {
            ctx.drop_data(p, DropReason::LinkBreak);
        }
    }

    fn next_hop(&self, destination: NodeId, _now: SimTime) -> Option<NodeId> {
        self.table
            .get(&destination)
            .filter(|r| r.valid())
            .map(|r| r.next_hop)
    }

    fn routes(&self, _now: SimTime) -> Vec<RouteEntry> {
        self.table.keys().filter_map(|d| self.route(*d)).collect()
    }
}
