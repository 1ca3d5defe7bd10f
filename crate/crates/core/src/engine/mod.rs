//! Deterministic discrete-event core.
//!
//! A run is single threaded and a pure function of its [`SimulationSetup`]
//! and protocol selection. Node positions come from vehicle traces and are
//! refreshed at every trace sample instant. The MAC is abstract: a frame
//! reaches every node in range (subject to fading) after a fixed per-hop
//! latency plus a small uniform jitter, with no contention or collisions.

pub mod channel;
pub mod log;
pub mod packet;
pub mod queue;
pub mod time;

use std::collections::VecDeque;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use self::channel::ChannelConfig;
use self::log::{EventLog, LogEvent, RouteRecord};
use self::packet::{Destination, DropReason, Packet, Payload};
use self::queue::EventQueue;
use self::time::SimTime;
use crate::kinematics::Position;
use crate::mobility::VehicleTrace;
use crate::protocols::{
    Action, ControlMessage, NodeContext, NodeId, ProtocolError, ProtocolRegistry, ProtocolSpec,
    RoutingProtocol,
};
use crate::rng::{stream, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("event scheduled at {at} s before the current clock {now} s")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid simulation setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Constant-bit-rate flow between two nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrSession {
    pub id: u32,
    pub source: NodeId,
    pub destination: NodeId,
    pub start: SimTime,
    /// No packet is generated at or after this instant.
    pub stop: SimTime,
    pub interval: SimTime,
    pub packet_size: u32,
}

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub seed: u64,
    pub duration: SimTime,
    pub channel: ChannelConfig,
    /// `traces[i]` drives node `i`; all traces share sample instants.
    pub traces: Vec<VehicleTrace>,
    pub sessions: Vec<CbrSession>,
    pub data_ttl: u8,
}

impl SimulationSetup {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.channel.validate()?;
        if self.traces.len() < 2 {
            return Err(EngineError::InvalidSetup("need at least two nodes".into()));
        }
        let reference = &self.traces[0].samples;
        if reference.is_empty() {
            return Err(EngineError::InvalidSetup("empty trace".into()));
        }
        for (i, t) in self.traces.iter().enumerate() {
            if t.node as usize != i {
                return Err(EngineError::InvalidSetup(format!("trace {i} belongs to node {}", t.node)));
            }
            if t.samples.len() != reference.len()
                || t.samples.iter().zip(reference).any(|(a, b)| a.time != b.time)
            {
                return Err(EngineError::InvalidSetup(format!("trace {i} has different sample instants")));
            }
        }
        if self.traces[0].end_time() + 1e-9 < self.duration.as_secs_f64() {
            return Err(EngineError::InvalidSetup("traces end before the run does".into()));
        }
        let n = self.traces.len() as NodeId;
        for s in &self.sessions {
            if s.source >= n || s.destination >= n || s.source == s.destination {
                return Err(EngineError::InvalidSetup(format!("session {} has bad endpoints", s.id)));
            }
            if s.interval == SimTime::ZERO {
                return Err(EngineError::InvalidSetup(format!("session {} has zero interval", s.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Event {
    Timer { node: NodeId, token: u64 },
    Arrival { node: NodeId, from: NodeId, packet: Rc<Packet> },
    TraceUpdate { step: usize },
    Traffic { session: usize },
}

pub struct Simulation {
    setup: SimulationSetup,
    queue: EventQueue<Event>,
    protocols: Vec<Box<dyn RoutingProtocol>>,
    node_rngs: Vec<ChaCha8Rng>,
    control_rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
    positions: Vec<Position>,
    log: EventLog,
    next_packet_id: u64,
    last_paths: Vec<Option<Vec<NodeId>>>,
    started: bool,
}

impl Simulation {
    pub fn new(setup: SimulationSetup, registry: &ProtocolRegistry, spec: &ProtocolSpec) -> Result<Self, EngineError> {
        setup.validate()?;
        spec.params.validate()?;
        let n = setup.traces.len();
        let protocols = (0..n as NodeId)
            .map(|node| registry.instantiate(spec, node))
            .collect::<Result<Vec<_>, _>>()?;
        let node_rngs = (0..n as NodeId)
            .map(|node| stream(setup.seed, Stream::Protocol(node)))
            .collect();
        let positions = setup
            .traces
            .iter()
            .map(|t| t.samples[0].state.position)
            .collect();
        let last_paths = vec![None; setup.sessions.len()];
        Ok(Self {
            queue: EventQueue::new(),
            protocols,
            node_rngs,
            control_rng: stream(setup.seed, Stream::ControlChannel),
            data_rng: stream(setup.seed, Stream::DataChannel),
            positions,
            log: EventLog::new(spec.name()),
            next_packet_id: 0,
            last_paths,
            started: false,
            setup,
        })
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn node_count(&self) -> usize {
        self.protocols.len()
    }

    pub fn protocol(&self, node: NodeId) -> &dyn RoutingProtocol {
        self.protocols[node as usize].as_ref()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Runs to the configured duration and returns the log.
    pub fn run(mut self) -> EventLog {
        let end = self.setup.duration;
        self.run_until(end);
        self.log
    }

    /// Executes every event scheduled at or before `until` (clamped to the
    /// configured duration).
    pub fn run_until(&mut self, until: SimTime) {
        let until = until.min(self.setup.duration);
        if !self.started {
            self.bootstrap();
        }
        while let Some(t) = self.queue.peek_time() {
            if t > until {
                break;
            }
            let next = self.queue.pop().expect("peeked");
            self.dispatch(next.event);
        }
    }

    fn schedule(&mut self, at: SimTime, event: Event) {
        self.queue
            .schedule(at, event)
            .expect("engine never schedules into the past");
    }

    fn bootstrap(&mut self) {
        self.started = true;
        if self.setup.traces[0].samples.len() > 1 {
            let t = SimTime::from_secs_f64(self.setup.traces[0].samples[1].time);
            self.schedule(t, Event::TraceUpdate { step: 1 });
        }
        for i in 0..self.setup.sessions.len() {
            let s = self.setup.sessions[i];
            if s.start < s.stop {
                self.schedule(s.start, Event::Traffic { session: i });
            }
        }
        for node in 0..self.protocols.len() as NodeId {
            self.with_protocol(node, |p, ctx| p.start(ctx));
        }
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Timer { node, token } => self.with_protocol(node, |p, ctx| p.on_timer(ctx, token)),
            Event::Arrival { node, from, packet } => self.on_arrival(node, from, packet),
            Event::TraceUpdate { step } => self.on_trace_update(step),
            Event::Traffic { session } => self.on_traffic(session),
        }
    }

    fn on_trace_update(&mut self, step: usize) {
        for (pos, trace) in self.positions.iter_mut().zip(&self.setup.traces) {
            *pos = trace.samples[step].state.position;
        }
        if let Some(next) = self.setup.traces[0].samples.get(step + 1) {
            let t = SimTime::from_secs_f64(next.time);
            self.schedule(t, Event::TraceUpdate { step: step + 1 });
        }
    }

    fn on_traffic(&mut self, index: usize) {
        let now = self.now();
        let s = self.setup.sessions[index];
        let packet = Packet {
            id: self.take_packet_id(),
            source: s.source,
            destination: Destination::Node(s.destination),
            created_at: now,
            ttl: self.setup.data_ttl,
            size: s.packet_size,
            payload: Payload::Data { session: s.id },
        };
        self.log.push(now, LogEvent::Originate, s.source, &packet, None);
        self.with_protocol(s.source, |p, ctx| p.on_data(ctx, packet));
        let next = now + s.interval;
        if next < s.stop {
            self.schedule(next, Event::Traffic { session: index });
        }
    }

    fn on_arrival(&mut self, node: NodeId, from: NodeId, packet: Rc<Packet>) {
        let now = self.now();
        self.log.push(now, LogEvent::Recv, node, &packet, None);
        match &packet.payload {
            Payload::Control(msg) => {
                let ttl = packet.ttl;
                self.with_protocol(node, |p, ctx| p.on_control(ctx, from, msg, ttl));
            }
            Payload::Data { .. } => {
                let packet = Rc::unwrap_or_clone(packet);
                if packet.target() == Some(node) {
                    self.log.push(now, LogEvent::Deliver, node, &packet, None);
                } else if packet.ttl == 0 {
                    self.log.push(now, LogEvent::Drop, node, &packet, Some(DropReason::TtlExpired));
                } else {
                    self.with_protocol(node, |p, ctx| p.on_data(ctx, packet));
                }
            }
        }
    }

    fn with_protocol<F>(&mut self, node: NodeId, f: F)
    where
        F: FnOnce(&mut dyn RoutingProtocol, &mut NodeContext<'_>),
    {
        let actions = self.collect(node, f);
        self.apply(node, actions);
    }

    fn take_packet_id(&mut self) -> u64 {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        id
    }

    fn jitter(rng: &mut ChaCha8Rng, max: SimTime) -> SimTime {
        if max == SimTime::ZERO {
            SimTime::ZERO
        } else {
            SimTime::from_nanos(rng.random_range(0..max.as_nanos()))
        }
    }

    /// Whether a frame from `from` reaches `to` right now.
    fn link_delivers(&mut self, from: NodeId, to: NodeId, control: bool) -> bool {
        let d = self.positions[from as usize].distance(&self.positions[to as usize]);
        let p = self.setup.channel.reception_probability(d);
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            let rng = if control { &mut self.control_rng } else { &mut self.data_rng };
            rng.random::<f64>() < p
        }
    }

    fn arrival_time(&mut self, control: bool) -> SimTime {
        let base = self.now() + self.setup.channel.hop_latency;
        let max = self.setup.channel.max_jitter;
        let rng = if control { &mut self.control_rng } else { &mut self.data_rng };
        base + Self::jitter(rng, max)
    }

    fn control_packet(&mut self, node: NodeId, msg: ControlMessage, destination: Destination, ttl: u8) -> Packet {
        Packet {
            id: self.take_packet_id(),
            source: msg.originator(node),
            destination,
            created_at: self.now(),
            ttl,
            size: msg.size_bytes(),
            payload: Payload::Control(msg),
        }
    }

    fn apply(&mut self, node: NodeId, actions: Vec<Action>) {
        let mut pending: VecDeque<Action> = actions.into();
        while let Some(action) = pending.pop_front() {
            let now = self.now();
            match action {
                Action::SetTimer { delay, token } => self.schedule(now + delay, Event::Timer { node, token }),
                Action::DropData { packet, reason } => {
                    self.log.push(now, LogEvent::Drop, node, &packet, Some(reason));
                }
                Action::Broadcast { msg, ttl } => {
                    let packet = Rc::new(self.control_packet(node, msg, Destination::Broadcast, ttl));
                    self.log.push(now, LogEvent::Send, node, &packet, None);
                    for other in 0..self.protocols.len() as NodeId {
                        if other != node && self.link_delivers(node, other, true) {
                            let at = self.arrival_time(true);
                            self.schedule(
                                at,
                                Event::Arrival {
                                    node: other,
                                    from: node,
                                    packet: Rc::clone(&packet),
                                },
                            );
                        }
                    }
                }
                Action::Unicast {
                    next_hop,
                    destination,
                    msg,
                    ttl,
                } => {
                    let packet = self.control_packet(node, msg, Destination::Node(destination), ttl);
                    self.log.push(now, LogEvent::Send, node, &packet, None);
                    if next_hop != node && self.link_delivers(node, next_hop, true) {
                        let at = self.arrival_time(true);
                        self.schedule(
                            at,
                            Event::Arrival {
                                node: next_hop,
                                from: node,
                                packet: Rc::new(packet),
                            },
                        );
                    } else {
                        self.log.push(now, LogEvent::Drop, node, &packet, Some(DropReason::LinkBreak));
                        pending.extend(self.collect(node, |p, ctx| p.on_link_failure(ctx, next_hop, None)));
                    }
                }
                Action::ForwardData { next_hop, packet } => {
                    if packet.ttl == 0 {
                        self.log.push(now, LogEvent::Drop, node, &packet, Some(DropReason::TtlExpired));
                        continue;
                    }
                    if packet.source == node {
                        self.record_route(node, next_hop, &packet);
                    }
                    let mut sent = packet.clone();
                    sent.ttl -= 1;
                    self.log.push(now, LogEvent::Send, node, &sent, None);
                    if next_hop != node && self.link_delivers(node, next_hop, false) {
                        let at = self.arrival_time(false);
                        self.schedule(
                            at,
                            Event::Arrival {
                                node: next_hop,
                                from: node,
                                packet: Rc::new(sent),
                            },
                        );
                    } else {
                        pending.extend(self.collect(node, |p, ctx| p.on_link_failure(ctx, next_hop, Some(packet))));
                    }
                }
            }
        }
    }

    fn collect<F>(&mut self, node: NodeId, f: F) -> Vec<Action>
    where
        F: FnOnce(&mut dyn RoutingProtocol, &mut NodeContext<'_>),
    {
        let mut actions = Vec::new();
        let now = self.now();
        let n = self.protocols.len();
        let idx = node as usize;
        let mut ctx = NodeContext::new(now, node, n, &mut self.node_rngs[idx], &mut actions);
        f(self.protocols[idx].as_mut(), &mut ctx);
        actions
    }

    /// Follows next hops from the source; records the path when it differs
    /// from the one last seen for the session.
    fn record_route(&mut self, source: NodeId, first_hop: NodeId, packet: &Packet) {
        let (Some(session), Some(dst)) = (packet.session(), packet.target()) else {
            return;
        };
        let now = self.now();
        let mut path = vec![source, first_hop];
        let mut current = first_hop;
        while current != dst {
            if path.len() > self.protocols.len() {
                return;
            }
            match self.protocols[current as usize].next_hop(dst, now) {
                Some(next) => {
                    path.push(next);
                    current = next;
                }
                None => return,
            }
        }
        let Some(slot) = self
            .setup
            .sessions
            .iter()
            .position(|s| s.id == session)
        else {
            return;
        };
        if self.last_paths[slot].as_ref() != Some(&path) {
            self.last_paths[slot] = Some(path.clone());
            self.log.routes.push(RouteRecord {
                time: now,
                session,
                path,
            });
        }
    }
}
