#![allow(dead_code)]

use std::collections::VecDeque;

use vanet_sim::engine::channel::ChannelConfig;
use vanet_sim::engine::log::{EventLog, LogEvent, LogRecord};
use vanet_sim::engine::time::SimTime;
use vanet_sim::engine::{CbrSession, Simulation, SimulationSetup};
use vanet_sim::kinematics::{KinematicState, Position};
use vanet_sim::mobility::{TraceSample, VehicleTrace};
use vanet_sim::protocols::{MessageKind, NodeId, Profile, ProtocolRegistry, ProtocolSpec};

pub const RANGE: f64 = 300.0;

pub fn spec(name: &str, profile: Profile) -> ProtocolSpec {
    ProtocolRegistry::default().spec(name, profile).unwrap()
}

pub fn static_traces(positions: &[Position], duration: f64) -> Vec<VehicleTrace> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| VehicleTrace::stationary(i as u32, *p, duration, 1.0))
        .collect()
}

/// Parked at `before` until `at`, then parked at `after`.
pub fn jump_trace(node: u32, before: Position, after: Position, at: f64, duration: f64) -> VehicleTrace {
    let mut t = VehicleTrace::stationary(node, before, duration, 1.0);
    for s in t.samples.iter_mut().filter(|s| s.time >= at) {
        *s = TraceSample {
            time: s.time,
            state: KinematicState::stationary(after),
        };
    }
    t
}

pub fn cbr(id: u32, source: NodeId, destination: NodeId, start: f64, stop: f64) -> CbrSession {
    CbrSession {
        id,
        source,
        destination,
        start: SimTime::from_secs_f64(start),
        stop: SimTime::from_secs_f64(stop),
        interval: SimTime::from_millis(250),
        packet_size: 1000,
    }
}

pub fn setup(traces: Vec<VehicleTrace>, sessions: Vec<CbrSession>, duration: f64) -> SimulationSetup {
    SimulationSetup {
        seed: 11,
        duration: SimTime::from_secs_f64(duration),
        channel: ChannelConfig::default(),
        traces,
        sessions,
        data_ttl: 64,
    }
}

pub fn simulate(setup: SimulationSetup, name: &str, profile: Profile) -> Simulation {
    Simulation::new(setup, &ProtocolRegistry::default(), &spec(name, profile)).unwrap()
}

pub fn run(setup: SimulationSetup, name: &str, profile: Profile) -> EventLog {
    simulate(setup, name, profile).run()
}

pub fn line(n: usize, spacing: f64) -> Vec<Position> {
    (0..n).map(|i| Position::new(i as f64 * spacing, 0.0)).collect()
}

pub fn lattice(rows: usize, cols: usize, spacing: f64) -> Vec<Position> {
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            out.push(Position::new(c as f64 * spacing, r as f64 * spacing));
        }
    }
    out
}

/// Hop distances from `src` over the unit-disk graph.
pub fn bfs(positions: &[Position], src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; positions.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..positions.len() {
            if dist[v].is_none() && positions[u].distance(&positions[v]) <= RANGE {
                dist[v] = Some(dist[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Checks every node's table against BFS: metric equals hop distance and
/// following next hops reaches the destination in exactly that many steps.
pub fn tables_match_bfs(sim: &Simulation, positions: &[Position]) -> Result<(), String> {
    let n = positions.len();
    let now = sim.now();
    for s in 0..n {
        let dist = bfs(positions, s);
        for (d, want) in dist.into_iter().enumerate() {
            if s == d {
                continue;
            }
            let Some(want) = want else { continue };
            let route = sim
                .protocol(s as NodeId)
                .routes(now)
                .into_iter()
                .find(|r| r.destination == d as NodeId && r.valid)
                .ok_or_else(|| format!("{s} has no route to {d}"))?;
            if route.metric != want {
                return Err(format!("{s}->{d}: metric {} but distance {want}", route.metric));
            }
            let mut at = s as NodeId;
            let mut steps = 0u32;
            while at != d as NodeId {
                let next = sim
                    .protocol(at)
                    .next_hop(d as NodeId, now)
                    .ok_or_else(|| format!("{s}->{d}: chain broken at {at}"))?;
                if positions[at as usize].distance(&positions[next as usize]) > RANGE {
                    return Err(format!("{s}->{d}: {at}->{next} is not a link"));
                }
                at = next;
                steps += 1;
                if steps as usize > n {
                    return Err(format!("{s}->{d}: loop"));
                }
            }
            if steps != want {
                return Err(format!("{s}->{d}: {steps} hops but distance {want}"));
            }
        }
    }
    Ok(())
}

pub fn sends<'a>(log: &'a EventLog, node: NodeId, kind: MessageKind) -> impl Iterator<Item = &'a LogRecord> + 'a {
    log.records
        .iter()
        .filter(move |r| r.event == LogEvent::Send && r.node == node && r.kind == kind)
}

pub fn count_kind(log: &EventLog, kind: MessageKind) -> usize {
    log.records
        .iter()
        .filter(|r| r.event == LogEvent::Send && r.kind == kind)
        .count()
}
