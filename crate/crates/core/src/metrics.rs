//! Performance figures computed from event logs and vehicle traces.
//!
//! Undefined ratios come back as `None` and are written as `NA`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::engine::log::{EventLog, LogEvent, RouteRecord};
use crate::kinematics::{link_duration, path_stability, relative_speed, residual_range, LinkEpisode, Position};
use crate::mobility::VehicleTrace;
use crate::protocols::NodeId;

pub const METRICS_CSV_HEADER: &str = "scenario_id,protocol,profile,nodes,sessions,seed,pdr,ae2ed_ms,nro,mean_link_duration_s,mean_path_stability_s,data_sent,data_delivered,control_sent";

/// Boundary refinement stops once the bracket is this narrow (seconds).
pub const BISECTION_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub scenario_id: String,
    pub protocol: String,
    pub profile: String,
    pub node_count: usize,
    pub session_count: usize,
    pub seed: u64,
    pub pdr: Option<f64>,
    pub ae2ed_ms: Option<f64>,
    pub nro: Option<f64>,
    pub mean_link_duration: Option<f64>,
    pub mean_path_stability: Option<f64>,
    pub data_sent: usize,
    pub data_delivered: usize,
    pub control_sent: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| x.to_string())
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario_id,
            self.protocol,
            self.profile,
            self.node_count,
            self.session_count,
            self.seed,
            opt(self.pdr),
            opt(self.ae2ed_ms),
            opt(self.nro),
            opt(self.mean_link_duration),
            opt(self.mean_path_stability),
            self.data_sent,
            self.data_delivered,
            self.control_sent
        )
        .expect("writing to a String cannot fail");
        row
    }
}

pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn data_originated(log: &EventLog) -> usize {
    log.iter_event(LogEvent::Originate).count()
}

pub fn data_delivered(log: &EventLog) -> usize {
    log.iter_event(LogEvent::Deliver).count()
}

/// Delivered over originated data packets.
pub fn compute_pdr(log: &EventLog) -> Option<f64> {
    let sent = data_originated(log);
    (sent > 0).then(|| data_delivered(log) as f64 / sent as f64)
}

/// Mean origination-to-delivery delay in milliseconds.
pub fn compute_ae2ed(log: &EventLog) -> Option<f64> {
    let delays: Vec<f64> = log
        .iter_event(LogEvent::Deliver)
        .map(|r| (r.time - r.created_at).as_millis_f64())
        .collect();
    (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64)
}

/// Control transmissions (every hop counts) per delivered data packet.
pub fn compute_nro(log: &EventLog) -> Option<f64> {
    let delivered = data_delivered(log);
    (delivered > 0).then(|| log.control_sent() as f64 / delivered as f64)
}

fn position_at(trace: &VehicleTrace, idx: usize, t: f64) -> Position {
    let s0 = &trace.samples[idx];
    let Some(s1) = trace.samples.get(idx + 1) else {
        return s0.state.position;
    };
    let f = (t - s0.time) / (s1.time - s0.time);
    let (p0, p1) = (s0.state.position, s1.state.position);
    Position::new(p0.x + (p1.x - p0.x) * f, p0.y + (p1.y - p0.y) * f)
}

fn within(a: &VehicleTrace, b: &VehicleTrace, idx: usize, t: f64, range: f64) -> bool {
    position_at(a, idx, t).distance(&position_at(b, idx, t)) <= range
}

/// Narrows `[lo, hi]` where `inside(lo) != inside(hi)`; returns the end of the
/// final bracket that is in range.
fn bisect(mut lo: f64, mut hi: f64, lo_inside: bool, inside: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > BISECTION_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if inside(mid) == lo_inside {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo_inside {
        lo
    } else {
        hi
    }
}

/// Time of closest approach within sample interval `idx`, if strictly inside.
fn closest_approach(a: &VehicleTrace, b: &VehicleTrace, idx: usize) -> Option<f64> {
    let (t0, t1) = (a.samples[idx].time, a.samples.get(idx + 1)?.time);
    let p0a = a.samples[idx].state.position;
    let p0b = b.samples[idx].state.position;
    let p1a = a.samples[idx + 1].state.position;
    let p1b = b.samples[idx + 1].state.position;
    let (dx, dy) = (p0b.x - p0a.x, p0b.y - p0a.y);
    let (ex, ey) = (p1b.x - p1a.x - dx, p1b.y - p1a.y - dy);
    let ee = ex * ex + ey * ey;
    if ee == 0.0 {
        return None;
    }
    let f = -(dx * ex + dy * ey) / ee;
    (f > 0.0 && f < 1.0).then_some(t0 + f * (t1 - t0))
}

fn make_episode(a: &VehicleTrace, b: &VehicleTrace, range: f64, start: f64, end: f64, horizon_end: f64) -> LinkEpisode {
    let sa = a.state_at(start).expect("start within trace span");
    let sb = b.state_at(start).expect("start within trace span");
    let d = sa.position.distance(&sb.position).min(range);
    let residual = residual_range(range, d).expect("in range at episode start");
    let predicted = link_duration(residual, relative_speed(&sa, &sb), horizon_end - start)
        .expect("non-negative inputs");
    LinkEpisode::new(a.node, b.node, start, end, predicted)
}

/// Maximal in-range intervals of one pair.
pub fn pair_episodes(a: &VehicleTrace, b: &VehicleTrace, range: f64) -> Vec<LinkEpisode> {
    let n = a.samples.len().min(b.samples.len());
    if n == 0 {
        return Vec::new();
    }
    let end_time = a.samples[n - 1].time;
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    let inside_at = |i: usize| a.samples[i].state.position.distance(&b.samples[i].state.position) <= range;
    if inside_at(0) {
        open = Some(a.samples[0].time);
    }
    for i in 0..n - 1 {
        let (t0, t1) = (a.samples[i].time, a.samples[i + 1].time);
        let (in0, in1) = (inside_at(i), inside_at(i + 1));
        let inside = |t: f64| within(a, b, i, t, range);
        match (in0, in1) {
            (true, false) => {
                let exit = bisect(t0, t1, true, inside);
                let start = open.take().expect("episode open while in range");
                out.push(make_episode(a, b, range, start, exit, end_time));
            }
            (false, true) => {
                open = Some(bisect(t0, t1, false, inside));
            }
            (false, false) => {
                // relative motion is linear inside an interval, so the pair
                // can only dip into range around the closest approach
                if let Some(tc) = closest_approach(a, b, i).filter(|tc| inside(*tc)) {
                    let entry = bisect(t0, tc, false, inside);
                    let exit = bisect(tc, t1, true, inside);
                    out.push(make_episode(a, b, range, entry, exit, end_time));
                }
            }
            (true, true) => {}
        }
    }
    if let Some(start) = open {
        out.push(make_episode(a, b, range, start, end_time, end_time));
    }
    out
}

/// Link episodes of every node pair, ordered by pair then start time.
pub fn measure_link_episodes(traces: &[VehicleTrace], range: f64) -> Vec<LinkEpisode> {
    let mut out = Vec::new();
    for i in 0..traces.len() {
        for j in i + 1..traces.len() {
            out.extend(pair_episodes(&traces[i], &traces[j], range));
        }
    }
    out
}

/// Episodes grouped by unordered node pair for time lookups.
#[derive(Debug, Clone, Default)]
pub struct EpisodeIndex {
    by_pair: BTreeMap<(NodeId, NodeId), Vec<LinkEpisode>>,
}

impl EpisodeIndex {
    pub fn new(episodes: &[LinkEpisode]) -> Self {
        let mut by_pair: BTreeMap<(NodeId, NodeId), Vec<LinkEpisode>> = BTreeMap::new();
        for e in episodes {
            by_pair.entry((e.node_a, e.node_b)).or_default().push(*e);
        }
        for list in by_pair.values_mut() {
            list.sort_by(|x, y| x.start.total_cmp(&y.start));
        }
        Self { by_pair }
    }

    pub fn covering(&self, u: NodeId, v: NodeId, t: f64) -> Option<&LinkEpisode> {
        let list = self.by_pair.get(&(u.min(v), u.max(v)))?;
        let idx = list.partition_point(|e| e.start <= t);
        idx.checked_sub(1).map(|i| &list[i]).filter(|e| e.covers(t))
    }

    /// Episodes carrying each hop of `path` at time `t`; `None` if a hop is
    /// out of range.
    pub fn path_links(&self, path: &[NodeId], t: f64) -> Option<Vec<LinkEpisode>> {
        path.windows(2)
            .map(|w| self.covering(w[0], w[1], t).copied())
            .collect()
    }
}

/// Bottleneck predicted duration of each recorded route whose hops were all
/// in range when it was established.
pub fn path_stabilities(routes: &[RouteRecord], index: &EpisodeIndex) -> Vec<f64> {
    routes
        .iter()
        .filter_map(|r| {
            let links = index.path_links(&r.path, r.time.as_secs_f64())?;
            path_stability(&links).ok()
        })
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean bottleneck link duration over established routes.
pub fn measure_path_stability(log: &EventLog, episodes: &[LinkEpisode]) -> Option<f64> {
    mean(&path_stabilities(&log.routes, &EpisodeIndex::new(episodes)))
}

/// Mean measured duration of the distinct episodes that carried an
/// established route.
pub fn mean_used_link_duration(log: &EventLog, episodes: &[LinkEpisode]) -> Option<f64> {
    let index = EpisodeIndex::new(episodes);
    let mut used: BTreeMap<(NodeId, NodeId, u64), f64> = BTreeMap::new();
    for r in &log.routes {
        if let Some(links) = index.path_links(&r.path, r.time.as_secs_f64()) {
            for l in links {
                used.insert((l.node_a, l.node_b, l.start.to_bits()), l.measured_duration);
            }
        }
    }
    mean(&used.values().copied().collect::<Vec<_>>())
}

/// Identity columns of a metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub scenario_id: String,
    pub protocol: String,
    pub profile: String,
    pub node_count: usize,
    pub session_count: usize,
    pub seed: u64,
}

pub fn summarize(info: RunInfo, log: &EventLog, episodes: &[LinkEpisode]) -> MetricsRecord {
    MetricsRecord {
        scenario_id: info.scenario_id,
        protocol: info.protocol,
        profile: info.profile,
        node_count: info.node_count,
        session_count: info.session_count,
        seed: info.seed,
        pdr: compute_pdr(log),
        ae2ed_ms: compute_ae2ed(log),
        nro: compute_nro(log),
        mean_link_duration: mean_used_link_duration(log, episodes),
        mean_path_stability: measure_path_stability(log, episodes),
        data_sent: data_originated(log),
        data_delivered: data_delivered(log),
        control_sent: log.control_sent(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::packet::{Destination, Packet, Payload};
    use crate::engine::time::SimTime;
    use crate::kinematics::{KinematicState, Velocity};
    use crate::protocols::ControlMessage;

    fn data(id: u64, created_ms: u64) -> Packet {
        Packet {
            id,
            source: 0,
            destination: Destination::Node(1),
            created_at: SimTime::from_millis(created_ms),
            ttl: 64,
            size: 1000,
            payload: Payload::Data { session: 0 },
        }
    }

    fn fixture(originated: u64, delivered: u64, delay_ms: u64, control: usize) -> EventLog {
        let mut log = EventLog::new("dsdv");
        for id in 0..originated {
            let p = data(id, 10 * id);
            log.push(p.created_at, LogEvent::Originate, 0, &p, None);
            if id < delivered {
                log.push(SimTime::from_millis(10 * id + delay_ms), LogEvent::Deliver, 1, &p, None);
            }
        }
        let ctl = Packet {
            id: 10_000,
            source: 0,
            destination: Destination::Broadcast,
            created_at: SimTime::ZERO,
            ttl: 1,
            size: 40,
            payload: Payload::Control(ControlMessage::Hello { neighbors: vec![] }),
        };
        for _ in 0..control {
            log.push(SimTime::ZERO, LogEvent::Send, 0, &ctl, None);
        }
        log
    }

    #[test]
    fn ratios() {
        assert_eq!(compute_pdr(&fixture(10, 10, 4, 0)), Some(1.0));
        assert_eq!(compute_pdr(&fixture(10, 0, 4, 0)), Some(0.0));
        assert_eq!(compute_pdr(&fixture(200, 173, 4, 0)), Some(0.865));
        assert_eq!(compute_pdr(&fixture(0, 0, 4, 0)), None);
        assert_eq!(compute_nro(&fixture(25, 25, 4, 50)), Some(2.0));
        assert_eq!(compute_nro(&fixture(10, 10, 4, 0)), Some(0.0));
        assert_eq!(compute_nro(&fixture(10, 0, 4, 50)), None);
    }

    #[test]
    fn delay_mean() {
        assert_eq!(compute_ae2ed(&fixture(1, 1, 4, 0)), Some(4.0));
        let mut log = fixture(0, 0, 0, 0);
        for (id, d) in [(0u64, 2u64), (1, 6)] {
            let p = data(id, 0);
            log.push(SimTime::from_millis(d), LogEvent::Deliver, 1, &p, None);
        }
        assert_eq!(compute_ae2ed(&log), Some(4.0));
        assert_eq!(compute_ae2ed(&fixture(3, 0, 0, 0)), None);
    }

    #[test]
    fn missing_values_written_as_na() {
        let r = summarize(
            RunInfo {
                scenario_id: "x".into(),
                protocol: "dsdv".into(),
                profile: "default".into(),
                node_count: 2,
                session_count: 0,
                seed: 1,
            },
            &EventLog::new("dsdv"),
            &[],
        );
        assert_eq!(r.csv_row(), "x,dsdv,default,2,0,1,NA,NA,NA,NA,NA,0,0,0");
    }

    #[test]
    fn static_pair_single_episode() {
        let a = VehicleTrace::stationary(0, Position::new(0.0, 0.0), 60.0, 1.0);
        let b = VehicleTrace::stationary(1, Position::new(100.0, 0.0), 60.0, 1.0);
        let eps = measure_link_episodes(&[a, b], 300.0);
        assert_eq!(eps.len(), 1);
        assert_eq!((eps[0].start, eps[0].end), (0.0, 60.0));
        assert_eq!(eps[0].measured_duration, 60.0);
        assert_eq!(eps[0].predicted_duration, 60.0);
    }

    #[test]
    fn never_in_range() {
        let a = VehicleTrace::stationary(0, Position::new(0.0, 0.0), 10.0, 1.0);
        let b = VehicleTrace::stationary(1, Position::new(400.0, 0.0), 10.0, 1.0);
        assert!(measure_link_episodes(&[a, b], 300.0).is_empty());
    }

    #[test]
    fn receding_pair_breaks_at_twenty_seconds() {
        let a = VehicleTrace::stationary(0, Position::new(0.0, 0.0), 60.0, 1.0);
        let b = VehicleTrace::linear(
            1,
            KinematicState::new(Position::new(100.0, 0.0), Velocity::new(10.0, 0.0)),
            60.0,
            1.0,
        );
        let eps = measure_link_episodes(&[a, b], 300.0);
        assert_eq!(eps.len(), 1);
        assert!((eps[0].measured_duration - 20.0).abs() <= 1e-3);
        assert!((eps[0].predicted_duration - 20.0).abs() < 1e-9);
    }

    #[test]
    fn fly_by_between_samples_is_found() {
        // b passes a at 500 m/s, in range for 1.5 s between two samples
        let a = VehicleTrace::stationary(0, Position::new(0.0, 0.0), 10.0, 5.0);
        let b = VehicleTrace::linear(
            1,
            KinematicState::new(Position::new(-1000.0, 0.0), Velocity::new(400.0, 0.0)),
            10.0,
            5.0,
        );
        let eps = measure_link_episodes(&[a, b], 300.0);
        assert_eq!(eps.len(), 1);
        assert!((eps[0].start - 1.75).abs() <= 1e-3);
        assert!((eps[0].end - 3.25).abs() <= 1e-3);
    }

    #[test]
    fn path_stability_is_bottleneck() {
        let eps = [
            LinkEpisode::new(0, 1, 0.0, 30.0, 20.0),
            LinkEpisode::new(1, 2, 0.0, 30.0, 5.0),
        ];
        let mut log = EventLog::new("olsr");
        log.routes.push(RouteRecord {
            time: SimTime::from_millis(1000),
            session: 0,
            path: vec![0, 1],
        });
        assert_eq!(measure_path_stability(&log, &eps), Some(20.0));
        log.routes.push(RouteRecord {
            time: SimTime::from_millis(2000),
            session: 0,
            path: vec![0, 1, 2],
        });
        assert_eq!(measure_path_stability(&log, &eps), Some(12.5));
        assert_eq!(mean_used_link_duration(&log, &eps), Some(30.0));
        assert_eq!(measure_path_stability(&EventLog::new("olsr"), &eps), None);
    }
}
