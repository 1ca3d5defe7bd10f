//! Manhattan-grid random-turn mobility.
//!
//! Vehicles drive at a constant speed along the roads of a rectangular grid.
//! Every sample interval is a single straight move: a vehicle that reaches an
//! intersection mid-interval waits there until the next sample instant and
//! then picks its next road. Turns are uniform over the roads leaving the
//! intersection, excluding the one it arrived on unless it is a dead end.
//! Each vehicle draws from its own random stream keyed by `(seed, node)`.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kinematics::{KinematicState, Position, Velocity};
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("grid needs at least 2x2 roads and positive spacing (got {rows}x{cols}, {spacing} m)")]
    DegenerateGrid { rows: usize, cols: usize, spacing: f64 },
    #[error("invalid mobility config: {0}")]
    InvalidConfig(&'static str),
    #[error("time {t} s outside trace span [0, {end}] s")]
    OutOfSpan { t: f64, end: f64 },
    #[error("trace file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MobilityError>;

/// 40 km/h in meters per second.
pub const URBAN_SPEED_MPS: f64 = 40.0 / 3.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadGrid {
    rows: usize,
    cols: usize,
    spacing: f64,
}

impl RoadGrid {
    pub fn new(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        if rows < 2 || cols < 2 || !(spacing > 0.0) || !spacing.is_finite() {
            return Err(MobilityError::DegenerateGrid {
                rows,
                cols,
                spacing,
            });
        }
        Ok(Self {
            rows,
            cols,
            spacing,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn intersection_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn segment_count(&self) -> usize {
        self.rows * (self.cols - 1) + self.cols * (self.rows - 1)
    }

    /// (width, height) in meters.
    pub fn extent(&self) -> (f64, f64) {
        (
            (self.cols - 1) as f64 * self.spacing,
            (self.rows - 1) as f64 * self.spacing,
        )
    }

    fn intersection(&self, row: usize, col: usize) -> Position {
        Position::new(col as f64 * self.spacing, row as f64 * self.spacing)
    }

    /// Distance from `p` to the nearest road.
    pub fn distance_to_road(&self, p: Position) -> f64 {
        let (w, h) = self.extent();
        let clamp = |v: f64, hi: f64| v.clamp(0.0, hi);
        let mut best = f64::INFINITY;
        for row in 0..self.rows {
            let y = row as f64 * self.spacing;
            best = best.min((p.x - clamp(p.x, w)).hypot(p.y - y));
        }
        for col in 0..self.cols {
            let x = col as f64 * self.spacing;
            best = best.min((p.x - x).hypot(p.y - clamp(p.y, h)));
        }
        best
    }

    fn exits(&self, row: usize, col: usize) -> Vec<Heading> {
        let mut out = Vec::with_capacity(4);
        if col + 1 < self.cols {
            out.push(Heading::East);
        }
        if row + 1 < self.rows {
            out.push(Heading::North);
        }
        if col > 0 {
            out.push(Heading::West);
        }
        if row > 0 {
            out.push(Heading::South);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Heading {
    East,
    North,
    West,
    South,
}

impl Heading {
    fn unit(self) -> (f64, f64) {
        match self {
            Heading::East => (1.0, 0.0),
            Heading::North => (0.0, 1.0),
            Heading::West => (-1.0, 0.0),
            Heading::South => (0.0, -1.0),
        }
    }

    fn reverse(self) -> Heading {
        match self {
            Heading::East => Heading::West,
            Heading::North => Heading::South,
            Heading::West => Heading::East,
            Heading::South => Heading::North,
        }
    }

    fn step(self, row: usize, col: usize) -> (usize, usize) {
        match self {
            Heading::East => (row, col + 1),
            Heading::North => (row + 1, col),
            Heading::West => (row, col - 1),
            Heading::South => (row - 1, col),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityConfig {
    pub node_count: usize,
    pub speed: f64,
    pub seed: u64,
    pub duration: f64,
    pub sample_interval: f64,
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 2 {
            return Err(MobilityError::InvalidConfig("node_count must be at least 2"));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(MobilityError::InvalidConfig("speed must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(MobilityError::InvalidConfig("duration must be positive"));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(MobilityError::InvalidConfig("sample_interval must be positive"));
        }
        Ok(())
    }

    fn step_count(&self) -> usize {
        (self.duration / self.sample_interval - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub state: KinematicState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrace {
    pub node: u32,
    pub samples: Vec<TraceSample>,
}

impl VehicleTrace {
    /// A parked vehicle sampled every `interval` seconds up to `duration`.
    pub fn stationary(node: u32, position: Position, duration: f64, interval: f64) -> Self {
        let steps = (duration / interval - 1e-9).ceil().max(1.0) as usize;
        let samples = (0..=steps)
            .map(|k| TraceSample {
                time: k as f64 * interval,
                state: KinematicState::stationary(position),
            })
            .collect();
        Self { node, samples }
    }

    /// Constant-velocity straight-line motion, sampled like [`Self::stationary`].
    pub fn linear(node: u32, start: KinematicState, duration: f64, interval: f64) -> Self {
        let steps = (duration / interval - 1e-9).ceil().max(1.0) as usize;
        let samples = (0..=steps)
            .map(|k| {
                let time = k as f64 * interval;
                TraceSample {
                    time,
                    state: KinematicState::new(start.advance(time), start.velocity),
                }
            })
            .collect();
        Self { node, samples }
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.time)
    }

    /// Interpolated state; the velocity is that of the enclosing interval.
    pub fn state_at(&self, t: f64) -> Result<KinematicState> {
        let end = self.end_time();
        let first = self.samples.first().map_or(0.0, |s| s.time);
        if !(t >= first && t <= end) {
            return Err(MobilityError::OutOfSpan { t, end });
        }
        let idx = self.samples.partition_point(|s| s.time <= t);
        if idx == self.samples.len() {
            return Ok(self.samples[idx - 1].state);
        }
        let (s0, s1) = (&self.samples[idx - 1], &self.samples[idx]);
        let span = s1.time - s0.time;
        let f = (t - s0.time) / span;
        let p0 = s0.state.position;
        let p1 = s1.state.position;
        let position = Position::new(p0.x + (p1.x - p0.x) * f, p0.y + (p1.y - p0.y) * f);
        let velocity = Velocity::new((p1.x - p0.x) / span, (p1.y - p0.y) / span);
        Ok(KinematicState::new(position, velocity))
    }
}

struct Vehicle {
    row: usize,
    col: usize,
    heading: Heading,
    offset: f64,
}

impl Vehicle {
    fn position(&self, grid: &RoadGrid) -> Position {
        let base = grid.intersection(self.row, self.col);
        let (ux, uy) = self.heading.unit();
        Position::new(base.x + ux * self.offset, base.y + uy * self.offset)
    }

    fn place(grid: &RoadGrid, rng: &mut ChaCha8Rng) -> Self {
        let horizontal = grid.rows * (grid.cols - 1);
        let pick = rng.random_range(0..grid.segment_count());
        let (row, col, heading) = if pick < horizontal {
            (pick / (grid.cols - 1), pick % (grid.cols - 1), Heading::East)
        } else {
            let k = pick - horizontal;
            (k / grid.cols, k % grid.cols, Heading::North)
        };
        let offset = rng.random_range(0.0..grid.spacing);
        let mut v = Vehicle {
            row,
            col,
            heading,
            offset,
        };
        if rng.random_bool(0.5) {
            // same segment, driven from the other end
            let (r2, c2) = heading.step(row, col);
            v = Vehicle {
                row: r2,
                col: c2,
                heading: heading.reverse(),
                offset: grid.spacing - offset,
            };
        }
        v
    }

    fn choose_exit(&mut self, grid: &RoadGrid, rng: &mut ChaCha8Rng) {
        let back = self.heading.reverse();
        let mut exits = grid.exits(self.row, self.col);
        if exits.len() > 1 {
            exits.retain(|h| *h != back);
        }
        self.heading = exits[rng.random_range(0..exits.len())];
        self.offset = 0.0;
    }

    /// One sample interval of motion; stops at the next intersection.
    fn advance(&mut self, grid: &RoadGrid, distance: f64, rng: &mut ChaCha8Rng) {
        if self.offset >= grid.spacing {
            let (r, c) = self.heading.step(self.row, self.col);
            self.row = r;
            self.col = c;
            self.choose_exit(grid, rng);
        }
        self.offset = (self.offset + distance).min(grid.spacing);
    }
}

fn trace_for(grid: &RoadGrid, cfg: &MobilityConfig, node: u32) -> VehicleTrace {
    let mut rng = stream(cfg.seed, Stream::Mobility(node));
    let mut vehicle = Vehicle::place(grid, &mut rng);
    let steps = cfg.step_count();
    let step_distance = cfg.speed * cfg.sample_interval;
    let mut positions = Vec::with_capacity(steps + 1);
    positions.push(vehicle.position(grid));
    for _ in 0..steps {
        vehicle.advance(grid, step_distance, &mut rng);
        positions.push(vehicle.position(grid));
    }
    let dt = cfg.sample_interval;
    let samples = positions
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (a, b) = if k + 1 < positions.len() {
                (*p, positions[k + 1])
            } else {
                (positions[k - 1], *p)
            };
            TraceSample {
                time: k as f64 * dt,
                state: KinematicState::new(
                    *p,
                    Velocity::new((b.x - a.x) / dt, (b.y - a.y) / dt),
                ),
            }
        })
        .collect();
    VehicleTrace { node, samples }
}

pub fn generate_traces(grid: &RoadGrid, cfg: &MobilityConfig) -> Result<Vec<VehicleTrace>> {
    cfg.validate()?;
    Ok((0..cfg.node_count as u32)
        .map(|node| trace_for(grid, cfg, node))
        .collect())
}

pub const TRACE_CSV_HEADER: &str = "time_s,node,x_m,y_m,vx_mps,vy_mps";

pub fn write_traces_csv<W: Write>(traces: &[VehicleTrace], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for trace in traces {
        for s in &trace.samples {
            let p = s.state.position;
            let v = s.state.velocity;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.time, trace.node, p.x, p.y, v.vx, v.vy
            )?;
        }
    }
    Ok(())
}

pub fn read_traces_csv<R: Read>(input: R) -> Result<Vec<VehicleTrace>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRACE_CSV_HEADER {
        return Err(MobilityError::Format(format!(
            "unexpected header {:?}",
            header.join(",")
        )));
    }
    let mut traces: Vec<VehicleTrace> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| MobilityError::Format(format!("column {i}: {e}")))
        };
        let node: u32 = record[1]
            .parse()
            .map_err(|e| MobilityError::Format(format!("node id: {e}")))?;
        let sample = TraceSample {
            time: field(0)?,
            state: KinematicState::new(
                Position::new(field(2)?, field(3)?),
                Velocity::new(field(4)?, field(5)?),
            ),
        };
        match traces.iter_mut().find(|t| t.node == node) {
            Some(t) => {
                if t.samples.last().is_some_and(|l| l.time >= sample.time) {
                    return Err(MobilityError::Format(format!(
                        "node {node}: sample times not increasing"
                    )));
                }
                t.samples.push(sample);
            }
            None => traces.push(VehicleTrace {
                node,
                samples: vec![sample],
            }),
        }
    }
    traces.sort_by_key(|t| t.node);
    Ok(traces)
}
