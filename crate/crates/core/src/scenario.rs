//! One simulation scenario: topology, traffic, channel and protocol choice.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::engine::channel::{ChannelConfig, Fading};
use crate::engine::log::EventLog;
use crate::engine::time::SimTime;
use crate::engine::{CbrSession, EngineError, Simulation, SimulationSetup};
use crate::kinematics::LinkEpisode;
use crate::metrics::{measure_link_episodes, summarize, MetricsRecord, RunInfo};
use crate::mobility::{generate_traces, MobilityConfig, MobilityError, RoadGrid, VehicleTrace, URBAN_SPEED_MPS};
use crate::protocols::{NodeId, Profile, ProtocolError, ProtocolRegistry, ProtocolSpec};
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_err(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

/// Road grid written `ROWSxCOLS:SPACING`, e.g. `3x3:2000`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            spacing: 2000.0,
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}:{}", self.rows, self.cols, self.spacing)
    }
}

impl FromStr for GridSpec {
    type Err = ScenarioError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || config_err(format!("grid {s:?} is not ROWSxCOLS:SPACING"));
        let (dims, spacing) = s.trim().split_once(':').ok_or_else(bad)?;
        let (rows, cols) = dims.split_once('x').ok_or_else(bad)?;
        let grid = GridSpec {
            rows: rows.trim().parse().map_err(|_| bad())?,
            cols: cols.trim().parse().map_err(|_| bad())?,
            spacing: spacing.trim().parse().map_err(|_| bad())?,
        };
        RoadGrid::new(grid.rows, grid.cols, grid.spacing)?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficConfig {
    /// Packets per second per session.
    pub rate: f64,
    pub packet_size: u32,
    /// Earliest session start; each session adds up to one packet interval.
    pub start: f64,
    pub ttl: u8,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            rate: 4.0,
            packet_size: 1000,
            start: 10.0,
            ttl: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub protocol: String,
    pub profile: Profile,
    /// Protocol parameter overrides such as `dymo.net_diameter=20`.
    pub overrides: Vec<(String, String)>,
    pub node_count: usize,
    pub session_count: usize,
    pub seed: u64,
    pub duration: f64,
    pub grid: GridSpec,
    pub channel: ChannelConfig,
    pub traffic: TrafficConfig,
    pub speed: f64,
    pub sample_interval: f64,
    /// Keep vehicles parked at their initial positions.
    pub static_nodes: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            protocol: "olsr".into(),
            profile: Profile::Default,
            overrides: Vec::new(),
            node_count: 30,
            session_count: 6,
            seed: 1,
            duration: 600.0,
            grid: GridSpec::default(),
            channel: ChannelConfig::default(),
            traffic: TrafficConfig::default(),
            speed: URBAN_SPEED_MPS,
            sample_interval: 1.0,
            static_nodes: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ScenarioError> {
    value
        .trim()
        .parse()
        .map_err(|_| config_err(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ScenarioError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(config_err(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

/// Splits flat `key = value` text; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, ScenarioError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected key=value", n + 1)))?;
        out.push((k.trim().to_ascii_lowercase(), v.trim().to_owned()));
    }
    Ok(out)
}

impl ScenarioConfig {
    /// Applies one setting. Returns `Ok(false)` for keys this struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ScenarioError> {
        match key {
            "protocol" => self.protocol = value.trim().to_ascii_lowercase(),
            "profile" => self.profile = value.parse()?,
            "nodes" | "node_count" => self.node_count = parse(key, value)?,
            "sessions" | "session_count" => self.session_count = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "duration" => self.duration = parse(key, value)?,
            "grid" => self.grid = value.parse()?,
            "range" => self.channel.range = parse(key, value)?,
            "fading" => self.channel.fading = value.parse::<Fading>()?,
            "hop_latency_ms" => self.channel.hop_latency = SimTime::from_millis(parse(key, value)?),
            "max_jitter_ms" => self.channel.max_jitter = SimTime::from_millis(parse(key, value)?),
            "rate" | "cbr_rate" => self.traffic.rate = parse(key, value)?,
            "packet_size" => self.traffic.packet_size = parse(key, value)?,
            "traffic_start" => self.traffic.start = parse(key, value)?,
            "data_ttl" => self.traffic.ttl = parse(key, value)?,
            "speed" => self.speed = parse(key, value)?,
            "sample_interval" => self.sample_interval = parse(key, value)?,
            "static_nodes" => self.static_nodes = parse_bool(key, value)?,
            k if k.starts_with("dsdv.") || k.starts_with("dymo.") || k.starts_with("olsr.") => {
                self.overrides.push((k.to_owned(), value.trim().to_owned()));
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn label(&self) -> String {
        match self.profile {
            Profile::Default => self.protocol.clone(),
            Profile::Mod => format!("mod-{}", self.protocol),
        }
    }

    pub fn id(&self) -> String {
        format!(
            "{}-n{}-s{}-seed{}",
            self.label(),
            self.node_count,
            self.session_count,
            self.seed
        )
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.node_count < 2 {
            return Err(config_err("nodes must be at least 2"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(config_err("duration must be positive"));
        }
        if !(self.traffic.rate > 0.0 && self.traffic.rate.is_finite()) {
            return Err(config_err("rate must be positive"));
        }
        if !(self.traffic.start >= 0.0) {
            return Err(config_err("traffic_start must be non-negative"));
        }
        let pairs = self.node_count * (self.node_count - 1);
        if self.session_count > pairs {
            return Err(config_err(format!(
                "{} sessions need distinct pairs but {} nodes only give {pairs}",
                self.session_count, self.node_count
            )));
        }
        self.channel.validate()?;
        Ok(())
    }

    /// Resolves the protocol profile and applies matching overrides; keys for
    /// other protocols are ignored.
    pub fn protocol_spec(&self, registry: &ProtocolRegistry) -> Result<ProtocolSpec, ScenarioError> {
        let mut spec = registry.spec(&self.protocol, self.profile)?;
        for (k, v) in &self.overrides {
            spec.params.set(k, v)?;
        }
        spec.params.validate()?;
        Ok(spec)
    }

    pub fn traces(&self) -> Result<Vec<VehicleTrace>, ScenarioError> {
        let grid = RoadGrid::new(self.grid.rows, self.grid.cols, self.grid.spacing)?;
        let cfg = MobilityConfig {
            node_count: self.node_count,
            speed: self.speed,
            seed: self.seed,
            duration: self.duration,
            sample_interval: self.sample_interval,
        };
        let traces = generate_traces(&grid, &cfg)?;
        if !self.static_nodes {
            return Ok(traces);
        }
        Ok(traces
            .iter()
            .map(|t| VehicleTrace::stationary(t.node, t.samples[0].state.position, self.duration, self.sample_interval))
            .collect())
    }

    pub fn setup(&self, traces: Vec<VehicleTrace>) -> SimulationSetup {
        SimulationSetup {
            seed: self.seed,
            duration: SimTime::from_secs_f64(self.duration),
            channel: self.channel,
            sessions: generate_sessions(self.seed, self.session_count, self.node_count, &self.traffic, self.duration),
            traces,
            data_ttl: self.traffic.ttl,
        }
    }
}

/// CBR sessions over distinct ordered node pairs. Session `k` draws from its
/// own random stream, so a smaller session count yields a prefix of a larger
/// one.
pub fn generate_sessions(
    seed: u64,
    count: usize,
    node_count: usize,
    traffic: &TrafficConfig,
    duration: f64,
) -> Vec<CbrSession> {
    let interval = 1.0 / traffic.rate;
    let mut used = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    for k in 0..count as u32 {
        let mut rng = stream(seed, Stream::Session(k));
        let (source, destination) = loop {
            let s = rng.random_range(0..node_count as NodeId);
            let mut d = rng.random_range(0..node_count as NodeId - 1);
            if d >= s {
                d += 1;
            }
            if used.insert((s, d)) {
                break (s, d);
            }
        };
        let start = traffic.start + rng.random_range(0.0..interval);
        out.push(CbrSession {
            id: k,
            source,
            destination,
            start: SimTime::from_secs_f64(start),
            stop: SimTime::from_secs_f64(duration),
            interval: SimTime::from_secs_f64(interval),
            packet_size: traffic.packet_size,
        });
    }
    out
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub record: MetricsRecord,
    pub log: EventLog,
    pub episodes: Vec<LinkEpisode>,
}

pub fn run_scenario(cfg: &ScenarioConfig, registry: &ProtocolRegistry) -> Result<ScenarioOutput, ScenarioError> {
    cfg.validate()?;
    let spec = cfg.protocol_spec(registry)?;
    let traces = cfg.traces()?;
    let episodes = measure_link_episodes(&traces, cfg.channel.range);
    let sim = Simulation::new(cfg.setup(traces), registry, &spec)?;
    let log = sim.run();
    let info = RunInfo {
        scenario_id: cfg.id(),
        protocol: spec.name().to_owned(),
        profile: spec.profile.to_string(),
        node_count: cfg.node_count,
        session_count: cfg.session_count,
        seed: cfg.seed,
    };
    let record = summarize(info, &log, &episodes);
    Ok(ScenarioOutput { record, log, episodes })
}
