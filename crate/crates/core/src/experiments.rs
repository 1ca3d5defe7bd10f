//! Parameter sweeps over protocol variants, node counts, session counts and
//! seeds, plus per-figure tables derived from the metrics CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::metrics::{write_metrics_csv, MetricsRecord};
use crate::protocols::{Profile, ProtocolRegistry};
use crate::scenario::{parse_key_values, run_scenario, ScenarioConfig, ScenarioError};

pub const SWEEP_NODES: [usize; 5] = [30, 50, 70, 90, 120];
pub const SWEEP_SESSIONS: [usize; 4] = [6, 12, 18, 24];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: ScenarioConfig,
    /// Protocol names; empty means every registered protocol.
    pub protocols: Vec<String>,
    /// Profiles to run; empty means every profile a protocol has.
    pub profiles: Vec<Profile>,
    pub nodes: Vec<usize>,
    pub sessions: Vec<usize>,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            protocols: Vec::new(),
            profiles: Vec::new(),
            nodes: SWEEP_NODES.to_vec(),
            sessions: SWEEP_SESSIONS.to_vec(),
            seeds: vec![1, 2, 3],
            workers: 0,
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ScenarioError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| ScenarioError::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

/// `S..S+K-1`.
pub fn seed_range(first: u64, count: u64) -> Vec<u64> {
    (first..first + count).collect()
}

impl SweepConfig {
    /// Applies one `key=value`; sweep keys take lists, the rest go to the
    /// base scenario.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let all = value.trim().eq_ignore_ascii_case("all");
        match key {
            "protocol" | "protocols" => {
                self.protocols = if all {
                    Vec::new()
                } else {
                    value.split(',').map(|s| s.trim().to_ascii_lowercase()).collect()
                }
            }
            "profile" | "profiles" => self.profiles = if all { Vec::new() } else { list(key, value)? },
            "nodes" | "node_count" => self.nodes = list(key, value)?,
            "sessions" | "session_count" => self.sessions = list(key, value)?,
            "seed" => {
                let count = self.seeds.len().max(1) as u64;
                self.seeds = seed_range(value.trim().parse().map_err(|_| ScenarioError::Config(format!("seed: {value:?}")))?, count);
            }
            "seeds" => {
                let first = self.seeds.first().copied().unwrap_or(1);
                let count: u64 = value.trim().parse().map_err(|_| ScenarioError::Config(format!("seeds: {value:?}")))?;
                self.seeds = seed_range(first, count);
            }
            "workers" => {
                self.workers = value.trim().parse().map_err(|_| ScenarioError::Config(format!("workers: {value:?}")))?
            }
            _ => {
                if !self.base.set(key, value)? {
                    return Err(ScenarioError::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn load(&mut self, text: &str) -> Result<(), ScenarioError> {
        for (k, v) in parse_key_values(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// `(protocol, profile)` pairs in registry order, default before mod.
    pub fn variants(&self, registry: &ProtocolRegistry) -> Result<Vec<(String, Profile)>, ScenarioError> {
        let names: Vec<String> = if self.protocols.is_empty() {
            registry.names().map(str::to_owned).collect()
        } else {
            self.protocols.clone()
        };
        let mut out = Vec::new();
        for name in names {
            let available = registry.profiles(&name);
            if available.is_empty() {
                return Err(ScenarioError::Protocol(crate::protocols::ProtocolError::UnknownProtocol(name)));
            }
            for p in available {
                if self.profiles.is_empty() || self.profiles.contains(&p) {
                    out.push((name.clone(), p));
                }
            }
        }
        if out.is_empty() {
            return Err(ScenarioError::Config("no protocol/profile combination selected".into()));
        }
        Ok(out)
    }

    /// Every scenario of the sweep in canonical order.
    pub fn expand(&self, registry: &ProtocolRegistry) -> Result<Vec<ScenarioConfig>, ScenarioError> {
        let mut out = Vec::new();
        for (protocol, profile) in self.variants(registry)? {
            for &nodes in &self.nodes {
                for &sessions in &self.sessions {
                    for &seed in &self.seeds {
                        out.push(ScenarioConfig {
                            protocol: protocol.clone(),
                            profile,
                            node_count: nodes,
                            session_count: sessions,
                            seed,
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub records: Vec<MetricsRecord>,
    /// Scenario id and error message of every failed run.
    pub failures: Vec<(String, String)>,
}

/// Runs every scenario, in parallel when `workers != 1`. Records come back
/// in canonical order regardless of completion order.
pub fn run_sweep(sweep: &SweepConfig, registry: &ProtocolRegistry) -> Result<SweepOutcome, ScenarioError> {
    let scenarios = sweep.expand(registry)?;
    let run = |cfg: &ScenarioConfig| {
        run_scenario(cfg, registry)
            .map(|o| o.record)
            .map_err(|e| (cfg.id(), e.to_string()))
    };
    let results: Vec<_> = if sweep.workers == 1 {
        scenarios.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(sweep.workers)
            .build()
            .map_err(|e| ScenarioError::Config(format!("worker pool: {e}")))?;
        pool.install(|| scenarios.par_iter().map(run).collect())
    };
    let mut outcome = SweepOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.failures.push(f),
        }
    }
    Ok(outcome)
}

/// Mean of the defined values, with the number that were defined.
fn mean_of(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let v: Vec<f64> = values.flatten().collect();
    let m = (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    (m, v.len())
}

fn label(r: &MetricsRecord) -> String {
    if r.profile == "mod" {
        format!("mod-{}", r.protocol)
    } else {
        r.protocol.clone()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| x.to_string())
}

type Metric = fn(&MetricsRecord) -> Option<f64>;

const FIGURES: [(&str, &str, Metric); 3] = [
    ("pdr", "4", |r| r.pdr),
    ("ae2ed_ms", "6", |r| r.ae2ed_ms),
    ("nro", "8", |r| r.nro),
];

/// Seed-averaged tables for each figure:
/// `figNa_<metric>_vs_sessions.csv`, `figNb_<metric>_vs_nodes.csv` (one row
/// per protocol variant and axis point, every fixed value of the other axis
/// included) and `fig(N+1)_<metric>_bar.csv` (per-variant mean over
/// everything).
pub fn figure_tables(records: &[MetricsRecord]) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for (metric, fig, get) in FIGURES {
        let mut by_sessions: BTreeMap<(usize, String, usize), Vec<Option<f64>>> = BTreeMap::new();
        let mut by_nodes: BTreeMap<(usize, String, usize), Vec<Option<f64>>> = BTreeMap::new();
        let mut bars: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        for r in records {
            let l = label(r);
            by_sessions
                .entry((r.node_count, l.clone(), r.session_count))
                .or_default()
                .push(get(r));
            by_nodes
                .entry((r.session_count, l.clone(), r.node_count))
                .or_default()
                .push(get(r));
            bars.entry(l).or_default().push(get(r));
        }
        let mut a = format!("nodes,protocol,sessions,{metric},runs\n");
        for ((nodes, l, sessions), v) in &by_sessions {
            let (m, n) = mean_of(v.iter().copied());
            a.push_str(&format!("{nodes},{l},{sessions},{},{n}\n", fmt_opt(m)));
        }
        let mut b = format!("sessions,protocol,nodes,{metric},runs\n");
        for ((sessions, l, nodes), v) in &by_nodes {
            let (m, n) = mean_of(v.iter().copied());
            b.push_str(&format!("{sessions},{l},{nodes},{},{n}\n", fmt_opt(m)));
        }
        let mut c = format!("protocol,{metric},runs\n");
        for (l, v) in &bars {
            let (m, n) = mean_of(v.iter().copied());
            c.push_str(&format!("{l},{},{n}\n", fmt_opt(m)));
        }
        let bar_fig = fig.parse::<u32>().expect("figure number") + 1;
        files.push((format!("fig{fig}a_{metric}_vs_sessions.csv"), a));
        files.push((format!("fig{fig}b_{metric}_vs_nodes.csv"), b));
        files.push((format!("fig{bar_fig}_{metric}_bar.csv"), c));
    }
    files
}

pub fn metrics_csv_string(records: &[MetricsRecord]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(records, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Writes `metrics.csv` and the figure tables; returns the paths written.
pub fn write_outputs(records: &[MetricsRecord], out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut files = vec![("metrics.csv".to_owned(), metrics_csv_string(records))];
    files.extend(figure_tables(records));
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::File::create(&path)?.write_all(body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_variants_per_cell() {
        let reg = ProtocolRegistry::default();
        let sweep = SweepConfig {
            nodes: vec![30],
            sessions: vec![6],
            seeds: vec![1],
            ..SweepConfig::default()
        };
        let ids: Vec<String> = sweep.expand(&reg).unwrap().iter().map(|c| c.id()).collect();
        assert_eq!(
            ids,
            [
                "dsdv-n30-s6-seed1",
                "dymo-n30-s6-seed1",
                "mod-dymo-n30-s6-seed1",
                "olsr-n30-s6-seed1",
                "mod-olsr-n30-s6-seed1"
            ]
        );
    }

    #[test]
    fn full_grid_row_count() {
        let reg = ProtocolRegistry::default();
        assert_eq!(SweepConfig::default().expand(&reg).unwrap().len(), 5 * 4 * 5 * 3);
    }

    #[test]
    fn profile_filter() {
        let reg = ProtocolRegistry::default();
        let mut sweep = SweepConfig::default();
        sweep.set("profile", "mod").unwrap();
        let v = sweep.variants(&reg).unwrap();
        assert_eq!(v, [("dymo".to_owned(), Profile::Mod), ("olsr".to_owned(), Profile::Mod)]);
        sweep.set("protocol", "dsdv").unwrap();
        assert!(sweep.variants(&reg).is_err());
        sweep.set("protocol", "aodv").unwrap();
        assert!(sweep.variants(&reg).is_err());
    }

    #[test]
    fn seeds_expand_from_first() {
        let mut sweep = SweepConfig::default();
        sweep.set("seed", "5").unwrap();
        sweep.set("seeds", "4").unwrap();
        assert_eq!(sweep.seeds, [5, 6, 7, 8]);
        assert!(sweep.set("nonsense", "1").is_err());
    }

    #[test]
    fn figure_means_skip_missing() {
        let rec = |proto: &str, profile: &str, seed, pdr| MetricsRecord {
            scenario_id: format!("{proto}-{seed}"),
            protocol: proto.into(),
            profile: profile.into(),
            node_count: 30,
            session_count: 6,
            seed,
            pdr,
            ae2ed_ms: None,
            nro: Some(1.0),
            mean_link_duration: None,
            mean_path_stability: None,
            data_sent: 0,
            data_delivered: 0,
            control_sent: 0,
        };
        let records = [
            rec("olsr", "mod", 1, Some(0.5)),
            rec("olsr", "mod", 2, None),
            rec("olsr", "mod", 3, Some(1.0)),
        ];
        let tables = figure_tables(&records);
        let (name, body) = &tables[0];
        assert_eq!(name, "fig4a_pdr_vs_sessions.csv");
        assert_eq!(body, "nodes,protocol,sessions,pdr,runs\n30,mod-olsr,6,0.75,2\n");
        let ae = tables.iter().find(|(n, _)| n == "fig7_ae2ed_ms_bar.csv").unwrap();
        assert_eq!(ae.1, "protocol,ae2ed_ms,runs\nmod-olsr,NA,0\n");
    }
}
