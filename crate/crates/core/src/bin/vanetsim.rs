use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use vanet_sim::diagnostics::{diagnose_link, LinkQuery};
use vanet_sim::experiments::{metrics_csv_string, run_sweep, write_outputs, SweepConfig};
use vanet_sim::kinematics::StepGeometry;
use vanet_sim::mobility::write_traces_csv;
use vanet_sim::protocols::ProtocolRegistry;
use vanet_sim::scenario::{run_scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "vanetsim", version, about = "Urban VANET routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every combination of the selected protocols, node counts,
    /// session counts and seeds; writes metrics.csv and figure tables.
    Sweep(ScenarioArgs),
    /// Run a single scenario; also writes its event log.
    Run(ScenarioArgs),
    /// Print the geometric link model for one step.
    Diagnose(DiagnoseArgs),
    /// Write the vehicle traces of a scenario as CSV.
    ExportTraces(ScenarioArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Flat key=value file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated protocol names or `all`.
    #[arg(long)]
    protocol: Option<String>,
    /// `default`, `mod` or `all`.
    #[arg(long)]
    profile: Option<String>,
    /// Comma-separated node counts.
    #[arg(long)]
    nodes: Option<String>,
    /// Comma-separated CBR session counts.
    #[arg(long)]
    sessions: Option<String>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Road grid as ROWSxCOLS:SPACING.
    #[arg(long)]
    grid: Option<String>,
    /// `none`, `nakagami` or `nakagami:<m>,<q>`.
    #[arg(long)]
    fading: Option<String>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Parallel scenario runs; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    d_t0: f64,
    #[arg(long)]
    d1: f64,
    /// Degrees, strictly between 0 and 180.
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    d2: f64,
    /// Degrees, strictly between 0 and 180.
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 300.0)]
    range: f64,
    /// Step length in seconds.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value_t = 600.0)]
    horizon: f64,
}

impl ScenarioArgs {
    /// `single` starts from one scenario instead of the full grid.
    fn sweep(&self, single: bool) -> Result<SweepConfig, ScenarioError> {
        let mut sweep = SweepConfig::default();
        if single {
            for (k, v) in [("protocol", "olsr"), ("profile", "default"), ("nodes", "30"), ("sessions", "6"), ("seeds", "1")] {
                sweep.set(k, v)?;
            }
        }
        if let Some(path) = &self.config {
            sweep.load(&fs::read_to_string(path)?)?;
        }
        let flags: [(&str, Option<String>); 10] = [
            ("protocol", self.protocol.clone()),
            ("profile", self.profile.clone()),
            ("nodes", self.nodes.clone()),
            ("sessions", self.sessions.clone()),
            ("seed", self.seed.map(|s| s.to_string())),
            ("seeds", self.seeds.map(|s| s.to_string())),
            ("duration", self.duration.map(|d| d.to_string())),
            ("grid", self.grid.clone()),
            ("fading", self.fading.clone()),
            ("workers", self.workers.map(|w| w.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                sweep.set(key, &v)?;
            }
        }
        Ok(sweep)
    }
}

fn sweep_cmd(args: &ScenarioArgs) -> Result<ExitCode, ScenarioError> {
    let registry = ProtocolRegistry::default();
    let sweep = args.sweep(false)?;
    let total = sweep.expand(&registry)?.len();
    info!("running {total} scenarios");
    let outcome = run_sweep(&sweep, &registry)?;
    for path in write_outputs(&outcome.records, &args.out_dir)? {
        info!("wrote {}", path.display());
    }
    for (id, msg) in &outcome.failures {
        error!("{id}: {msg}");
    }
    println!(
        "{} of {total} scenarios succeeded; results in {}",
        outcome.records.len(),
        args.out_dir.display()
    );
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_cmd(args: &ScenarioArgs) -> Result<ExitCode, ScenarioError> {
    let registry = ProtocolRegistry::default();
    let scenarios = args.sweep(true)?.expand(&registry)?;
    let [cfg] = scenarios.as_slice() else {
        return Err(ScenarioError::Config(format!(
            "run needs exactly one scenario but the flags select {}; use sweep",
            scenarios.len()
        )));
    };
    let out = run_scenario(cfg, &registry)?;
    fs::create_dir_all(&args.out_dir)?;
    let id = cfg.id();
    fs::write(args.out_dir.join("metrics.csv"), metrics_csv_string(std::slice::from_ref(&out.record)))?;
    let mut events = io::BufWriter::new(fs::File::create(args.out_dir.join(format!("{id}-events.csv")))?);
    out.log.write_csv(&mut events)?;
    events.flush()?;
    print!("{}", metrics_csv_string(&[out.record]));
    Ok(ExitCode::SUCCESS)
}

fn export_cmd(args: &ScenarioArgs) -> Result<ExitCode, ScenarioError> {
    let mut sweep = args.sweep(true)?;
    sweep.protocols = vec!["olsr".into()];
    sweep.profiles.clear();
    let registry = ProtocolRegistry::default();
    fs::create_dir_all(&args.out_dir)?;
    let mut seen = std::collections::BTreeSet::new();
    for cfg in sweep.expand(&registry)? {
        if !seen.insert((cfg.node_count, cfg.seed)) {
            continue;
        }
        let path = args
            .out_dir
            .join(format!("traces-n{}-seed{}.csv", cfg.node_count, cfg.seed));
        let file = io::BufWriter::new(fs::File::create(&path)?);
        write_traces_csv(&cfg.traces()?, file)?;
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn diagnose_cmd(args: &DiagnoseArgs) -> ExitCode {
    let query = StepGeometry::new(args.d_t0, args.d1, args.alpha, args.d2, args.beta).map(|geometry| LinkQuery {
        geometry,
        range: args.range,
        step: args.step,
        horizon: args.horizon,
    });
    match query.and_then(diagnose_link) {
        Ok(d) => {
            println!("{d}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sweep(a) => sweep_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::ExportTraces(a) => export_cmd(a),
        Command::Diagnose(a) => return diagnose_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
