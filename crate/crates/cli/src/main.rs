//! `wfsize`: run task-sizing experiments on a synthetic workload or on
//! replayed traces, and recompute reports from ledgers.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
//! 3 trace or ledger parse/validation error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wfsize::experiment::{
    comparison_rows, emit_report, load_ledger, replay_experiment, reports_from_ledgers, run_experiment,
    write_comparison_csv, Experiment, ExperimentConfig, StrategyId,
};
use wfsize::simulator::load_traces;
use wfsize::Error;

const LOG_ENV: &str = "WFSIZE_LOG";

#[derive(Parser)]
#[command(
    name = "wfsize",
    version,
    about = "Workflow task sizing with gradient bandits and Q-learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategies on the synthetic workload.
    Simulate(RunArgs),
    /// Fit behaviors to a trace CSV and run the strategies against them.
    Replay {
        #[command(flatten)]
        run: RunArgs,
        /// Trace CSV (a ledger from `simulate` works too).
        trace: PathBuf,
    },
    /// Recompute aggregates from ledgers and write a comparison table.
    Report {
        /// Ledger CSV files.
        ledgers: Vec<PathBuf>,
        /// Final episodes per strategy to aggregate.
        #[arg(long, default_value_t = 10)]
        window: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a configuration file without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of default_config, feedback_loop, bandits, q_learning.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<StrategyId>>,
    /// Episodes per strategy (the feedback loop predicts for this many after training).
    #[arg(long)]
    episodes: Option<u64>,
}

enum Failure {
    Usage(String),
    Config(String),
    Runtime(String),
    Trace(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Trace(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Runtime(m) | Failure::Trace(m) => m,
        }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_failure(e: Error) -> Failure {
    if e.is_trace_error() {
        Failure::Trace(e.to_string())
    } else {
        Failure::Runtime(e.to_string())
    }
}

impl RunArgs {
    fn load_config(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = ExperimentConfig::load(&self.config).map_err(config_failure)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(strategies) = &self.strategies {
            cfg.strategies = strategies.clone();
        }
        if let Some(n) = self.episodes {
            cfg.episodes.set_all(n);
        }
        cfg.validate_settings().map_err(config_failure)?;
        Ok(cfg)
    }

    /// `--out` wins over the config but is not recorded in the report, so
    /// the same run written to two places gives the same bytes.
    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
    }
}

fn run_and_emit(exp: &Experiment, dir: &Path) -> Result<(), Failure> {
    let output = run_experiment(exp).map_err(runtime_failure)?;
    let files = emit_report(dir, &output).map_err(runtime_failure)?;
    for f in &files {
        log::info!("wrote {}", f.display());
    }
    for (id, rep) in &output.report.strategies {
        println!(
            "{id}: cpu wastage {:.3} h, memory wastage {:.3} GBh, failures {} (episodes {}-{})",
            rep.overall.cpu_wastage_hours,
            rep.overall.mem_wastage_gbh,
            rep.overall.failure_count,
            rep.window[0],
            rep.window[1]
        );
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let cfg = args.load_config()?;
    let dir = args.out_dir(&cfg);
    let exp = Experiment::synthetic(cfg).map_err(config_failure)?;
    run_and_emit(&exp, &dir)
}

fn replay(args: &RunArgs, trace: &Path) -> Result<(), Failure> {
    let cfg = args.load_config()?;
    let dir = args.out_dir(&cfg);
    let records = load_traces(trace).map_err(|e| match e {
        Error::Io { .. } => Failure::Usage(e.to_string()),
        other => runtime_failure(other),
    })?;
    let replay = replay_experiment(cfg, &records).map_err(runtime_failure)?;
    run_and_emit(&replay.experiment, &dir)?;
    let fits: Vec<_> = replay.fits.values().collect();
    write_json(&dir.join("fits.json"), &fits)
}

fn report(ledgers: &[PathBuf], window: u64, out: &Path) -> Result<(), Failure> {
    if ledgers.is_empty() {
        return Err(Failure::Usage("report needs at least one ledger file".into()));
    }
    if window == 0 {
        return Err(Failure::Usage("--window must be >= 1".into()));
    }
    let mut rows = Vec::new();
    for path in ledgers {
        rows.extend(load_ledger(path).map_err(|e| match e {
            Error::Io { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Trace(e.to_string()),
        })?);
    }
    let reports = reports_from_ledgers(&rows, window).map_err(runtime_failure)?;
    let table = comparison_rows(&reports);
    std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let mut buf = Vec::new();
    write_comparison_csv(&mut buf, &table).map_err(runtime_failure)?;
    let csv_path = out.join("comparison.csv");
    std::fs::write(&csv_path, buf).map_err(|e| Failure::Runtime(format!("{}: {e}", csv_path.display())))?;
    write_json(&out.join("comparison.json"), &reports)?;
    println!(
        "{} strategies, {} rows -> {}",
        reports.len(),
        table.len(),
        csv_path.display()
    );
    Ok(())
}

fn validate_config(path: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(path).map_err(config_failure)?;
    cfg.validate().map_err(config_failure)?;
    let instances: u64 = cfg
        .workflows
        .iter()
        .flat_map(|w| w.stages.iter())
        .map(|s| s.instances as u64)
        .sum();
    println!(
        "{}: ok ({} workflows, {} instances per episode, {} machines)",
        path.display(),
        cfg.workflows.len(),
        instances,
        cfg.machines.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Replay { run, trace } => replay(run, trace),
        Command::Report { ledgers, window, out } => report(ledgers, *window, out),
        Command::ValidateConfig { config } => validate_config(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
