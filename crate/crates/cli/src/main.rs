//! Command-line front end for the Monte-Carlo sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Deserialize;

use milac::harness::{run_experiment, summarize, Architecture, ExperimentSpec, Mode, SweepResult, WORKERS_ENV};
use milac::optimizer::{InitRule, SolverConfig, XiRule, EQUIVALENCE_TOL};

#[derive(Parser, Debug)]
#[command(name = "milac", version, about = "Two-layer analog beamforming sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-iteration objective of the optimiser.
    Convergence(RunArgs),
    /// Sum-rate against transmit SNR.
    SnrSweep(RunArgs),
    /// Sum-rate against the number of transmit antennas.
    AntennaSweep(RunArgs),
    /// Compare the analog transmitter with its digital reference row by row.
    TheoremCheck(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Antenna counts, comma separated.
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<usize>>,
    /// Number of users.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Transmit SNRs in dB, comma separated.
    #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Channel realisations per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Seed of trial 0; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative sum-rate change that stops the optimiser.
    #[arg(long)]
    eps: Option<f64>,
    /// Maximum outer iterations.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Shift rule: spectral or trace.
    #[arg(long = "xi-rule")]
    xi_rule: Option<XiRule>,
    /// Starting point: regularized_zf or matched_filter.
    #[arg(long)]
    init: Option<InitRule>,
    /// Architectures to run, comma separated.
    #[arg(long = "arch", value_delimiter = ',')]
    architectures: Option<Vec<Architecture>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with defaults for any of the above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write zero wall times so repeated runs give identical files.
    #[arg(long = "no-timing")]
    no_timing: bool,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "L")]
    l: Option<Vec<usize>>,
    #[serde(rename = "K")]
    k: Option<usize>,
    snr_db: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    record_timing: Option<bool>,
    architectures: Option<Vec<Architecture>>,
    solver: Option<SolverConfig>,
}

#[derive(Debug)]
enum Failure {
    /// Reported with exit status 2.
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn defaults(mode: Mode) -> (Vec<usize>, usize, Vec<f64>, usize) {
    match mode {
        Mode::Convergence => (vec![32], 4, vec![0.0, 10.0, 20.0, 30.0], 1),
        Mode::SnrSweep => (vec![32], 4, (0..=6).map(|i| 5.0 * i as f64).collect(), 100),
        Mode::AntennaSweep => (vec![8, 16, 32, 64, 128], 8, vec![10.0], 100),
        Mode::TheoremCheck => (vec![32], 4, vec![0.0, 10.0, 20.0], 100),
    }
}

fn load_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn workers_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("{WORKERS_ENV} must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(None),
    }
}

/// Defaults for the mode, then the config file, then the flags.
fn build_spec(mode: Mode, args: RunArgs) -> anyhow::Result<ExperimentSpec> {
    let file = match &args.config {
        Some(p) => load_config(p)?,
        None => FileConfig::default(),
    };
    let (l, k, snr, trials) = defaults(mode);
    let mut solver = file.solver.unwrap_or_default();
    if let Some(eps) = args.eps {
        solver.eps = eps;
    }
    if let Some(m) = args.max_iter {
        solver.max_outer = m;
    }
    if let Some(x) = args.xi_rule {
        solver.xi_rule = x;
    }
    if let Some(i) = args.init {
        solver.init = i;
    }
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("results").join(mode.as_str()));

    let mut spec = ExperimentSpec::new(
        mode,
        args.l.or(file.l).unwrap_or(l),
        args.k.or(file.k).unwrap_or(k),
        args.snr_db.or(file.snr_db).unwrap_or(snr),
        out,
    );
    spec.trials = args.trials.or(file.trials).unwrap_or(trials);
    spec.base_seed = args.seed.or(file.seed).unwrap_or(0);
    spec.solver = solver;
    spec.architectures = args.architectures.or(file.architectures).unwrap_or_default();
    spec.workers = workers_from_env()?.or(file.workers);
    spec.record_timing = !args.no_timing && file.record_timing.unwrap_or(true);
    spec.validate()?;
    Ok(spec)
}

fn report(spec: &ExperimentSpec, result: &SweepResult) -> anyhow::Result<()> {
    println!("{:<16} {:>5} {:>3} {:>8} {:>12} {:>10} {:>8}", "architecture", "L", "K", "snr_db", "sum_rate", "stderr", "failed");
    for s in summarize(result) {
        println!(
            "{:<16} {:>5} {:>3} {:>8.2} {:>12.6} {:>10.2e} {:>8}",
            s.architecture.as_str(),
            s.l,
            s.k,
            s.snr_db,
            s.mean_sum_rate,
            s.stderr_sum_rate,
            s.failures
        );
    }
    println!("output written to {}", spec.output_dir.display());

    if spec.mode == Mode::TheoremCheck {
        let of = |arch| result.rows.iter().filter(move |r| r.architecture == arch);
        let mut worst = 0.0f64;
        for a in of(Architecture::DigitalReduced) {
            if let Some(b) = of(Architecture::TwoLayer).find(|b| (b.l, b.trial) == (a.l, a.trial) && b.snr_db == a.snr_db) {
                worst = worst.max((a.sum_rate - b.sum_rate).abs());
            }
        }
        println!("max |two_layer - digital_reduced| = {worst:.3e}");
        if worst > EQUIVALENCE_TOL {
            bail!("two-layer sum-rate deviates from the digital reference by {worst:e}");
        }
    }
    if result.failures() > 0 {
        eprintln!("warning: {} rows failed, see reports.jsonl", result.failures());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (mode, args) = match cli.command {
        Command::Convergence(a) => (Mode::Convergence, a),
        Command::SnrSweep(a) => (Mode::SnrSweep, a),
        Command::AntennaSweep(a) => (Mode::AntennaSweep, a),
        Command::TheoremCheck(a) => (Mode::TheoremCheck, a),
    };
    let spec = build_spec(mode, args).map_err(Failure::Config)?;
    info!("running {mode} with {:?}", spec);
    let result = run_experiment(&spec).map_err(|e| Failure::Run(e.into()))?;
    report(&spec, &result).map_err(Failure::Run)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
