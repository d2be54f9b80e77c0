//! Monte-Carlo experiments.
//!
//! An [`ExperimentSpec`] names a sweep over antenna counts and transmit SNRs.
//! Every (sweep point, trial) pair draws the channel with seed
//! `base_seed + trial`, so all architectures and all SNR points of one trial
//! see the same realisation. Trials run on a worker pool; rows are merged back
//! in (sweep point, trial, architecture) order, so the output does not depend
//! on scheduling.
//!
//! Files written to the output directory:
//!
//! * `sweep.csv`: one row per (sweep point, trial, architecture)
//! * `summary.csv`: mean and standard error per (sweep point, architecture)
//! * `reports.jsonl`: one solver record per row
//! * `convergence.csv`: per-iteration objective (convergence mode only)

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{solve_full_dim, zero_forcing};
use crate::channel::{generate_rayleigh, reduce_channel, ChannelSet};
use crate::error::{MilacError, Result};
use crate::mapping::{map_digital_to_milac, DigitalBeamformer};
use crate::optimizer::{solve_psla, sum_rate, SolveRecord, SolveReport, SolverConfig};

/// Version tag written as the first line of every CSV file.
pub const CSV_SCHEMA: &str = "# milac-sweep v1";

/// Environment variable read by the command-line front end for the pool size.
pub const WORKERS_ENV: &str = "MILAC_WORKERS";

/// Noise power used for every user in the sweeps.
pub const NOISE_POWER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Convergence,
    SnrSweep,
    AntennaSweep,
    TheoremCheck,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Convergence => "convergence",
            Mode::SnrSweep => "snr_sweep",
            Mode::AntennaSweep => "antenna_sweep",
            Mode::TheoremCheck => "theorem_check",
        }
    }

    /// Architectures run when the spec does not list any.
    pub fn default_architectures(self) -> Vec<Architecture> {
        use Architecture::*;
        match self {
            Mode::Convergence => vec![DigitalFull, DigitalReduced],
            Mode::TheoremCheck => vec![DigitalReduced, TwoLayer],
            Mode::SnrSweep | Mode::AntennaSweep => vec![DigitalFull, DigitalReduced, TwoLayer, ZeroForcing],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = MilacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "convergence" => Ok(Mode::Convergence),
            "snr_sweep" => Ok(Mode::SnrSweep),
            "antenna_sweep" => Ok(Mode::AntennaSweep),
            "theorem_check" => Ok(Mode::TheoremCheck),
            other => Err(MilacError::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// PSLA on the full `L x K` precoder.
    DigitalFull,
    /// PSLA on the `K x K` range-space variable.
    DigitalReduced,
    /// Analog transmitter synthesised from the reduced digital solution.
    TwoLayer,
    /// Equal-power zero forcing.
    ZeroForcing,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::DigitalFull => "digital_full",
            Architecture::DigitalReduced => "digital_reduced",
            Architecture::TwoLayer => "two_layer",
            Architecture::ZeroForcing => "zero_forcing",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = MilacError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "digital_full" => Ok(Architecture::DigitalFull),
            "digital_reduced" => Ok(Architecture::DigitalReduced),
            "two_layer" => Ok(Architecture::TwoLayer),
            "zero_forcing" => Ok(Architecture::ZeroForcing),
            other => Err(MilacError::InvalidConfig(format!("unknown architecture {other:?}"))),
        }
    }
}

fn default_trials() -> usize {
    100
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub l_values: Vec<usize>,
    pub k: usize,
    pub snr_db_values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Solver settings; `pt` is overwritten at every SNR point.
    #[serde(default)]
    pub solver: SolverConfig,
    pub output_dir: PathBuf,
    /// Empty means [`Mode::default_architectures`].
    #[serde(default)]
    pub architectures: Vec<Architecture>,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    /// When false every wall-time column is written as zero, making the
    /// output files byte-reproducible.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

impl ExperimentSpec {
    pub fn new(mode: Mode, l_values: Vec<usize>, k: usize, snr_db_values: Vec<f64>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            mode,
            l_values,
            k,
            snr_db_values,
            trials: default_trials(),
            base_seed: 0,
            solver: SolverConfig::default(),
            output_dir: output_dir.into(),
            architectures: Vec::new(),
            workers: None,
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MilacError::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.l_values.is_empty() || self.snr_db_values.is_empty() {
            return bad("antenna and SNR lists must be non-empty".into());
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if let Some(&l) = self.l_values.iter().find(|&&l| l < self.k) {
            return bad(format!("L = {l} is smaller than K = {}", self.k));
        }
        if let Some(s) = self.snr_db_values.iter().find(|s| !s.is_finite()) {
            return bad(format!("SNR {s} dB is not finite"));
        }
        if self.workers == Some(0) {
            return bad("worker count must be at least 1".into());
        }
        if self.base_seed.checked_add(self.trials as u64).is_none() {
            return bad("base seed plus trial count overflows".into());
        }
        self.solver.validate()
    }

    pub fn architectures(&self) -> Vec<Architecture> {
        if self.architectures.is_empty() {
            self.mode.default_architectures()
        } else {
            let mut a = self.architectures.clone();
            a.sort();
            a.dedup();
            a
        }
    }

    /// Sweep points in output order: antenna count outer, SNR inner.
    pub fn sweep_points(&self) -> Vec<(usize, f64)> {
        self.l_values
            .iter()
            .flat_map(|&l| self.snr_db_values.iter().map(move |&s| (l, s)))
            .collect()
    }
}

/// Transmit power for an SNR in dB at unit noise power.
pub fn snr_to_power(snr_db: f64) -> f64 {
    NOISE_POWER * 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: Mode,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub architecture: Architecture,
    pub sum_rate: f64,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub architecture: Architecture,
    /// 0 is the starting point.
    pub iteration: usize,
    pub objective: f64,
}

/// One line of `reports.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: Mode,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub architecture: Architecture,
    pub seed: u64,
    pub report: Option<SolveRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub convergence: Vec<ConvergenceRow>,
    pub records: Vec<RunRecord>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: Mode,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub snr_db: f64,
    pub architecture: Architecture,
    /// Successful trials entering the statistics.
    pub trials: usize,
    pub failures: usize,
    pub mean_sum_rate: f64,
    pub stderr_sum_rate: f64,
    pub mean_wall_time: f64,
}

struct Outcome {
    sum_rate: f64,
    iterations: usize,
    wall_time: Duration,
    report: Option<SolveRecord>,
    history: Vec<f64>,
}

struct TrialOutput {
    rows: Vec<SweepRow>,
    records: Vec<RunRecord>,
    convergence: Vec<ConvergenceRow>,
}

fn solved(report: &SolveReport, seed: u64, wall_time: Duration) -> Outcome {
    Outcome {
        sum_rate: report.sum_rate,
        iterations: report.iterations,
        wall_time,
        report: Some(report.record(Some(seed))),
        history: report.objective_history.clone(),
    }
}

fn run_architectures(
    ch: &ChannelSet,
    cfg: &SolverConfig,
    seed: u64,
    archs: &[Architecture],
) -> Vec<(Architecture, std::result::Result<Outcome, String>)> {
    let needs_reduced = archs
        .iter()
        .any(|a| matches!(a, Architecture::DigitalReduced | Architecture::TwoLayer));
    let reduced = needs_reduced.then(|| {
        let start = Instant::now();
        let rep = reduce_channel(ch).and_then(|red| solve_psla(&red, cfg, None));
        rep.map(|r| (r, start.elapsed())).map_err(|e| e.to_string())
    });

    archs
        .iter()
        .map(|&arch| {
            let out = match arch {
                Architecture::DigitalReduced => match reduced.as_ref().expect("computed above") {
                    Ok((r, t)) => Ok(solved(r, seed, *t)),
                    Err(e) => Err(e.clone()),
                },
                Architecture::TwoLayer => match reduced.as_ref().expect("computed above") {
                    Ok((r, t)) => {
                        let start = Instant::now();
                        DigitalBeamformer::new(r.pd.clone(), cfg.pt)
                            .and_then(|d| map_digital_to_milac(&d))
                            .and_then(|sol| sum_rate(ch.h(), &sol.g, ch.sigma()))
                            .map(|rate| Outcome {
                                sum_rate: rate,
                                wall_time: *t + start.elapsed(),
                                ..solved(r, seed, Duration::ZERO)
                            })
                            .map_err(|e| e.to_string())
                    }
                    Err(e) => Err(e.clone()),
                },
                Architecture::DigitalFull => {
                    let start = Instant::now();
                    solve_full_dim(ch, cfg, None)
                        .map(|r| solved(&r, seed, start.elapsed()))
                        .map_err(|e| e.to_string())
                }
                Architecture::ZeroForcing => {
                    let start = Instant::now();
                    zero_forcing(ch, cfg.pt)
                        .and_then(|p| sum_rate(ch.h(), &p, ch.sigma()))
                        .map(|rate| Outcome {
                            sum_rate: rate,
                            iterations: 0,
                            wall_time: start.elapsed(),
                            report: None,
                            history: Vec::new(),
                        })
                        .map_err(|e| e.to_string())
                }
            };
            (arch, out)
        })
        .collect()
}

fn run_trial(spec: &ExperimentSpec, archs: &[Architecture], l: usize, snr_db: f64, trial: usize) -> TrialOutput {
    let seed = spec.base_seed + trial as u64;
    let cfg = SolverConfig { pt: snr_to_power(snr_db), ..spec.solver };
    let results = match generate_rayleigh(l, spec.k, seed) {
        Ok(ch) => run_architectures(&ch, &cfg, seed, archs),
        Err(e) => archs.iter().map(|&a| (a, Err(e.to_string()))).collect(),
    };

    let mut out = TrialOutput { rows: Vec::new(), records: Vec::new(), convergence: Vec::new() };
    for (arch, res) in results {
        let (row_rate, iterations, wall, failed) = match &res {
            Ok(o) => (o.sum_rate, o.iterations, o.wall_time, false),
            Err(e) => {
                warn!("L={l} K={} snr={snr_db} trial={trial} {arch}: {e}", spec.k);
                (f64::NAN, 0, Duration::ZERO, true)
            }
        };
        let wall_time = if spec.record_timing { wall.as_secs_f64() } else { 0.0 };
        out.rows.push(SweepRow {
            mode: spec.mode,
            l,
            k: spec.k,
            snr_db,
            trial,
            architecture: arch,
            sum_rate: row_rate,
            iterations,
            wall_time,
            failed,
        });
        let (report, error) = match res {
            Ok(o) => {
                if spec.mode == Mode::Convergence {
                    out.convergence.extend(o.history.iter().enumerate().map(|(i, &v)| ConvergenceRow {
                        l,
                        k: spec.k,
                        snr_db,
                        trial,
                        architecture: arch,
                        iteration: i,
                        objective: v,
                    }));
                }
                let mut report = o.report;
                if let (Some(r), false) = (report.as_mut(), spec.record_timing) {
                    r.wall_time_s = 0.0;
                    r.t_update_time_s = 0.0;
                }
                (report, None)
            }
            Err(e) => (None, Some(e)),
        };
        out.records.push(RunRecord {
            mode: spec.mode,
            l,
            k: spec.k,
            snr_db,
            trial,
            architecture: arch,
            seed,
            report,
            error,
        });
    }
    out
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| MilacError::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{CSV_SCHEMA}").map_err(|e| MilacError::io(path, e))?;
    Ok(csv::Writer::from_writer(w))
}

fn flush<W: Write>(w: &mut csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| MilacError::io(path, e))
}

/// Run every sweep point and trial, writing the output files as each sweep
/// point completes.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir).map_err(|e| MilacError::io(&spec.output_dir, e))?;
    let pool = match spec.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| MilacError::InvalidConfig(format!("worker pool: {e}")))?,
        ),
        None => None,
    };

    let archs = spec.architectures();
    let sweep_path = spec.output_dir.join("sweep.csv");
    let reports_path = spec.output_dir.join("reports.jsonl");
    let conv_path = spec.output_dir.join("convergence.csv");
    let mut sweep_w = csv_writer(&sweep_path)?;
    let mut conv_w = match spec.mode {
        Mode::Convergence => Some(csv_writer(&conv_path)?),
        _ => None,
    };
    let mut reports_w = BufWriter::new(File::create(&reports_path).map_err(|e| MilacError::io(&reports_path, e))?);

    let mut result = SweepResult::default();
    for (l, snr_db) in spec.sweep_points() {
        info!("{}: L={l} K={} snr={snr_db} dB, {} trials", spec.mode, spec.k, spec.trials);
        let work = || -> Vec<TrialOutput> {
            (0..spec.trials)
                .into_par_iter()
                .map(|t| run_trial(spec, &archs, l, snr_db, t))
                .collect()
        };
        let outputs = match &pool {
            Some(p) => p.install(work),
            None => work(),
        };
        for out in outputs {
            for row in &out.rows {
                sweep_w.serialize(row)?;
            }
            if let Some(w) = conv_w.as_mut() {
                for row in &out.convergence {
                    w.serialize(row)?;
                }
            }
            for rec in &out.records {
                serde_json::to_writer(&mut reports_w, rec)?;
                reports_w.write_all(b"\n").map_err(|e| MilacError::io(&reports_path, e))?;
            }
            result.rows.extend(out.rows);
            result.convergence.extend(out.convergence);
            result.records.extend(out.records);
        }
        flush(&mut sweep_w, &sweep_path)?;
        if let Some(w) = conv_w.as_mut() {
            flush(w, &conv_path)?;
        }
        reports_w.flush().map_err(|e| MilacError::io(&reports_path, e))?;
    }

    let summary = summarize(&result);
    write_summary(spec.output_dir.join("summary.csv"), &summary)?;
    if result.failures() > 0 {
        warn!("{} of {} rows failed", result.failures(), result.rows.len());
    }
    Ok(result)
}

/// Mean and standard error of the sum-rate, and mean wall time, per
/// (sweep point, architecture). Failed rows are counted but excluded from
/// the statistics. Groups appear in first-seen order.
pub fn summarize(result: &SweepResult) -> Vec<SummaryRow> {
    let mut groups: Vec<(SummaryRow, Vec<f64>, f64)> = Vec::new();
    for row in &result.rows {
        let idx = groups.iter().position(|(g, _, _)| {
            g.mode == row.mode
                && g.l == row.l
                && g.k == row.k
                && g.snr_db.to_bits() == row.snr_db.to_bits()
                && g.architecture == row.architecture
        });
        let idx = idx.unwrap_or_else(|| {
            groups.push((
                SummaryRow {
                    mode: row.mode,
                    l: row.l,
                    k: row.k,
                    snr_db: row.snr_db,
                    architecture: row.architecture,
                    trials: 0,
                    failures: 0,
                    mean_sum_rate: f64::NAN,
                    stderr_sum_rate: f64::NAN,
                    mean_wall_time: f64::NAN,
                },
                Vec::new(),
                0.0,
            ));
            groups.len() - 1
        });
        let (g, rates, wall) = &mut groups[idx];
        if row.failed {
            g.failures += 1;
        } else {
            rates.push(row.sum_rate);
            *wall += row.wall_time;
        }
    }

    groups
        .into_iter()
        .map(|(mut g, rates, wall)| {
            let n = rates.len();
            g.trials = n;
            if n > 0 {
                let mean = rates.iter().sum::<f64>() / n as f64;
                g.mean_sum_rate = mean;
                g.mean_wall_time = wall / n as f64;
                g.stderr_sum_rate = if n > 1 {
                    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
            }
            g
        })
        .collect()
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    flush(&mut w, path)
}

/// Read a `sweep.csv` written by [`run_experiment`].
pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MilacError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    r.deserialize().map(|row| row.map_err(MilacError::from)).collect()
}
