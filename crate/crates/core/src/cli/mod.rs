//! The `chunk-cascade` command-line front end.
//!
//! Settings come from built-in defaults, then an optional TOML file
//! (`--config`), then flags. Exit codes: 0 on success, 2 for a bad
//! configuration (the message names the field), 3 when `simulate` finds an
//! estimate more than four standard errors from the closed form, 1 for
//! anything else.

mod config;
mod table;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
use crate::simulate::{run_trials_with, SimReport};
use crate::stats::{multi_level_metrics, single_level_metrics, sweep, CascadeMetrics, CascadeModel, SweepParameter, SweepRow};
use crate::synth::{export_scene, generate_scene, run_bench_on, BenchReport};
use crate::store::DType;

pub use config::{
    BenchSection, ExperimentConfig, Format, ModelSection, OutputSection, PyramidSection, SimulateSection,
    SweepSection,
};
pub use table::{opt_real, real, Table};

/// Below this many trials `simulate` reports estimates without pass flags.
pub const MIN_CHECKED_TRIALS: u64 = 1000;

/// Allowed distance between estimate and closed form, in standard errors.
pub const CHECK_SIGMAS: f64 = 4.0;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Check(_) => 3,
            CliError::Run(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "chunk-cascade", version, about = "Cascade detection in multiresolution chunk grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form cascade metrics next to the single-level baseline.
    Analyze(CommonArgs),
    /// Closed-form metrics over a grid of one parameter.
    Sweep(SweepArgs),
    /// Monte Carlo estimates checked against the closed form.
    Simulate(SimulateArgs),
    /// Synthetic end-to-end comparison of single-level and cascade runs.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Output file (or directory, for the default sweeps); stdout if unset.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Prevalence (object prevalence for `bench`).
    #[arg(long)]
    pub p: Option<f64>,
    /// Per-level true positive rates, level 0 first, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tpr: Option<Vec<f64>>,
    /// Per-level false positive rates, level 0 first, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub fpr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `p`, `tpr<k>`, `fpr<k>` or `specificity<k>`.
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    pub l0_chunks_per_axis: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write the benchmark scene as a chunk directory.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Leave runtimes out of the output so it is reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Analyze(c) => c,
            Command::Sweep(a) => &a.common,
            Command::Simulate(a) => &a.common,
            Command::Bench(a) => &a.common,
        }
    }
}

/// Resolves the configuration for `command`: defaults, then the config
/// file, then flags.
pub fn resolve_config(command: &Command) -> Result<ExperimentConfig, CliError> {
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = common.dim {
        cfg.model.dim = d;
    }
    if let Some(t) = &common.tpr {
        cfg.model.tpr = t.clone();
    }
    if let Some(f) = &common.fpr {
        cfg.model.fpr = f.clone();
    }
    if let Some(p) = common.out.clone() {
        cfg.output.path = Some(p);
    }
    if let Some(f) = common.format {
        cfg.output.format = f;
    }
    if let Some(t) = common.trials {
        cfg.simulate.trials = t;
    }
    match command {
        Command::Bench(args) => {
            if let Some(p) = common.p {
                cfg.bench.object_prevalence = p;
            }
            if let Some(s) = common.seed {
                cfg.bench.seed = s;
            }
            if let Some(dir) = args.export.clone() {
                cfg.bench.export_dir = Some(dir);
            }
        }
        _ => {
            if let Some(p) = common.p {
                cfg.model.prevalence = p;
            }
            if let Some(s) = common.seed {
                cfg.simulate.seed = s;
            }
        }
    }
    if let Command::Sweep(args) = command {
        if let Some(p) = &args.param {
            cfg.sweep.parameter = Some(p.clone());
        }
        if let Some(g) = &args.grid {
            cfg.sweep.grid = Some(g.clone());
        }
        if let Some(n) = args.points {
            cfg.sweep.points = n;
            cfg.sweep.grid = None;
        }
    }
    if let Command::Simulate(args) = command {
        if let Some(axes) = &args.l0_chunks_per_axis {
            cfg.pyramid.l0_chunks_per_axis = Some(axes.clone());
        }
    }
    Ok(cfg)
}

/// Runs a parsed command line, writing primary output to `stdout` unless
/// an output path is configured.
pub fn run(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.command)?;
    let threads = cli.command.common().threads;
    if threads == Some(0) {
        return Err(CliError::Config {
            field: "--threads".into(),
            message: "must be at least 1".into(),
        });
    }
    let parallel = threads != Some(1);
    let mut body = move || match &cli.command {
        Command::Analyze(_) => cmd_analyze(&cfg, stdout),
        Command::Sweep(_) => cmd_sweep(&cfg, stdout),
        Command::Simulate(_) => cmd_simulate(&cfg, parallel, stdout),
        Command::Bench(args) => cmd_bench(&cfg, parallel, args.no_timing, stdout),
    };
    match threads {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config {
                field: "--threads".into(),
                message: e.to_string(),
            })?
            .install(body),
        _ => body(),
    }
}

fn emit(path: Option<&Path>, bytes: &[u8], stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::io(p, e).into()),
        None => Ok(table::write_bytes(stdout, bytes)?),
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::io("<json>", std::io::Error::other(e)))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn metrics_row(name: &str, m: &CascadeMetrics, levels: usize) -> Vec<String> {
    let mut row = vec![
        name.to_string(),
        real(m.tpr),
        real(m.fpr),
        real(m.specificity()),
        opt_real(m.precision),
    ];
    for k in 0..levels {
        row.push(real(m.expected_calls_per_l0_chunk.get(k).copied().unwrap_or(0.0)));
    }
    row.push(real(m.total_calls_per_l0_chunk()));
    row
}

#[derive(Serialize)]
struct AnalyzeRecord<'a> {
    model: &'a CascadeModel,
    cascade: CascadeMetrics,
    single_level: CascadeMetrics,
}

/// CSV columns: `detector,tpr,fpr,specificity,precision,calls_level_<k>...,calls_total`.
/// Calls are expected classifier calls per level-0 chunk.
pub fn cmd_analyze(cfg: &ExperimentConfig, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let model = cfg.cascade_model()?;
    let record = AnalyzeRecord {
        cascade: multi_level_metrics(&model)?,
        single_level: single_level_metrics(model.profiles[0], model.prevalence)?,
        model: &model,
    };
    let bytes = match cfg.output.format {
        Format::Json => json_bytes(&record)?,
        Format::Csv => {
            let levels = model.levels();
            let mut header = vec!["detector", "tpr", "fpr", "specificity", "precision"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>();
            header.extend((0..levels).map(|k| format!("calls_level_{k}")));
            header.push("calls_total".into());
            let mut t = Table::new(header);
            t.push(metrics_row("cascade", &record.cascade, levels));
            t.push(metrics_row("single_level", &record.single_level, levels));
            t.to_csv()?
        }
    };
    emit(cfg.output.path.as_deref(), &bytes, stdout)
}

/// The three default sweeps: prevalence, level-1 TPR and level-1
/// specificity.
pub fn default_sweeps() -> [SweepParameter; 3] {
    [
        SweepParameter::Prevalence,
        SweepParameter::Tpr(1),
        SweepParameter::Specificity(1),
    ]
}

/// CSV columns: the swept parameter, then `cascade_sensitivity`,
/// `cascade_specificity`, `cascade_precision`, `cascade_calls_l0` (expected
/// level-0 calls over level-0 chunks), `cascade_calls_total`, and the same
/// four quantities for the single-level detector.
pub fn sweep_table(parameter: SweepParameter, rows: &[SweepRow]) -> Table {
    let mut t = Table::new([
        parameter.label(),
        "cascade_sensitivity".into(),
        "cascade_specificity".into(),
        "cascade_precision".into(),
        "cascade_calls_l0".into(),
        "cascade_calls_total".into(),
        "single_sensitivity".into(),
        "single_specificity".into(),
        "single_precision".into(),
        "single_calls".into(),
    ]);
    for r in rows {
        let (c, s) = (&r.cascade, &r.single_level);
        t.push(vec![
            real(r.value),
            real(c.sensitivity()),
            real(c.specificity()),
            opt_real(c.precision),
            real(c.expected_calls_per_l0_chunk[0]),
            real(c.total_calls_per_l0_chunk()),
            real(s.sensitivity()),
            real(s.specificity()),
            opt_real(s.precision),
            real(s.total_calls_per_l0_chunk()),
        ]);
    }
    t
}

fn sweep_bytes(format: Format, parameter: SweepParameter, rows: &[SweepRow]) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => Ok(sweep_table(parameter, rows).to_csv()?),
        Format::Json => json_bytes(&rows),
    }
}

pub fn cmd_sweep(cfg: &ExperimentConfig, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let model = cfg.cascade_model()?;
    let grid = cfg.sweep_grid()?;
    let format = cfg.output.format;
    if let Some(parameter) = cfg.sweep_parameter()? {
        let rows = sweep(&model, parameter, &grid).map_err(|e| CliError::Config {
            field: "sweep.parameter".into(),
            message: e.to_string(),
        })?;
        return emit(cfg.output.path.as_deref(), &sweep_bytes(format, parameter, &rows)?, stdout);
    }
    let dir = cfg.output.path.as_deref().ok_or_else(|| CliError::Config {
        field: "output.path".into(),
        message: "the default sweeps write three files and need an output directory (--out DIR)".into(),
    })?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    for parameter in default_sweeps() {
        let rows = sweep(&model, parameter, &grid)?;
        let path = dir.join(format!("sweep_{}.{ext}", parameter.label()));
        emit(Some(&path), &sweep_bytes(format, parameter, &rows)?, stdout)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateRow {
    pub metric: String,
    pub analytic: Option<f64>,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    /// `None` below the minimum trial count or when either side is
    /// undefined.
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateOutput {
    pub trials: u64,
    pub seed: u64,
    pub l0_chunks_per_axis: Vec<usize>,
    pub rows: Vec<SimulateRow>,
}

/// Pairs each simulated estimate with its closed-form value.
pub fn compare_simulation(report: &SimReport, analytic: &CascadeMetrics) -> Vec<SimulateRow> {
    let mut expected = vec![Some(analytic.tpr), Some(analytic.fpr), analytic.precision];
    expected.extend(analytic.expected_calls_per_l0_chunk.iter().map(|&c| Some(c)));
    report
        .metrics()
        .into_iter()
        .zip(expected)
        .map(|((metric, est), analytic)| {
            let pass = match (est, analytic) {
                (Some(e), Some(a)) if report.trials >= MIN_CHECKED_TRIALS => Some(e.within(a, CHECK_SIGMAS)),
                _ => None,
            };
            SimulateRow {
                metric,
                analytic,
                estimate: est.map(|e| e.mean),
                std_error: est.map(|e| e.std_error),
                pass,
            }
        })
        .collect()
}

/// CSV columns: `metric,analytic,estimate,std_error,trials,pass`, where
/// `pass` is `true`, `false` or `n/a`.
pub fn cmd_simulate(cfg: &ExperimentConfig, parallel: bool, stdout: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let model = cfg.cascade_model()?;
    let spec = cfg.simulation_spec(&model)?;
    let trials = cfg.simulate.trials;
    if trials == 0 {
        return Err(CliError::Config {
            field: "simulate.trials".into(),
            message: "must be at least 1".into(),
        });
    }
    let report = run_trials_with(&model, &spec, trials, cfg.simulate.seed, parallel)?;
    let out = SimulateOutput {
        trials,
        seed: cfg.simulate.seed,
        l0_chunks_per_axis: spec.l0_chunks_per_axis().to_vec(),
        rows: compare_simulation(&report, &multi_level_metrics(&model)?),
    };
    let bytes = match cfg.output.format {
        Format::Json => json_bytes(&out)?,
        Format::Csv => {
            let mut t = Table::new(["metric", "analytic", "estimate", "std_error", "trials", "pass"]);
            for r in &out.rows {
                t.push(vec![
                    r.metric.clone(),
                    opt_real(r.analytic),
                    opt_real(r.estimate),
                    opt_real(r.std_error),
                    trials.to_string(),
                    match r.pass {
                        Some(true) => "true".into(),
                        Some(false) => "false".into(),
                        None => "n/a".into(),
                    },
                ]);
            }
            t.to_csv()?
        }
    };
    emit(cfg.output.path.as_deref(), &bytes, stdout)?;
    let failed: Vec<&str> = out
        .rows
        .iter()
        .filter(|r| r.pass == Some(false))
        .map(|r| r.metric.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "estimates beyond {CHECK_SIGMAS} standard errors: {}",
            failed.join(", ")
        )))
    }
}

/// CSV columns: `detector,chunk_recall,chunk_precision,object_recall,
/// object_precision,calls,l0_calls,predicted_l0_calls`, plus
/// `runtime_seconds` unless timing is off. `calls` is the top-down
/// `L1:L0` call string.
pub fn bench_table(report: &BenchReport, timing: bool) -> Table {
    let mut header = vec![
        "detector",
        "chunk_recall",
        "chunk_precision",
        "object_recall",
        "object_precision",
        "calls",
        "l0_calls",
        "predicted_l0_calls",
    ];
    if timing {
        header.push("runtime_seconds");
    }
    let mut t = Table::new(header);
    let n = report.n_l0_chunks as f64;
    for (name, row, predicted) in [
        ("single_level", &report.single_level, n),
        ("cascade", &report.cascade, report.predicted_calls_per_level[0]),
    ] {
        let mut cells = vec![
            name.to_string(),
            opt_real(row.chunk_recall),
            opt_real(row.chunk_precision),
            opt_real(row.objects.recall),
            opt_real(row.objects.precision),
            row.calls.clone(),
            row.calls_per_level[0].to_string(),
            real(predicted),
        ];
        if timing {
            cells.push(opt_real(row.wall_clock_seconds));
        }
        t.push(cells);
    }
    t
}

pub fn cmd_bench(
    cfg: &ExperimentConfig,
    parallel: bool,
    no_timing: bool,
    stdout: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let bench = cfg.bench_config(parallel)?;
    let scene = generate_scene(&bench.scene)?;
    let calibration = generate_scene(&bench.scene.with_seed(bench.calibration_seed()))?;
    if let Some(dir) = &cfg.bench.export_dir {
        export_scene(&scene, dir, DType::F32)?;
    }
    let mut report = run_bench_on(&bench, &scene, &calibration)?;
    if no_timing {
        report.strip_timing();
    }
    let bytes = match cfg.output.format {
        Format::Json => json_bytes(&report)?,
        Format::Csv => bench_table(&report, !no_timing).to_csv()?,
    };
    emit(cfg.output.path.as_deref(), &bytes, stdout)
}
