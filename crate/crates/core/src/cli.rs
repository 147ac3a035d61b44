//! Command-line front end.
//!
//! Results go to stdout unless `--out DIR` is given, in which case every
//! artifact is written into `DIR` next to a `manifest.json`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::data::{self, Correction, InputFormat, LoadOptions, MetaDataset};
use crate::extended::{extended_bound, InnerMode, OptConfig};
use crate::selection::{Family, Tail};
use crate::sensitivity::{self, CellStatus, ComparatorConfig, Favor, SweepConfig};
use crate::sim::{self, Scenario};
use crate::{cj_bound, fit_ml, Error, Seed};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DEGRADED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pubbias", version, about = "Worst-case publication-bias bounds for random-effects meta-analysis")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write artifacts and a manifest into this directory instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum-likelihood random-effects fit, as JSON.
    Fit(FitArgs),
    /// Copas-Jackson bound over a grid of p.
    CjBound(BoundArgs),
    /// Extended bound over a grid of p.
    ExtBound(ExtArgs),
    /// Bounds and selection-model adjusted estimates over a grid of p, as tidy CSV.
    Sweep(SweepArgs),
    /// Run a simulation scenario.
    Simulate(SimArgs),
    /// Embedded case-study datasets.
    Datasets {
        #[command(subcommand)]
        action: DatasetAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetAction {
    /// Names and study counts.
    List,
    /// Write a dataset in the CSV layout it is stored in.
    Export { name: String },
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Embedded dataset name.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub dataset: Option<String>,
    /// CSV file (`-` for stdin).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "ys-csv")]
    pub format: InputFormat,
    /// Continuity correction added to 2x2 tables.
    #[arg(long, default_value_t = 0.5)]
    pub correction: f64,
    /// Correct every table, not only those with a zero cell.
    #[arg(long)]
    pub correct_all: bool,
    #[arg(long)]
    pub drop_double_zero: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// A single selection probability.
    #[arg(long, conflicts_with = "p_grid")]
    pub p: Option<f64>,
    /// Comma-separated selection probabilities.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    /// Heterogeneity used by the bounds (default: the ML estimate).
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerArg {
    Discrete,
    Analytic,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub kprime_stride: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub inner: Option<InnerArg>,
    /// Random if omitted; the value used is recorded in the manifest.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct ExtArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TailArg {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FavorArg {
    Auto,
    Positive,
    Negative,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comparator families, comma-separated, `all` or `none`.
    #[arg(long, default_value = "all")]
    pub families: String,
    #[arg(long, value_enum, default_value_t = TailArg::One)]
    pub tail: TailArg,
    #[arg(long, value_enum, default_value_t = FavorArg::Auto)]
    pub favor: FavorArg,
    /// Keep τ at the ML fit when fitting comparator models.
    #[arg(long)]
    pub fix_tau: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Preset name or path to a scenario JSON file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Studies per complete meta-analysis.
    #[arg(long)]
    pub studies: Option<usize>,
    #[arg(long, conflicts_with = "p_grid")]
    pub p: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
    Failure(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(Error::NotConverged { .. } | Error::ZeroMass(_)) => EXIT_DEGRADED,
            CliError::Lib(Error::Io(_)) => EXIT_FAILURE,
            CliError::Lib(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_secs: f64,
    pub outputs: Vec<String>,
}

/// Collects artifacts, to stdout or into the output directory.
struct Sink {
    dir: Option<PathBuf>,
    outputs: Vec<String>,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Sink { dir, outputs: Vec::new() })
    }

    /// Writes to `file` under the output directory, or to stdout when
    /// `to_stdout` is set and there is none.
    fn emit(&mut self, file: &str, bytes: &[u8], to_stdout: bool) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                fs::write(d.join(file), bytes)?;
                self.outputs.push(file.to_string());
            }
            None if to_stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
            }
            None => {}
        }
        Ok(())
    }

    fn finish(self, command: &str, config: serde_json::Value, seed: Option<u64>, start: Instant) -> Result<(), CliError> {
        let Some(d) = &self.dir else {
            return Ok(());
        };
        let manifest = RunManifest {
            command: command.to_string(),
            args: std::env::args().collect(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        fs::write(d.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }
}

fn load(args: &DataArgs) -> Result<MetaDataset, CliError> {
    let opts = LoadOptions {
        correction: if args.correct_all {
            Correction::always(args.correction)
        } else {
            Correction::if_any_zero(args.correction)
        },
        drop_double_zero: args.drop_double_zero,
    };
    match (&args.dataset, &args.input) {
        (Some(name), _) => Ok(data::embedded_with(name, opts)?),
        (None, Some(path)) if path == Path::new("-") => {
            Ok(data::load_dataset_with(std::io::stdin().lock(), args.format, opts)?)
        }
        (None, Some(path)) => {
            let f = fs::File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Ok(data::load_dataset_with(f, args.format, opts)?)
        }
        (None, None) => Err(CliError::Usage("one of --dataset or --input is required".into())),
    }
}

fn data_config(args: &DataArgs) -> serde_json::Value {
    json!({
        "dataset": args.dataset,
        "input": args.input,
        "format": args.format,
        "correction": args.correction,
        "correct_all": args.correct_all,
        "drop_double_zero": args.drop_double_zero,
    })
}

fn p_values(p: Option<f64>, grid: &Option<Vec<f64>>, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
    let ps = match (p, grid) {
        (Some(p), _) => vec![p],
        (None, Some(g)) => g.clone(),
        (None, None) => default,
    };
    if ps.is_empty() {
        return Err(CliError::Usage("empty p grid".into()));
    }
    if let Some(bad) = ps.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(CliError::Usage(format!("p = {bad} is outside (0, 1]")));
    }
    Ok(ps)
}

/// Solver configuration and the seed actually used.
fn solver_config(args: &SolverArgs) -> Result<(OptConfig, u64), CliError> {
    let seed = args.seed.unwrap_or_else(rand::random);
    let mut c = OptConfig { seed: Seed(seed), ..OptConfig::default() };
    if let Some(v) = args.k1 {
        c.k1 = v;
    }
    if let Some(v) = args.k2 {
        c.k2 = v;
    }
    if let Some(v) = args.kprime_stride {
        c.kprime_stride = v;
    }
    if let Some(v) = args.restarts {
        c.restarts = v;
    }
    if let Some(v) = args.max_iters {
        c.max_iters = v;
    }
    if let Some(m) = args.inner {
        c.inner_mode = match m {
            InnerArg::Discrete => InnerMode::Discrete,
            InnerArg::Analytic => InnerMode::Analytic,
        };
    }
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((c, seed))
}

fn parse_families(s: &str) -> Result<Vec<Family>, CliError> {
    match s.trim() {
        "all" => Ok(Family::T_TYPES.to_vec()),
        "none" | "" => Ok(Vec::new()),
        list => list
            .split(',')
            .map(|f| f.trim().parse::<Family>().map_err(|e| CliError::Usage(e.to_string())))
            .collect(),
    }
}

fn json_line<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn cmd_fit(args: &FitArgs, sink: &mut Sink) -> Result<(i32, serde_json::Value, Option<u64>), CliError> {
    let d = load(&args.data)?;
    let fit = fit_ml(&d)?;
    sink.emit("fit.json", &json_line(&fit)?, true)?;
    Ok((EXIT_OK, json!({ "data": data_config(&args.data) }), None))
}

fn cmd_cj(args: &BoundArgs, sink: &mut Sink) -> Result<(i32, serde_json::Value, Option<u64>), CliError> {
    let d = load(&args.data)?;
    let ps = p_values(args.grid.p, &args.grid.p_grid, sensitivity::default_p_grid())?;
    let tau = match args.grid.tau {
        Some(t) => t,
        None => fit_ml(&d)?.tau_hat,
    };
    let bounds = ps.iter().map(|&p| cj_bound(&d, tau, p)).collect::<crate::Result<Vec<_>>>()?;
    sink.emit("cj_bounds.json", &json_line(&bounds)?, true)?;
    Ok((EXIT_OK, json!({ "data": data_config(&args.data), "p": ps, "tau": tau }), None))
}

fn cmd_ext(args: &ExtArgs, sink: &mut Sink) -> Result<(i32, serde_json::Value, Option<u64>), CliError> {
    let d = load(&args.data)?;
    let ps = p_values(args.grid.p, &args.grid.p_grid, sensitivity::default_p_grid())?;
    let (opt, seed) = solver_config(&args.solver)?;
    let fit = fit_ml(&d)?;
    let tau = args.grid.tau.unwrap_or(fit.tau_hat);
    let bounds = ps.iter().map(|&p| extended_bound(&d, tau, fit.mu_hat, p, &opt)).collect::<crate::Result<Vec<_>>>()?;
    sink.emit("ext_bounds.json", &json_line(&bounds)?, true)?;
    let code = if bounds.iter().any(|b| b.a1.degraded()) { EXIT_DEGRADED } else { EXIT_OK };
    let config = json!({ "data": data_config(&args.data), "p": ps, "tau": tau, "opt": opt });
    Ok((code, config, Some(seed)))
}

fn cmd_sweep(args: &SweepArgs, sink: &mut Sink) -> Result<(i32, serde_json::Value, Option<u64>), CliError> {
    let d = load(&args.data)?;
    let ps = p_values(args.grid.p, &args.grid.p_grid, sensitivity::default_p_grid())?;
    let (opt, seed) = solver_config(&args.solver)?;
    let fit = fit_ml(&d)?;
    let config = SweepConfig {
        families: parse_families(&args.families)?,
        tau: args.grid.tau,
        opt,
        comparator: ComparatorConfig {
            tail: match args.tail {
                TailArg::One => Tail::One,
                TailArg::Two => Tail::Two,
            },
            favor: match args.favor {
                FavorArg::Auto => Favor::Auto,
                FavorArg::Positive => Favor::Positive,
                FavorArg::Negative => Favor::Negative,
            },
            fix_tau: args.fix_tau,
            ..ComparatorConfig::default()
        },
    };
    let rows = sensitivity::sweep(&d, &fit, &ps, &config)?;
    let mut csv = Vec::new();
    sensitivity::write_sweep_csv(&rows, &mut csv)?;
    sink.emit("sweep.csv", &csv, true)?;
    let cells: Vec<&CellStatus> = rows
        .iter()
        .flat_map(|r| {
            [&r.cj_upper, &r.cj_lower, &r.ext_upper, &r.ext_lower]
                .into_iter()
                .chain(r.adjusted.iter().map(|(_, c)| c))
                .map(|c| &c.status)
        })
        .collect();
    let failed = cells.iter().filter(|s| matches!(s, CellStatus::Failed(_))).count();
    let code = if failed == cells.len() {
        eprintln!("every cell failed");
        EXIT_FAILURE
    } else if cells.iter().any(|s| **s == CellStatus::Degraded) {
        EXIT_DEGRADED
    } else {
        EXIT_OK
    };
    let manifest = json!({ "data": data_config(&args.data), "p": ps, "fit": fit, "sweep": config });
    Ok((code, manifest, Some(seed)))
}

fn load_scenario(name: &str) -> Result<Scenario, CliError> {
    if let Ok(s) = Scenario::preset(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{name}: {e}")));
    }
    Err(CliError::Usage(format!("unknown scenario '{name}' (presets: {})", sim::PRESETS.join(", "))))
}

fn cmd_simulate(args: &SimArgs, sink: &mut Sink) -> Result<(i32, serde_json::Value, Option<u64>), CliError> {
    let mut sc = load_scenario(&args.scenario)?;
    if let Some(r) = args.reps {
        if r == 0 {
            return Err(CliError::Usage("--reps must be positive".into()));
        }
        sc.replications = r;
    }
    if let Some(n) = args.studies {
        sc.studies = n;
    }
    if args.p.is_some() || args.p_grid.is_some() {
        sc.p_grid = p_values(args.p, &args.p_grid, Vec::new())?;
    }
    let (opt, seed) = solver_config(&args.solver)?;
    sc.seed = Seed(seed);
    let report = sim::run_scenario(&sc, &opt).map_err(|e| match e {
        Error::Config(m) => CliError::Usage(m),
        other => CliError::Lib(other),
    })?;
    let mut summary = Vec::new();
    sim::write_summary_csv(&report, &mut summary)?;
    sink.emit("summary.csv", &summary, true)?;
    let mut reps = Vec::new();
    sim::write_replications_csv(&report, &mut reps)?;
    sink.emit("replications.csv", &reps, false)?;
    for (p, r, m) in &report.failures {
        eprintln!("p={p} replication {r}: {m}");
    }
    let code = if report.rows.iter().any(|r| r.degraded > 0) { EXIT_DEGRADED } else { EXIT_OK };
    Ok((code, json!({ "scenario": sc, "opt": opt }), Some(seed)))
}

fn cmd_datasets(action: &DatasetAction, sink: &mut Sink) -> Result<(i32, serde_json::Value, Option<u64>), CliError> {
    match action {
        DatasetAction::List => {
            let mut text = String::new();
            for name in data::DATASET_NAMES {
                text.push_str(&format!("{name}\t{}\n", data::embedded(name)?.len()));
            }
            sink.emit("datasets.txt", text.as_bytes(), true)?;
            Ok((EXIT_OK, json!({ "action": "list" }), None))
        }
        DatasetAction::Export { name } => {
            let mut buf = Vec::new();
            data::export_embedded(name, &mut buf)?;
            sink.emit(&format!("{name}.csv"), &buf, true)?;
            Ok((EXIT_OK, json!({ "action": "export", "name": name }), None))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let start = Instant::now();
    let mut sink = Sink::new(cli.out.clone())?;
    let (name, result) = match &cli.command {
        Command::Fit(a) => ("fit", cmd_fit(a, &mut sink)),
        Command::CjBound(a) => ("cj-bound", cmd_cj(a, &mut sink)),
        Command::ExtBound(a) => ("ext-bound", cmd_ext(a, &mut sink)),
        Command::Sweep(a) => ("sweep", cmd_sweep(a, &mut sink)),
        Command::Simulate(a) => ("simulate", cmd_simulate(a, &mut sink)),
        Command::Datasets { action } => ("datasets", cmd_datasets(action, &mut sink)),
    };
    let (code, mut config, seed) = result?;
    config["threads"] = json!(cli.threads);
    sink.finish(name, config, seed, start)?;
    Ok(code)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Failure(e.to_string())),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
