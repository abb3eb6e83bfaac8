//! Batch experiment runner.
//!
//! `run` samples one objective per seed, runs the engine on it and writes
//!
//! ```text
//! <out>/summary.json
//! <out>/seed-<n>/trace.csv        round,tau,S_size,P_size,omega_bar,action,node_h,node_i
//! <out>/seed-<n>/hypervolume.csv  evaluations,hypervolume
//! ```
//!
//! The summary embeds the fully resolved configuration, so it can be passed
//! back to `run --config summary.json` to repeat the experiment.

use crate::bench::{self, Grid, SeedRun};
use crate::engine::{EngineConfig, DEFAULT_BUDGET};
use crate::kernels::{KernelFamily, MultiOutputKernel, ScalarKernel};
use crate::partition::{DesignSpace, Metric, PartitionParams};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const SCHEMA_VERSION: u32 = 1;

/// Taus at which the schedule audit prints `β_τ`.
pub const AUDIT_TAUS: [usize; 4] = [0, 1, 10, 100];

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub message: String,
    pub exit_code: u8,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 2,
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub space: SpaceConfig,
    pub kernel: KernelConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub run: RunConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// Defaults to the length of `lower`, or 1.
    pub dimension: Option<usize>,
    /// Defaults to zeros.
    pub lower: Option<Vec<f64>>,
    /// Defaults to ones.
    pub upper: Option<Vec<f64>>,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    /// Defaults to the dimension.
    pub metric_dimension: Option<f64>,
}

fn default_metric() -> Metric {
    Metric::Linf
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Independent,
    LinearMixing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_structure")]
    pub structure: Structure,
    /// One base kernel per objective; with mixing, one per latent function.
    pub objectives: Vec<KernelSpec>,
    /// Square row-major mixing matrix with unit-norm rows.
    pub mixing: Option<Vec<Vec<f64>>>,
}

fn default_structure() -> Structure {
    Structure::Independent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub epsilon: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
}

fn default_delta() -> f64 {
    0.05
}

fn default_noise() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub h_max_override: Option<u32>,
    /// Depth used in the union bound of `β_τ`; defaults to the computed `h_max`.
    pub beta_h_max: Option<u32>,
    pub c1: Option<f64>,
    pub q: Option<f64>,
    pub branching: Option<usize>,
    pub rho: Option<f64>,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    /// Published depth to print next to the computed one; reporting only.
    pub reference_h_max: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Option<Vec<u64>>,
    pub budget: Option<usize>,
    /// Grid points per dimension for the sampled objective.
    pub grid_size: Option<Vec<usize>>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Where a validation error points in the source text.
#[derive(Debug, Clone, Copy)]
struct Key<'a> {
    section: &'a str,
    name: &'a str,
}

const fn key<'a>(section: &'a str, name: &'a str) -> Key<'a> {
    Key { section, name }
}

/// A parsed configuration with its source, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    path: PathBuf,
    source: String,
    json: bool,
}

impl LoadedConfig {
    pub fn parse(path: impl Into<PathBuf>, source: String) -> Result<Self, CliError> {
        let path = path.into();
        let json = path.extension().is_some_and(|e| e == "json");
        let config = if json {
            parse_json(&source).map_err(|e| {
                CliError::usage(format!("{}:{}:{}: {}", path.display(), e.line(), e.column(), e))
            })?
        } else {
            toml::from_str::<ExperimentConfig>(&source).map_err(|e| {
                let line = e.span().map(|s| line_of(&source, s.start)).unwrap_or(1);
                CliError::usage(format!("{}:{}: {}", path.display(), line, e.message()))
            })?
        };
        Ok(Self {
            config,
            path,
            source,
            json,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let source = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: cannot read config: {e}", path.display())))?;
        Self::parse(path, source)
    }

    fn error(&self, at: Key<'_>, message: impl fmt::Display) -> CliError {
        let line = if self.json {
            locate_json(&self.source, at)
        } else {
            locate_toml(&self.source, at)
        };
        match line {
            Some(l) => CliError::usage(format!("{}:{}: {}.{}: {}", self.path.display(), l, at.section, at.name, message)),
            None => CliError::usage(format!("{}: {}.{}: {}", self.path.display(), at.section, at.name, message)),
        }
    }

    /// Fills every default and checks ranges.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let c = &self.config;
        if c.schema_version != SCHEMA_VERSION {
            return Err(self.error(key("", "schema_version"), format!("unsupported version {}", c.schema_version)));
        }

        let dim = c
            .space
            .dimension
            .or(c.space.lower.as_ref().map(Vec::len))
            .or(c.space.upper.as_ref().map(Vec::len))
            .unwrap_or(1);
        if dim == 0 {
            return Err(self.error(key("space", "dimension"), "must be at least 1"));
        }
        let lower = c.space.lower.clone().unwrap_or_else(|| vec![0.0; dim]);
        let upper = c.space.upper.clone().unwrap_or_else(|| vec![1.0; dim]);
        if lower.len() != dim {
            return Err(self.error(key("space", "lower"), format!("expected {dim} entries")));
        }
        if upper.len() != dim {
            return Err(self.error(key("space", "upper"), format!("expected {dim} entries")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(self.error(key("space", "upper"), "every interval must satisfy lower < upper"));
        }
        let metric_dimension = c.space.metric_dimension.unwrap_or(dim as f64);
        if !(metric_dimension > 0.0 && metric_dimension.is_finite()) {
            return Err(self.error(key("space", "metric_dimension"), "must be positive"));
        }

        if c.kernel.objectives.is_empty() {
            return Err(self.error(key("kernel", "objectives"), "at least one kernel is required"));
        }
        for k in &c.kernel.objectives {
            if !(k.variance > 0.0 && k.variance.is_finite()) {
                return Err(self.error(key("kernel.objectives", "variance"), "must be positive"));
            }
            if !(k.lengthscale > 0.0 && k.lengthscale.is_finite()) {
                return Err(self.error(key("kernel.objectives", "lengthscale"), "must be positive"));
            }
        }
        let outputs = match (c.kernel.structure, &c.kernel.mixing) {
            (Structure::Independent, None) => c.kernel.objectives.len(),
            (Structure::Independent, Some(_)) => {
                return Err(self.error(key("kernel", "mixing"), "only allowed with structure = \"linear-mixing\""))
            }
            (Structure::LinearMixing, None) => {
                return Err(self.error(key("kernel", "mixing"), "required for linear mixing"))
            }
            (Structure::LinearMixing, Some(rows)) => {
                let p = c.kernel.objectives.len();
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(self.error(key("kernel", "mixing"), format!("must be a {p} x {p} matrix")));
                }
                if rows.iter().any(|r| (r.iter().map(|a| a * a).sum::<f64>().sqrt() - 1.0).abs() > 1e-9) {
                    return Err(self.error(key("kernel", "mixing"), "rows must have unit Euclidean norm"));
                }
                rows.len()
            }
        };

        let a = &c.algorithm;
        if a.epsilon.len() != outputs {
            return Err(self.error(
                key("algorithm", "epsilon"),
                format!("{} entries for {outputs} objectives", a.epsilon.len()),
            ));
        }
        if !a.epsilon.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(self.error(key("algorithm", "epsilon"), "entries must be positive"));
        }
        if !(a.delta > 0.0 && a.delta < 1.0) {
            return Err(self.error(key("algorithm", "delta"), format!("{} is outside (0, 1)", a.delta)));
        }
        if !(a.noise_variance > 0.0 && a.noise_variance.is_finite()) {
            return Err(self.error(key("algorithm", "noise_variance"), "must be positive"));
        }

        let s = &c.schedule;
        let defaults = PartitionParams::bisection(dim, c.space.metric);
        let branching = s.branching.unwrap_or(defaults.branching);
        let rho = s.rho.unwrap_or(defaults.rho);
        let v1 = s.v1.unwrap_or(defaults.v1);
        let v2 = s.v2.unwrap_or(defaults.v2);
        if branching < 2 {
            return Err(self.error(key("schedule", "branching"), "must be at least 2"));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(self.error(key("schedule", "rho"), "must lie in (0, 1)"));
        }
        if !(v1 > 0.0 && v1.is_finite()) {
            return Err(self.error(key("schedule", "v1"), "must be positive"));
        }
        if !(v2 > 0.0 && v2 <= v1) {
            return Err(self.error(key("schedule", "v2"), "must lie in (0, v1]"));
        }
        let c1 = s.c1.unwrap_or(1.0);
        let q = s.q.unwrap_or(1.0);
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(self.error(key("schedule", "c1"), "must be positive"));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(self.error(key("schedule", "q"), "must be positive"));
        }

        let r = &c.run;
        let seeds = r.seeds.clone().unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return Err(self.error(key("run", "seeds"), "at least one seed is required"));
        }
        let budget = r.budget.unwrap_or(DEFAULT_BUDGET);
        if budget == 0 {
            return Err(self.error(key("run", "budget"), "must be positive"));
        }
        let grid_size = r.grid_size.clone().unwrap_or_else(|| Grid::default_counts(dim));
        if grid_size.len() != dim || grid_size.iter().any(|n| *n < 2) {
            return Err(self.error(key("run", "grid_size"), format!("needs {dim} entries, each at least 2")));
        }
        let workers = r.workers.unwrap_or(1);
        if workers == 0 {
            return Err(self.error(key("run", "workers"), "must be at least 1"));
        }

        let resolved = ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            space: SpaceConfig {
                dimension: Some(dim),
                lower: Some(lower),
                upper: Some(upper),
                metric: c.space.metric,
                metric_dimension: Some(metric_dimension),
            },
            kernel: c.kernel.clone(),
            algorithm: a.clone(),
            schedule: ScheduleConfig {
                h_max_override: s.h_max_override,
                beta_h_max: s.beta_h_max,
                c1: Some(c1),
                q: Some(q),
                branching: Some(branching),
                rho: Some(rho),
                v1: Some(v1),
                v2: Some(v2),
                reference_h_max: s.reference_h_max,
            },
            run: RunConfig {
                seeds: Some(seeds),
                budget: Some(budget),
                grid_size: Some(grid_size),
                output_dir: Some(r.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))),
                workers: Some(workers),
            },
        };
        // Constructors repeat the checks above; anything left is a cross-field problem.
        let engine = resolved
            .engine_config()
            .map_err(|e| CliError::usage(format!("{}: {e}", self.path.display())))?;
        engine
            .schedules()
            .map_err(|e| self.error(key("algorithm", "epsilon"), e))?;
        Ok(resolved)
    }
}

fn parse_json(source: &str) -> Result<ExperimentConfig, serde_json::Error> {
    // A run summary carries its configuration under "config".
    let value: serde_json::Value = serde_json::from_str(source)?;
    match value.get("config") {
        Some(inner) if value.get("schema_version").is_some() && value.get("seeds").is_some() => {
            serde_json::from_value(inner.clone())
        }
        _ => serde_json::from_value(value),
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line of `name = ...` inside `[section]` (or `[[section]]`) of a TOML file.
fn locate_toml(source: &str, at: Key<'_>) -> Option<usize> {
    let mut current = String::new();
    let mut fallback = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == at.section && fallback.is_none() {
                fallback = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        let dotted = format!("{}.{}", at.section.rsplit('.').next().unwrap_or(""), at.name);
        if (current == at.section && k == at.name) || (current.is_empty() && !at.section.is_empty() && k == dotted) {
            return Some(i + 1);
        }
        if at.section.is_empty() && current.is_empty() && k == at.name {
            return Some(i + 1);
        }
    }
    fallback
}

/// Line of the first `"name"` key in a JSON file.
fn locate_json(source: &str, at: Key<'_>) -> Option<usize> {
    let needle = format!("\"{}\"", at.name);
    source
        .lines()
        .position(|l| l.trim_start().starts_with(&needle))
        .map(|i| i + 1)
}

impl ExperimentConfig {
    /// Builds the engine configuration; expects a resolved config.
    pub fn engine_config(&self) -> Result<EngineConfig, String> {
        let s = &self.space;
        let dim = s.dimension.ok_or("space.dimension unresolved")?;
        let lower = s.lower.clone().unwrap_or_else(|| vec![0.0; dim]);
        let upper = s.upper.clone().unwrap_or_else(|| vec![1.0; dim]);
        let mut space = DesignSpace::new(lower, upper, s.metric).map_err(|e| e.to_string())?;
        if let Some(d1) = s.metric_dimension {
            space = space.with_metric_dimension(d1).map_err(|e| e.to_string())?;
        }
        let defaults = PartitionParams::bisection(dim, s.metric);
        let sc = &self.schedule;
        let partition = PartitionParams::new(
            sc.branching.unwrap_or(defaults.branching),
            sc.rho.unwrap_or(defaults.rho),
            sc.v1.unwrap_or(defaults.v1),
            sc.v2.unwrap_or(defaults.v2),
        )
        .map_err(|e| e.to_string())?;
        let bases = self
            .kernel
            .objectives
            .iter()
            .map(|k| ScalarKernel::new(k.family, k.variance, k.lengthscale))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let kernel = match &self.kernel.mixing {
            None => MultiOutputKernel::independent(bases),
            Some(rows) => {
                let cols = bases.len();
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                MultiOutputKernel::linear_mixing(bases, DMatrix::from_row_slice(rows.len(), cols, &flat))
            }
        }
        .map_err(|e| e.to_string())?;
        Ok(EngineConfig {
            space,
            partition,
            kernel,
            noise_var: self.algorithm.noise_variance,
            epsilon: self.algorithm.epsilon.clone(),
            delta: self.algorithm.delta,
            c1: sc.c1.unwrap_or(1.0),
            q: sc.q.unwrap_or(1.0),
            h_max_override: sc.h_max_override,
            beta_h_max: sc.beta_h_max,
            budget: self.run.budget.unwrap_or(DEFAULT_BUDGET),
        })
    }

    pub fn grid(&self, engine: &EngineConfig) -> Result<Grid, String> {
        let counts = self
            .run
            .grid_size
            .clone()
            .unwrap_or_else(|| Grid::default_counts(engine.space.dimension()));
        Grid::new(&engine.space, counts).map_err(|e| e.to_string())
    }
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Parser)]
#[command(name = "epal", version, about = "Pareto active learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run seeded experiments and write summary, traces and curves.
    Run(RunArgs),
    /// Score a predicted front against a true front.
    Metrics(MetricsArgs),
    /// Print the confidence and discretization schedules of a config.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated seeds or a half-open range `a..b`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// CSV with one predicted objective vector per row.
    #[arg(long)]
    pub predicted: PathBuf,
    /// CSV with one true Pareto-front vector per row.
    #[arg(long)]
    pub truth: PathBuf,
    /// One value, or one per objective.
    #[arg(long, value_delimiter = ',', required = true)]
    pub epsilon: Vec<f64>,
    /// Hypervolume reference point; defaults to below both sets.
    #[arg(long, value_delimiter = ',')]
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Runs a parsed command line and maps errors to exit codes.
pub fn execute(cli: Cli) -> ExitCode {
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args).map(|_| ()),
        Command::Metrics(args) => cmd_metrics(&args).map(|report| emit(&report)),
        Command::Schedule(args) => cmd_schedule(&args).map(|table| emit(&table)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code)
        }
    }
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(item: &impl fmt::Display) {
    use std::io::Write;
    let _ = write!(std::io::stdout().lock(), "{item}");
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::usage(format!("--seeds: cannot parse {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Loads and resolves a config, applying command-line overrides.
pub fn load_run_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut loaded = LoadedConfig::load(&args.config)?;
    if let Some(s) = &args.seeds {
        loaded.config.run.seeds = Some(parse_seeds(s)?);
    }
    if let Some(out) = &args.out {
        loaded.config.run.output_dir = Some(out.clone());
    }
    if let Some(w) = args.workers {
        loaded.config.run.workers = Some(w);
    }
    if let Some(b) = args.budget {
        loaded.config.run.budget = Some(b);
    }
    loaded.resolve()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub schedule: ScheduleSummary,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub h_max: u32,
    pub depth_cap: u32,
    pub reference_h_max: Option<u32>,
    pub beta_h_max: u32,
    /// Evaluation count guaranteeing termination; only without a depth override.
    pub dimension_sample_bound: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontPoint {
    pub design: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub termination: crate::engine::Termination,
    pub truncated: bool,
    pub rounds: u64,
    pub evaluations: usize,
    pub decided_cells: usize,
    pub max_depth: u32,
    pub degeneracies: usize,
    pub true_front_size: usize,
    pub containment: bench::Containment,
    pub metrics: Option<bench::MetricsReport>,
    pub predicted_front: Vec<FrontPoint>,
}

impl SeedSummary {
    fn from_run(run: &SeedRun) -> Self {
        Self {
            seed: run.seed,
            termination: run.result.termination,
            truncated: run.result.truncated(),
            rounds: run.result.rounds,
            evaluations: run.result.evaluations.len(),
            decided_cells: run.result.decided.len(),
            max_depth: run.result.max_depth,
            degeneracies: run.result.degeneracies,
            true_front_size: run.true_front_size,
            containment: run.containment,
            metrics: run.metrics.clone(),
            predicted_front: run
                .predicted_designs
                .iter()
                .zip(&run.predicted_front)
                .map(|(d, v)| FrontPoint {
                    design: d.clone(),
                    value: v.clone(),
                })
                .collect(),
        }
    }
}

/// Runs every seed of a resolved config and writes all outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary, CliError> {
    let engine = config.engine_config().map_err(CliError::usage)?;
    let schedules = engine.schedules().map_err(|e| CliError::usage(e.to_string()))?;
    let grid = config.grid(&engine).map_err(CliError::usage)?;
    let seeds = config.run.seeds.clone().unwrap_or_else(|| vec![0]);
    let out = config.run.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.workers.unwrap_or(1))
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let runs: Vec<SeedRun> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                log::info!("seed {seed}: starting");
                let run = bench::run_seed(&engine, &grid, seed);
                if let Ok(r) = &run {
                    log::info!(
                        "seed {seed}: {} evaluations, {} rounds",
                        r.result.evaluations.len(),
                        r.result.rounds
                    );
                }
                run
            })
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(|e| CliError::runtime(e.to_string()))?;

    let io = |e: std::io::Error| CliError::runtime(format!("{}: {e}", out.display()));
    for run in &runs {
        let dir = out.join(format!("seed-{}", run.seed));
        fs::create_dir_all(&dir).map_err(io)?;
        fs::write(dir.join("trace.csv"), trace_csv(&run.trace)).map_err(io)?;
        fs::write(dir.join("hypervolume.csv"), curve_csv(&run.hypervolume_curve)).map_err(io)?;
    }

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        schedule: ScheduleSummary {
            h_max: schedules.h_max(),
            depth_cap: schedules.depth_cap(),
            reference_h_max: config.schedule.reference_h_max,
            beta_h_max: schedules.beta_h_max(),
            dimension_sample_bound: match config.schedule.h_max_override {
                None => schedules.dimension_sample_bound(engine.noise_var),
                Some(_) => None,
            },
        },
        seeds: runs.iter().map(SeedSummary::from_run).collect(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::runtime(e.to_string()))?;
    fs::create_dir_all(&out).map_err(io)?;
    fs::write(out.join("summary.json"), text + "\n").map_err(io)?;
    Ok(summary)
}

pub fn cmd_run(args: &RunArgs) -> Result<Summary, CliError> {
    let config = load_run_config(args)?;
    run_experiment(&config)
}

pub fn trace_csv(trace: &[crate::engine::RoundRecord]) -> String {
    let mut out = String::from("round,tau,S_size,P_size,omega_bar,action,node_h,node_i\n");
    for r in trace {
        let opt = |v: Option<String>| v.unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.round,
            r.tau,
            r.s_size,
            r.p_size,
            r.omega_bar,
            r.action.as_str(),
            opt(r.node_h.map(|h| h.to_string())),
            opt(r.node_i.map(|i| i.to_string())),
        ));
    }
    out
}

pub fn curve_csv(curve: &[bench::CurvePoint]) -> String {
    let mut out = String::from("evaluations,hypervolume\n");
    for p in curve {
        out.push_str(&format!("{},{}\n", p.evaluations, p.hypervolume));
    }
    out
}

// ---------------------------------------------------------------------------
// metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsOutput {
    pub hypervolume: f64,
    pub eps_accuracy: f64,
    pub eps_coverage: f64,
    pub avg_mse: f64,
    pub reference_point: Vec<f64>,
}

impl fmt::Display for MetricsOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = serde_json::to_string_pretty(self).map_err(|_| fmt::Error)?;
        writeln!(f, "{text}")
    }
}

/// Reads a headerless (or single-header) CSV of points with equal column counts.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::usage(format!("{}:{}: {e}", path.display(), i + 1))),
        };
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CliError::usage(format!("{}:{}: non-finite value", path.display(), i + 1)));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::usage(format!(
                    "{}:{}: expected {w} columns, found {}",
                    path.display(),
                    i + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(CliError::usage(format!("{}: no points", path.display())));
    }
    Ok(points)
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricsOutput, CliError> {
    let predicted = read_points(&args.predicted)?;
    let truth = read_points(&args.truth)?;
    let m = truth[0].len();
    if predicted[0].len() != m {
        return Err(CliError::usage(format!(
            "predicted points have {} columns, true points {m}",
            predicted[0].len()
        )));
    }
    let eps = match args.epsilon.len() {
        1 => vec![args.epsilon[0]; m],
        n if n == m => args.epsilon.clone(),
        n => return Err(CliError::usage(format!("--epsilon has {n} values for {m} objectives"))),
    };
    if !eps.iter().all(|e| *e >= 0.0 && e.is_finite()) {
        return Err(CliError::usage("--epsilon values must be nonnegative"));
    }
    if let Some(r) = &args.reference {
        if r.len() != m {
            return Err(CliError::usage(format!("--reference has {} values for {m} objectives", r.len())));
        }
    }
    let report = bench::score(&predicted, &truth, &eps, args.reference.clone())
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(MetricsOutput {
        hypervolume: report.hypervolume,
        eps_accuracy: report.eps_accuracy,
        eps_coverage: report.eps_coverage,
        avg_mse: report.avg_mse,
        reference_point: report.reference_point,
    })
}

// ---------------------------------------------------------------------------
// schedule audit

#[derive(Debug, Clone)]
pub struct ScheduleReport {
    pub table: crate::engine::ScheduleTable,
    pub reference_h_max: Option<u32>,
}

impl fmt::Display for ScheduleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.table;
        match self.reference_h_max {
            Some(r) => writeln!(f, "h_max computed={} reference={} delta={}", t.h_max, r, t.h_max as i64 - r as i64)?,
            None => writeln!(f, "h_max computed={}", t.h_max)?,
        }
        if let Some(o) = t.h_max_override {
            writeln!(f, "h_max_override {o}")?;
        }
        writeln!(f, "beta_h_max {}", t.beta_h_max)?;
        writeln!(f, "eta1 {:.12e}", t.eta1)?;
        writeln!(f, "eta2 {:.12e}", t.eta2)?;
        writeln!(f, "C2 {:.12e}", t.c2)?;
        writeln!(f, "C3 {:.12e}", t.c3)?;
        writeln!(f, "C_K {:.12e} alpha {}", t.c_k, t.alpha)?;
        match t.dimension_sample_bound {
            Some(n) => writeln!(f, "sample_bound {n}")?,
            None => writeln!(f, "sample_bound none")?,
        }
        writeln!(f)?;
        writeln!(f, "{:>6} {:>22}", "tau", "beta")?;
        for (tau, beta) in &t.beta {
            writeln!(f, "{tau:>6} {beta:>22.12}")?;
        }
        writeln!(f)?;
        writeln!(f, "{:>4} {:>22} {:>22} {:>16}", "h", "V_h", "V_h_effective", "q_h(tau=0)")?;
        for row in &t.v_h {
            writeln!(
                f,
                "{:>4} {:>22.12e} {:>22.12e} {:>16.6e}",
                row.h, row.v_h, row.v_h_effective, row.evaluation_cap
            )?;
        }
        Ok(())
    }
}

pub fn cmd_schedule(args: &ScheduleArgs) -> Result<ScheduleReport, CliError> {
    let loaded = LoadedConfig::load(&args.config)?;
    let config = loaded.resolve()?;
    let engine = config.engine_config().map_err(CliError::usage)?;
    let schedules = engine.schedules().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(ScheduleReport {
        table: schedules.table(&AUDIT_TAUS, engine.noise_var),
        reference_h_max: config.schedule.reference_h_max,
    })
}
