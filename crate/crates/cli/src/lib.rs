//! Driver behind the `trafficdig` binary.
//!
//! Every flag can also be set in a TOML config file (`--config`). Keys use
//! the flag names with underscores; flags given on the command line win.
//!
//! ```toml
//! input = "flows.csv"
//! output_dir = "out"
//! estimator = "ctw"        # or "empirical"
//! strategy = "equal-frequency"
//! levels = 2
//! alpha = 0.4
//! depth = 1
//! tau_max = 12
//! exclude = ["s7"]
//! seed = 1
//! scenario = "s1"          # s1 s2 s3 c1 c2 linear
//! samples = 100000
//! g_floor = 0.01
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use trafficdig::bounds::detection_bounds;
use trafficdig::lag::{coefficient_of_determination, default_tau_max, estimate_depth, pairwise_lags};
use trafficdig::series::{ingest_csv, write_csv, IngestOptions};
use trafficdig::sim_ctm::{run_scenario, CtmConfig, CtmScenario};
use trafficdig::sim_poisson::{generate_chain, generate_linear_model, generate_merge, LinearPoissonCoeffs, MergeConfig, PoissonChainConfig};
use trafficdig::{estimate_dig, CausalGraphResult, DigConfig, Estimator, FlowSeries, QuantizerStrategy};

pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] trafficdig::Error),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("malformed result JSON {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Generate a synthetic scenario and write it as CSV.
    Simulate,
    /// Cross-covariance and coefficient of determination for every pair.
    Lags,
    /// Estimate the directed information graph; writes JSON and DOT.
    Estimate,
    /// Print detection bounds for a thresholded test.
    Bounds,
    /// Render a stored JSON result as DOT.
    Export,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    S1,
    S2,
    S3,
    C1,
    C2,
    Linear,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
            Scenario::C1 => "c1",
            Scenario::C2 => "c2",
            Scenario::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorArg {
    Empirical,
    Ctw,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Empirical => Estimator::Empirical,
            EstimatorArg::Ctw => Estimator::ContextTree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    EqualWidth,
    EqualFrequency,
}

impl From<StrategyArg> for QuantizerStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::EqualWidth => QuantizerStrategy::EqualWidth,
            StrategyArg::EqualFrequency => QuantizerStrategy::EqualFrequency,
        }
    }
}

/// Settings shared by the command line and the config file. Unset fields
/// fall back to the config file, then to the defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Input file: flow CSV, or a result JSON for `export`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for written artifacts.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Quantizer fitting rule.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Quantization levels r (also the alphabet size for `bounds`).
    #[arg(long)]
    pub levels: Option<u32>,
    /// Edge threshold on the normalized graph.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Memory depth; skips lag analysis.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Lag horizon for depth estimation.
    #[arg(long)]
    pub tau_max: Option<usize>,
    /// Node ids to drop before estimation.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub scenario: Option<Scenario>,
    /// Samples to simulate.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Context-tree burn-in steps.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Normalized information below this counts as zero.
    #[arg(long)]
    pub g_floor: Option<f64>,
    /// `bounds`: number of sensors M.
    #[arg(long)]
    pub sensors: Option<u32>,
    /// `bounds`: Markov order k.
    #[arg(long)]
    pub order: Option<u32>,
    /// `bounds`: number of true edges W1.
    #[arg(long)]
    pub w1: Option<u64>,
    /// `bounds`: threshold I_th.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl Options {
    /// Fills every unset field from `fallback`.
    pub fn or(self, fallback: Options) -> Options {
        Options {
            input: self.input.or(fallback.input),
            output_dir: self.output_dir.or(fallback.output_dir),
            estimator: self.estimator.or(fallback.estimator),
            strategy: self.strategy.or(fallback.strategy),
            levels: self.levels.or(fallback.levels),
            alpha: self.alpha.or(fallback.alpha),
            depth: self.depth.or(fallback.depth),
            tau_max: self.tau_max.or(fallback.tau_max),
            exclude: self.exclude.or(fallback.exclude),
            seed: self.seed.or(fallback.seed),
            scenario: self.scenario.or(fallback.scenario),
            samples: self.samples.or(fallback.samples),
            burn_in: self.burn_in.or(fallback.burn_in),
            g_floor: self.g_floor.or(fallback.g_floor),
            sensors: self.sensors.or(fallback.sensors),
            order: self.order.or(fallback.order),
            w1: self.w1.or(fallback.w1),
            threshold: self.threshold.or(fallback.threshold),
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Options> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_owned(), source })?;
        toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_owned(), message: e.message().trim().to_owned() })
    }

    pub fn dig_config(&self) -> DigConfig {
        let base = DigConfig::default();
        DigConfig {
            levels: self.levels.unwrap_or(base.levels),
            alpha: self.alpha.unwrap_or(base.alpha),
            estimator: self.estimator.map_or(base.estimator, Estimator::from),
            depth_override: self.depth,
            tau_max: self.tau_max,
            excluded_nodes: self.excluded(),
            strategy: self.strategy.map_or(base.strategy, QuantizerStrategy::from),
            burn_in: self.burn_in,
            g_floor: self.g_floor.unwrap_or(base.g_floor),
            ..base
        }
    }

    fn excluded(&self) -> Vec<String> {
        self.exclude
            .iter()
            .flatten()
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect()
    }

    fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn require_input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| CliError::Usage("--input is required".into()))
    }
}

/// A resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub options: Options,
}

/// Runs one command. Progress lines and printed results go to `out`.
pub fn run(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let o = &config.options;
    match config.command {
        Command::Simulate => simulate(o, out),
        Command::Lags => lags(o, out),
        Command::Estimate => estimate(o, out),
        Command::Bounds => bounds(o, out),
        Command::Export => export(o, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|source| CliError::Write { path: "<stdout>".into(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_owned(), source })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Write { path: path.to_owned(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|source| CliError::Write { path: path.to_owned(), source })
}

pub fn read_series(path: &Path) -> Result<Vec<FlowSeries>> {
    let f = File::open(path).map_err(|source| CliError::Read { path: path.to_owned(), source })?;
    Ok(ingest_csv(BufReader::new(f), &IngestOptions::default())?)
}

pub fn simulate_series(scenario: Scenario, samples: usize, seed: u64) -> Result<Vec<FlowSeries>> {
    let series = match scenario {
        Scenario::S1 | Scenario::S2 => generate_chain(&PoissonChainConfig {
            n: samples,
            instantaneous: scenario == Scenario::S2,
            seed,
            ..PoissonChainConfig::default()
        })?,
        Scenario::S3 => generate_merge(&MergeConfig { n: samples, seed, ..MergeConfig::default() })?,
        Scenario::Linear => generate_linear_model(&LinearPoissonCoeffs { n: samples, seed, ..LinearPoissonCoeffs::default() })?.series,
        Scenario::C1 => run_scenario(CtmScenario::C1, samples, &CtmConfig { seed, ..CtmConfig::default() })?,
        Scenario::C2 => run_scenario(CtmScenario::C2, samples, &CtmConfig { seed, ..CtmConfig::default() })?,
    };
    Ok(series)
}

fn simulate(o: &Options, out: &mut dyn Write) -> Result<()> {
    let scenario = o.scenario.ok_or_else(|| CliError::Usage("--scenario is required for simulate".into()))?;
    let series = simulate_series(scenario, o.samples.unwrap_or(DEFAULT_SAMPLES), o.seed.unwrap_or(0))?;
    let path = o.output_dir().join(format!("{}.csv", scenario.name()));
    let mut f = create(&path)?;
    write_csv(&mut f, &series, 0)?;
    f.flush().map_err(|source| CliError::Write { path: path.clone(), source })?;
    say(out, format_args!("wrote {} ({} series x {} samples)", path.display(), series.len(), series[0].len()))
}

fn lags(o: &Options, out: &mut dyn Write) -> Result<()> {
    let series = read_series(o.require_input()?)?;
    let tau_max = o.tau_max.unwrap_or_else(|| default_tau_max(series[0].len()));
    let profiles = pairwise_lags(&series, tau_max)?;
    let by_id = |id: &str| series.iter().find(|s| s.node_id == id).expect("profile ids come from the input");
    let mut text = String::from("from,to,tau,cov,cod\n");
    for p in &profiles {
        let (x, y) = (by_id(&p.pair.0), by_id(&p.pair.1));
        for (tau, cov) in p.values.iter().enumerate() {
            let cod = coefficient_of_determination(x, y, tau).map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(text, "{},{},{tau},{cov},{cod}", csv_field(&p.pair.0), csv_field(&p.pair.1));
        }
    }
    let path = o.output_dir().join("lags.csv");
    write_text(&path, &text)?;
    let depth = if series.len() > 1 { estimate_depth(&series, tau_max)? } else { 0 };
    say(out, format_args!("wrote {}; estimated depth {depth}", path.display()))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn estimate(o: &Options, out: &mut dyn Write) -> Result<()> {
    let series = read_series(o.require_input()?)?;
    let result = estimate_dig(&series, &o.dig_config())?;
    let dir = o.output_dir();
    let json_path = dir.join("result.json");
    let dot_path = dir.join("graph.dot");
    write_text(&json_path, &result_to_json(&result))?;
    write_text(&dot_path, &export_dot(&result))?;
    for d in &result.diagnostics {
        say(out, format_args!("note: {d}"))?;
    }
    say(
        out,
        format_args!(
            "depth {}, {} edges; wrote {} and {}",
            result.depth,
            result.edges.len(),
            json_path.display(),
            dot_path.display()
        ),
    )
}

fn bounds(o: &Options, out: &mut dyn Write) -> Result<()> {
    let need = |name: &str| CliError::Usage(format!("--{name} is required for bounds"));
    let sensors = o.sensors.ok_or_else(|| need("sensors"))?;
    let w1 = o.w1.ok_or_else(|| need("w1"))?;
    let threshold = o.threshold.ok_or_else(|| need("threshold"))?;
    let b = detection_bounds(sensors, o.order.unwrap_or(1), o.levels.unwrap_or(2), w1, threshold)?;
    let text = serde_json::to_string_pretty(&b).expect("bounds serialize");
    say(out, text)
}

fn export(o: &Options, out: &mut dyn Write) -> Result<()> {
    let path = o.require_input()?;
    let result = read_result(path)?;
    let dot = export_dot(&result);
    match &o.output_dir {
        Some(dir) => {
            let target = dir.join("graph.dot");
            write_text(&target, &dot)?;
            say(out, format_args!("wrote {}", target.display()))
        }
        None => out.write_all(dot.as_bytes()).map_err(|source| CliError::Write { path: "<stdout>".into(), source }),
    }
}

pub fn read_result(path: &Path) -> Result<CausalGraphResult> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_owned(), source })
}

pub fn result_to_json(result: &CausalGraphResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("result serializes");
    s.push('\n');
    s
}

fn dot_id(id: &str) -> String {
    let mut chars = id.chars();
    let plain = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    let numeral = !id.is_empty() && id.chars().all(|c| c.is_ascii_digit());
    if plain || numeral {
        id.to_owned()
    } else {
        format!("\"{}\"", id.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Renders the thresholded graph as DOT: nodes and edges in lexicographic
/// order, each edge labeled with its normalized weight.
pub fn export_dot(result: &CausalGraphResult) -> String {
    let mut nodes: Vec<&str> = result.node_ids.iter().map(String::as_str).collect();
    nodes.sort_unstable();
    let mut edges: Vec<_> = result.edges.iter().collect();
    edges.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
    let mut s = String::from("digraph DIG {\n");
    for n in nodes {
        let _ = writeln!(s, "  {}", dot_id(n));
    }
    for e in edges {
        let _ = writeln!(s, "  {} -> {} [label=\"{:.2}\"]", dot_id(&e.from), dot_id(&e.to), e.weight);
    }
    s.push_str("}\n");
    s
}
