//! Directed information graph estimation over a sensor network.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctw::{ct_estimate_raw, CtOptions};
use crate::empirical::count_blocks_raw;
use crate::error::{Error, Result};
use crate::lag::{default_tau_max, estimate_depth};
use crate::series::{check_equal_lengths, combine_series, fit_quantizer, quantize, FlowSeries, QuantizedSeries, QuantizerStrategy};

pub use crate::bounds::{detection_bounds, regularized_gamma_p, DetectionBounds};

/// Default cap on the hyper-node alphabet size `r^(M-2)`.
pub const DEFAULT_HYPER_NODE_CAP: u64 = 1 << 16;
/// Normalized directed information below this is treated as estimation noise.
pub const DEFAULT_G_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "empirical")]
    Empirical,
    #[default]
    #[serde(rename = "ctw", alias = "context_tree")]
    ContextTree,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Empirical => "empirical",
            Estimator::ContextTree => "ctw",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Estimator::Empirical),
            "ctw" | "context_tree" => Ok(Estimator::ContextTree),
            other => Err(Error::InvalidParameter(format!("unknown estimator '{other}' (expected empirical or ctw)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigConfig {
    pub levels: u32,
    pub alpha: f64,
    pub estimator: Estimator,
    /// Skip lag analysis and use this depth.
    pub depth_override: Option<usize>,
    /// Lag horizon for depth estimation; `None` means `min(n-1, 48)`.
    pub tau_max: Option<usize>,
    /// Nodes dropped from the network before anything else happens.
    pub excluded_nodes: Vec<String>,
    pub strategy: QuantizerStrategy,
    /// Context-tree burn-in; `None` means `max(d, 100)`.
    pub burn_in: Option<usize>,
    pub hyper_node_cap: u64,
    /// Entries of `G` below this are set to 0 before normalization, so a
    /// network without dependence yields no edges. 0 disables the floor.
    pub g_floor: f64,
}

impl Default for DigConfig {
    fn default() -> Self {
        Self {
            levels: 2,
            alpha: 0.4,
            estimator: Estimator::ContextTree,
            depth_override: None,
            tau_max: None,
            excluded_nodes: Vec::new(),
            strategy: QuantizerStrategy::EqualWidth,
            burn_in: None,
            hyper_node_cap: DEFAULT_HYPER_NODE_CAP,
            g_floor: DEFAULT_G_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

/// Output of [`estimate_dig`]. Matrices are indexed `[source][target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraphResult {
    pub node_ids: Vec<String>,
    pub depth: usize,
    pub estimator: Estimator,
    pub levels: u32,
    pub alpha: f64,
    #[serde(rename = "I")]
    pub directed_info: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub entropy: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "G_nor")]
    pub g_nor: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
    pub diagnostics: Vec<String>,
    /// Every `G` entry was zero; the adjacency is empty.
    pub no_information: bool,
}

impl CausalGraphResult {
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        threshold_graph(&self.g_nor, self.alpha)
    }

    /// Edges as index pairs, in row-major order.
    pub fn edge_indices(&self) -> Vec<(usize, usize)> {
        let adj = self.adjacency();
        let mut out = Vec::new();
        for (m, row) in adj.iter().enumerate() {
            for (l, &on) in row.iter().enumerate() {
                if on {
                    out.push((m, l));
                }
            }
        }
        out
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }
}

/// `I / H`, or 0 when `H = 0`. `I > H` beyond rounding is an estimator bug.
pub fn normalize_di(i_val: f64, h_val: f64) -> Result<f64> {
    if !(i_val >= 0.0) || !(h_val >= 0.0) {
        return Err(Error::Internal(format!("negative or NaN information values I={i_val}, H={h_val}")));
    }
    if h_val == 0.0 {
        return Ok(0.0);
    }
    if i_val > h_val * (1.0 + 1e-12) {
        return Err(Error::Internal(format!("directed information {i_val} exceeds entropy {h_val}")));
    }
    Ok((i_val / h_val).min(1.0))
}

/// `|A| / max |A|`. Returns `None` when every entry is zero.
pub fn normalize_matrix(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let max = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return None;
    }
    Some(a.iter().map(|row| row.iter().map(|v| v.abs() / max).collect()).collect())
}

/// Elementwise `G_nor >= alpha`, diagonal forced false.
pub fn threshold_graph(g_nor: &[Vec<f64>], alpha: f64) -> Vec<Vec<bool>> {
    g_nor
        .iter()
        .enumerate()
        .map(|(m, row)| row.iter().enumerate().map(|(l, &v)| m != l && v >= alpha).collect())
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct PairEstimate {
    directed_info: f64,
    entropy: f64,
}

fn estimate_pair(
    quantized: &[QuantizedSeries],
    m: usize,
    l: usize,
    depth: usize,
    config: &DigConfig,
) -> Result<PairEstimate> {
    let n = quantized[m].len();
    let rest: Vec<&QuantizedSeries> = quantized
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != m && k != l)
        .map(|(_, q)| q)
        .collect();
    let (z, az) = combine_series(&rest, n)?;
    let (x, y) = (&quantized[m], &quantized[l]);
    match config.estimator {
        Estimator::Empirical => {
            let table = count_blocks_raw(&x.symbols, x.alphabet(), &y.symbols, y.alphabet(), &z, az, depth)?;
            let e = table.estimate();
            Ok(PairEstimate { directed_info: e.directed_info, entropy: e.entropy })
        }
        Estimator::ContextTree => {
            let opts = CtOptions { depth, burn_in: config.burn_in, prior_weight: 0.5 };
            let e = ct_estimate_raw(&x.symbols, x.alphabet(), &y.symbols, y.alphabet(), &z, az, &opts)?;
            Ok(PairEstimate { directed_info: e.directed_info, entropy: e.entropy })
        }
    }
}

fn validate(series: &[FlowSeries], config: &DigConfig) -> Result<()> {
    if !(config.alpha > 0.0 && config.alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1], got {}", config.alpha)));
    }
    if !(config.g_floor >= 0.0 && config.g_floor < 1.0) {
        return Err(Error::InvalidParameter(format!("g_floor must be in [0, 1), got {}", config.g_floor)));
    }
    if config.levels < 2 {
        return Err(Error::InvalidParameter(format!("levels must be >= 2, got {}", config.levels)));
    }
    for id in &config.excluded_nodes {
        if !series.iter().any(|s| &s.node_id == id) {
            return Err(Error::UnknownNode(id.clone()));
        }
    }
    Ok(())
}

/// Pairwise causally conditioned directed information, normalized and
/// thresholded into a graph.
///
/// Each ordered pair `(m, l)` conditions on the hyper-node built from every
/// other non-excluded node. Pairs run in parallel on the rayon pool.
pub fn estimate_dig(series: &[FlowSeries], config: &DigConfig) -> Result<CausalGraphResult> {
    validate(series, config)?;
    let kept: Vec<FlowSeries> = series
        .iter()
        .filter(|s| !config.excluded_nodes.contains(&s.node_id))
        .cloned()
        .collect();
    if kept.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 nodes, have {}", kept.len())));
    }
    let n = check_equal_lengths(&kept)?;
    let big_m = kept.len();

    let hyper = (config.levels as u128).checked_pow(big_m as u32 - 2).unwrap_or(u128::MAX);
    if hyper > config.hyper_node_cap as u128 {
        return Err(Error::HyperNodeTooLarge { size: hyper, cap: config.hyper_node_cap as u128 });
    }

    let depth = match config.depth_override {
        Some(d) => d,
        None => estimate_depth(&kept, config.tau_max.unwrap_or_else(|| default_tau_max(n)))?,
    };

    let quantized: Vec<QuantizedSeries> = kept
        .iter()
        .map(|s| fit_quantizer(s, config.levels, config.strategy).map(|spec| quantize(s, &spec)))
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..big_m)
        .flat_map(|m| (0..big_m).filter(move |&l| l != m).map(move |l| (m, l)))
        .collect();
    let estimates: Vec<PairEstimate> = pairs
        .par_iter()
        .map(|&(m, l)| estimate_pair(&quantized, m, l, depth, config))
        .collect::<Result<_>>()?;

    let mut directed_info = vec![vec![0.0; big_m]; big_m];
    let mut entropy = vec![vec![0.0; big_m]; big_m];
    let mut g = vec![vec![0.0; big_m]; big_m];
    let mut diagnostics = Vec::new();
    for (&(m, l), e) in pairs.iter().zip(&estimates) {
        directed_info[m][l] = e.directed_info;
        entropy[m][l] = e.entropy;
        if e.entropy == 0.0 {
            diagnostics.push(format!(
                "'{}' is fully predictable given the rest of the network; G[{}][{}] set to 0",
                kept[l].node_id, kept[m].node_id, kept[l].node_id
            ));
        }
        g[m][l] = normalize_di(e.directed_info, e.entropy)?;
    }
    let mut floored = 0;
    for v in g.iter_mut().flatten() {
        if *v > 0.0 && *v < config.g_floor {
            *v = 0.0;
            floored += 1;
        }
    }
    if floored > 0 {
        diagnostics.push(format!("{floored} entries of G below the floor {} set to 0", config.g_floor));
    }

    let (g_nor, no_information) = match normalize_matrix(&g) {
        Some(gn) => (gn, false),
        None => {
            diagnostics.push("no directed information between any pair of nodes".into());
            (vec![vec![0.0; big_m]; big_m], true)
        }
    };
    let node_ids: Vec<String> = kept.iter().map(|s| s.node_id.clone()).collect();
    let adj = threshold_graph(&g_nor, config.alpha);
    let mut edges = Vec::new();
    for m in 0..big_m {
        for l in 0..big_m {
            if adj[m][l] {
                edges.push(Edge { from: node_ids[m].clone(), to: node_ids[l].clone(), weight: g_nor[m][l] });
            }
        }
    }

    Ok(CausalGraphResult {
        node_ids,
        depth,
        estimator: config.estimator,
        levels: config.levels,
        alpha: config.alpha,
        directed_info,
        entropy,
        g,
        g_nor,
        edges,
        diagnostics,
        no_information,
    })
}
