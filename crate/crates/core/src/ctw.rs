//! Context-tree weighting and the context-tree estimators of directed
//! information and causally conditioned entropy.
//!
//! # Model
//!
//! A [`ContextTreeModel`] is a depth-bounded m-ary context tree. Every node
//! holds Krichevsky-Trofimov counts, `P_KT(a) = (n_a + 1/2) / (n + m/2)`, and
//! the log-ratio `β = P_e / Π P_w(children)` of its own block probability to
//! the product of its children's weighted probabilities. With prior weight
//! `γ` the weighted block probability is `P_w = γ P_e + (1-γ) Π P_w(child)`,
//! and the sequential predictive probability along a context path obeys
//!
//! ```text
//! ratio_s(a) = w_s · P_KT,s(a) + (1 - w_s) · ratio_child(a),   w_s = γβ / (γβ + 1 - γ)
//! ```
//!
//! with `ratio = P_KT` at the deepest node of the path. Keeping `β` in log
//! space avoids the underflow of raw block probabilities on long sequences.
//!
//! Contexts shorter than the depth bound (the first few symbols of a stream)
//! stop at a shallower node, which then acts as a leaf for that step.
//!
//! # Estimators
//!
//! Two trees run side by side over one pass of the data: a joint tree over
//! `w = combine(x, y, z)` and a tree over `v = combine(y, z)`. At step `i`
//!
//! ```text
//! q(y') = P_joint(x_i, y', z_i | w^{i-1}) / Σ_y'' P_joint(x_i, y'', z_i | w^{i-1})   ≈ P(y_i | X^i, Y^{i-1}, Z^i)
//! p(y') = P_yz(y', z_i | v^{i-1}) / Σ_y'' P_yz(y'', z_i | v^{i-1})                  ≈ P(y_i | Y^{i-1}, Z^i)
//! ```
//!
//! and the step contributes `D(q‖p)` to the directed information and the
//! cross entropy `-Σ q log p` to the causally conditioned entropy. Because
//! the cross entropy equals `H(q) + D(q‖p)`, the directed information never
//! exceeds the entropy, step by step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{combine_series, QuantizedSeries};

const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
struct Node {
    /// Sparse `(symbol, count)` pairs.
    counts: Vec<(u32, u32)>,
    total: u32,
    log_beta: f64,
    /// Sparse `(symbol, node index)` pairs.
    children: Vec<(u32, u32)>,
}

impl Node {
    fn new() -> Self {
        Self { counts: Vec::new(), total: 0, log_beta: 0.0, children: Vec::new() }
    }

    fn count(&self, symbol: u32) -> u32 {
        self.counts.iter().find(|c| c.0 == symbol).map_or(0, |c| c.1)
    }

    fn kt(&self, symbol: u32, half_m: f64) -> f64 {
        (self.count(symbol) as f64 + 0.5) / (self.total as f64 + half_m)
    }

    fn child(&self, symbol: u32) -> u32 {
        self.children.iter().find(|c| c.0 == symbol).map_or(NO_NODE, |c| c.1)
    }

    fn increment(&mut self, symbol: u32) {
        match self.counts.iter_mut().find(|c| c.0 == symbol) {
            Some(c) => c.1 += 1,
            None => self.counts.push((symbol, 1)),
        }
        self.total += 1;
    }
}

/// Depth-bounded context-tree weighting model over `{0..alphabet-1}`.
///
/// Contexts are passed most-recent symbol first.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTreeModel {
    alphabet: u32,
    max_depth: usize,
    prior_weight: f64,
    log_prior_odds: f64,
    nodes: Vec<Node>,
    touches: u64,
}

impl ContextTreeModel {
    /// Model with the classic mixing weight 1/2.
    pub fn new(alphabet: u32, max_depth: usize) -> Result<Self> {
        Self::with_prior_weight(alphabet, max_depth, 0.5)
    }

    pub fn with_prior_weight(alphabet: u32, max_depth: usize, prior_weight: f64) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::InvalidParameter(format!("alphabet must be >= 2, got {alphabet}")));
        }
        if !(prior_weight > 0.0 && prior_weight < 1.0) {
            return Err(Error::InvalidParameter(format!("prior weight must be in (0,1), got {prior_weight}")));
        }
        Ok(Self {
            alphabet,
            max_depth,
            prior_weight,
            log_prior_odds: (prior_weight / (1.0 - prior_weight)).ln(),
            nodes: vec![Node::new()],
            touches: 0,
        })
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }

    /// Number of allocated tree nodes, root included.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Total node visits made by [`update`](Self::update) so far.
    pub fn node_touches(&self) -> u64 {
        self.touches
    }

    fn half_m(&self) -> f64 {
        self.alphabet as f64 / 2.0
    }

    fn kt_weight(&self, node: &Node) -> f64 {
        let logit = self.log_prior_odds + node.log_beta;
        1.0 / (1.0 + (-logit).exp())
    }

    fn check_context(&self, context: &[u32]) -> Result<()> {
        match context.iter().take(self.max_depth).find(|&&s| s >= self.alphabet) {
            Some(&s) => Err(Error::SymbolOutOfRange { symbol: s, alphabet: self.alphabet }),
            None => Ok(()),
        }
    }

    /// Existing nodes along the context path, root first, and whether the
    /// path reached its full length `min(len, D)`.
    fn existing_path(&self, context: &[u32]) -> (Vec<u32>, bool) {
        let depth = context.len().min(self.max_depth);
        let mut path = Vec::with_capacity(depth + 1);
        let mut node = 0u32;
        path.push(node);
        for &s in &context[..depth] {
            node = self.nodes[node as usize].child(s);
            if node == NO_NODE {
                return (path, false);
            }
            path.push(node);
        }
        (path, true)
    }

    /// Predictive probabilities of `symbols` given `context`.
    pub fn predict_symbols(&self, context: &[u32], symbols: &[u32]) -> Result<Vec<f64>> {
        self.check_context(context)?;
        if let Some(&s) = symbols.iter().find(|&&s| s >= self.alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: s, alphabet: self.alphabet });
        }
        let (path, full) = self.existing_path(context);
        let half_m = self.half_m();
        let uniform = 1.0 / self.alphabet as f64;
        let weights: Vec<f64> = path.iter().map(|&i| self.kt_weight(&self.nodes[i as usize])).collect();
        Ok(symbols
            .iter()
            .map(|&a| {
                let mut ratio: Option<f64> = if full { None } else { Some(uniform) };
                for (k, &i) in path.iter().enumerate().rev() {
                    let kt = self.nodes[i as usize].kt(a, half_m);
                    ratio = Some(match ratio {
                        None => kt,
                        Some(below) => weights[k] * kt + (1.0 - weights[k]) * below,
                    });
                }
                ratio.expect("path contains the root")
            })
            .collect())
    }

    /// Predictive distribution over the whole alphabet.
    pub fn predict(&self, context: &[u32]) -> Result<Vec<f64>> {
        let all: Vec<u32> = (0..self.alphabet).collect();
        self.predict_symbols(context, &all)
    }

    /// Records `symbol` after `context`, touching the root and every node down
    /// to depth `min(len(context), D)`.
    pub fn update(&mut self, context: &[u32], symbol: u32) -> Result<()> {
        self.check_context(context)?;
        if symbol >= self.alphabet {
            return Err(Error::SymbolOutOfRange { symbol, alphabet: self.alphabet });
        }
        let depth = context.len().min(self.max_depth);
        let mut path = Vec::with_capacity(depth + 1);
        let mut node = 0u32;
        path.push(node);
        for &s in &context[..depth] {
            let mut next = self.nodes[node as usize].child(s);
            if next == NO_NODE {
                next = self.nodes.len() as u32;
                self.nodes.push(Node::new());
                self.nodes[node as usize].children.push((s, next));
            }
            node = next;
            path.push(node);
        }
        self.touches += path.len() as u64;

        let half_m = self.half_m();
        let leaf = *path.last().expect("root");
        let mut below = self.nodes[leaf as usize].kt(symbol, half_m);
        if depth < self.max_depth {
            // Internal node acting as a leaf: its own block probability grows,
            // its children's product does not.
            self.nodes[leaf as usize].log_beta += below.ln();
        }
        for &i in path[..path.len() - 1].iter().rev() {
            let w = self.kt_weight(&self.nodes[i as usize]);
            let n = &mut self.nodes[i as usize];
            let kt = n.kt(symbol, half_m);
            let ratio = w * kt + (1.0 - w) * below;
            n.log_beta += kt.ln() - below.ln();
            below = ratio;
        }
        for &i in &path {
            self.nodes[i as usize].increment(symbol);
        }
        Ok(())
    }
}

/// Settings for the context-tree estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtOptions {
    pub depth: usize,
    /// Leading steps excluded from the averages. `None` means `max(depth, 100)`.
    pub burn_in: Option<usize>,
    pub prior_weight: f64,
}

impl CtOptions {
    pub fn new(depth: usize) -> Self {
        Self { depth, burn_in: None, prior_weight: 0.5 }
    }

    /// Averages over every step, as in the unmodified estimator.
    pub fn exact(depth: usize) -> Self {
        Self { depth, burn_in: Some(0), prior_weight: 0.5 }
    }

    pub fn effective_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.depth.max(100))
    }
}

/// Directed information and causally conditioned entropy from one pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtEstimate {
    pub directed_info: f64,
    pub entropy: f64,
    pub steps_averaged: usize,
}

/// Runs both trees over raw symbol streams with explicit alphabet sizes.
pub fn ct_estimate_raw(
    x: &[u32],
    ax: u32,
    y: &[u32],
    ay: u32,
    z: &[u32],
    az: u32,
    options: &CtOptions,
) -> Result<CtEstimate> {
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(Error::LengthMismatch(format!("stream lengths {n}, {}, {} differ", y.len(), z.len())));
    }
    let joint = (ax as u64) * (ay as u64) * (az as u64);
    if joint > u32::MAX as u64 {
        return Err(Error::HyperNodeTooLarge { size: joint as u128, cap: u32::MAX as u128 });
    }
    if ay < 2 {
        return Err(Error::InvalidParameter("target alphabet must be >= 2".into()));
    }
    for (s, a) in [(x, ax), (y, ay), (z, az)] {
        if let Some(&bad) = s.iter().find(|&&v| v >= a) {
            return Err(Error::SymbolOutOfRange { symbol: bad, alphabet: a });
        }
    }
    let burn_in = options.effective_burn_in();
    if burn_in >= n {
        return Err(Error::InsufficientData(format!("{n} samples do not exceed the burn-in of {burn_in}")));
    }

    let d = options.depth;
    let w: Vec<u32> = (0..n).map(|i| x[i] + ax * (y[i] + ay * z[i])).collect();
    let v: Vec<u32> = (0..n).map(|i| y[i] + ay * z[i]).collect();
    let mut joint_model = ContextTreeModel::with_prior_weight(joint as u32, d, options.prior_weight)?;
    let mut target_model = ContextTreeModel::with_prior_weight(ay * az, d, options.prior_weight)?;

    let mut ctx_w = Vec::with_capacity(d);
    let mut ctx_v = Vec::with_capacity(d);
    let mut cand_w = vec![0u32; ay as usize];
    let mut cand_v = vec![0u32; ay as usize];
    let (mut di_sum, mut h_sum) = (0.0f64, 0.0f64);

    for i in 0..n {
        ctx_w.clear();
        ctx_v.clear();
        for k in 1..=d.min(i) {
            ctx_w.push(w[i - k]);
            ctx_v.push(v[i - k]);
        }

        if i >= burn_in {
            for yy in 0..ay {
                cand_w[yy as usize] = x[i] + ax * (yy + ay * z[i]);
                cand_v[yy as usize] = yy + ay * z[i];
            }
            let num = joint_model.predict_symbols(&ctx_w, &cand_w)?;
            let den = target_model.predict_symbols(&ctx_v, &cand_v)?;
            let (num_total, den_total): (f64, f64) = (num.iter().sum(), den.iter().sum());
            let (mut cross, mut self_h) = (0.0, 0.0);
            for (a, b) in num.iter().zip(&den) {
                let q = a / num_total;
                if q > 0.0 {
                    let p = b / den_total;
                    cross -= q * p.log2();
                    self_h -= q * q.log2();
                }
            }
            let cross = cross.max(0.0);
            h_sum += cross;
            di_sum += (cross - self_h.max(0.0)).max(0.0);
        }

        joint_model.update(&ctx_w, w[i])?;
        target_model.update(&ctx_v, v[i])?;
    }

    let steps = n - burn_in;
    Ok(CtEstimate {
        directed_info: di_sum / steps as f64,
        entropy: h_sum / steps as f64,
        steps_averaged: steps,
    })
}

/// Context-tree estimate for quantized series, with `z` merged into one
/// hyper-node stream.
pub fn ct_estimate(
    x: &QuantizedSeries,
    y: &QuantizedSeries,
    z: &[&QuantizedSeries],
    options: &CtOptions,
) -> Result<CtEstimate> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch(format!("'{}' vs '{}'", x.node_id, y.node_id)));
    }
    let (zs, az) = combine_series(z, n)?;
    ct_estimate_raw(&x.symbols, x.alphabet(), &y.symbols, y.alphabet(), &zs, az, options)
}

/// `Î_CT(X → Y ‖ Z)` in bits with default burn-in.
pub fn directed_info_ct(x: &QuantizedSeries, y: &QuantizedSeries, z: &[&QuantizedSeries], depth: usize) -> Result<f64> {
    Ok(ct_estimate(x, y, z, &CtOptions::new(depth))?.directed_info)
}

/// `Ĥ_CT(Y ‖ Z)` in bits with default burn-in.
pub fn causally_conditioned_entropy_ct(
    x: &QuantizedSeries,
    y: &QuantizedSeries,
    z: &[&QuantizedSeries],
    depth: usize,
) -> Result<f64> {
    Ok(ct_estimate(x, y, z, &CtOptions::new(depth))?.entropy)
}
