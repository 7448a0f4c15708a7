//! Cross-covariance, memory-depth estimation and the coefficient of
//! determination.
//!
//! Lag convention: for `cross_covariance(x, y, _)` the value at lag `τ`
//! pairs `x_i` with `y_{i+τ}`, so a positive peak lag means `y` trails `x`.
//! The coefficient of determination uses the same convention. The profile of
//! the reversed pair stands in for negative lags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{check_equal_lengths, FlowSeries};

/// Upper bound on the default lag horizon (4 hours of 5-minute samples).
pub const DEFAULT_TAU_CAP: usize = 48;

/// `min(n - 1, 48)`.
pub fn default_tau_max(n: usize) -> usize {
    n.saturating_sub(1).min(DEFAULT_TAU_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagProfile {
    pub pair: (String, String),
    /// Covariance at lags `0..=tau_max`.
    pub values: Vec<f64>,
    /// Smallest lag achieving the largest `|cov|`.
    pub peak_lag: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `cov(τ) = 1/(n-τ) Σ_{i<n-τ} (y_{i+τ} - μ_y)(x_i - μ_x)` with full-sample means.
///
/// Constant inputs produce an all-zero profile with peak lag 0.
pub fn cross_covariance(x: &FlowSeries, y: &FlowSeries, tau_max: usize) -> Result<LagProfile> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch(format!(
            "'{}' has {n} samples, '{}' has {}",
            x.node_id,
            y.node_id,
            y.len()
        )));
    }
    if tau_max >= n {
        return Err(Error::InvalidParameter(format!("tau_max {tau_max} must be below series length {n}")));
    }
    let xs = x.as_f64();
    let ys = y.as_f64();
    let (mx, my) = (mean(&xs), mean(&ys));
    let xc: Vec<f64> = xs.iter().map(|v| v - mx).collect();
    let yc: Vec<f64> = ys.iter().map(|v| v - my).collect();

    let values: Vec<f64> = (0..=tau_max)
        .map(|tau| {
            let m = n - tau;
            let s: f64 = xc[..m].iter().zip(&yc[tau..]).map(|(a, b)| a * b).sum();
            s / m as f64
        })
        .collect();

    let mut peak_lag = 0;
    for (tau, v) in values.iter().enumerate() {
        if v.abs() > values[peak_lag].abs() {
            peak_lag = tau;
        }
    }
    Ok(LagProfile { pair: (x.node_id.clone(), y.node_id.clone()), values, peak_lag })
}

/// Peak lags for every ordered pair `(m, l)`, `m != l`.
pub fn pairwise_lags(series: &[FlowSeries], tau_max: usize) -> Result<Vec<LagProfile>> {
    check_equal_lengths(series)?;
    let mut out = Vec::with_capacity(series.len() * series.len().saturating_sub(1));
    for (m, x) in series.iter().enumerate() {
        for (l, y) in series.iter().enumerate() {
            if m != l {
                out.push(cross_covariance(x, y, tau_max)?);
            }
        }
    }
    Ok(out)
}

/// Peak of the two-sided profile of a pair: the reverse profile supplies the
/// negative lags. Returns `|lag|`, preferring the smaller magnitude and then
/// the forward direction on ties.
pub fn two_sided_peak(forward: &LagProfile, reverse: &LagProfile) -> usize {
    let mut best = (0usize, forward.values[0].abs());
    for tau in 1..forward.values.len() {
        for v in [forward.values[tau], reverse.values[tau]] {
            if v.abs() > best.1 {
                best = (tau, v.abs());
            }
        }
    }
    best.0
}

/// Memory depth: the largest `|peak lag|` over all pairs, where each pair's
/// peak is taken over lags `-tau_max..=tau_max` (both ordered directions).
pub fn estimate_depth(series: &[FlowSeries], tau_max: usize) -> Result<usize> {
    if series.len() < 2 {
        return Err(Error::InsufficientData("depth estimation needs at least two series".into()));
    }
    check_equal_lengths(series)?;
    let mut depth = 0;
    for m in 0..series.len() {
        for l in m + 1..series.len() {
            let forward = cross_covariance(&series[m], &series[l], tau_max)?;
            let reverse = cross_covariance(&series[l], &series[m], tau_max)?;
            depth = depth.max(two_sided_peak(&forward, &reverse));
        }
    }
    Ok(depth)
}

/// Squared Pearson correlation of `x_t` and `y_{t+τ}` over the overlapping
/// window, with means and deviations taken inside the window.
pub fn coefficient_of_determination(x: &FlowSeries, y: &FlowSeries, tau: usize) -> Result<f64> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch(format!("'{}' vs '{}'", x.node_id, y.node_id)));
    }
    if tau >= n {
        return Err(Error::InvalidParameter(format!("tau {tau} must be below series length {n}")));
    }
    let xs: Vec<f64> = x.samples[..n - tau].iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = y.samples[tau..].iter().map(|&v| v as f64).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        let which = if sxx == 0.0 { &x.node_id } else { &y.node_id };
        return Err(Error::ZeroVariance(format!("series '{which}' is constant over the window")));
    }
    Ok((sxy * sxy / (sxx * syy)).clamp(0.0, 1.0))
}
