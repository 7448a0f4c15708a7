//! Poisson-queue traffic generators: sensors in sequence, a merge, and the
//! three-node linear Poisson model.
//!
//! Cars enter at the source with a Poisson mean that alternates between a
//! high and a low value every `period` samples (high first). A sensor reading
//! is the number of cars passing plus independent Poisson noise; the noise
//! does not travel downstream. Links have no capacity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{binomial, poisson, stream};
use crate::series::FlowSeries;

/// Period attached to generated series (5-minute aggregation).
pub const SIM_PERIOD_SECONDS: u64 = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoissonChainConfig {
    pub num_sensors: usize,
    pub n: usize,
    pub lambda_high: f64,
    pub lambda_low: f64,
    pub period: usize,
    pub noise_mean: f64,
    /// Cars may reach the next sensor in the same step.
    pub instantaneous: bool,
    pub p_fast: f64,
    pub seed: u64,
}

impl Default for PoissonChainConfig {
    fn default() -> Self {
        Self {
            num_sensors: 4,
            n: 100_000,
            lambda_high: 5.0,
            lambda_low: 1.0,
            period: 20,
            noise_mean: 1.0,
            instantaneous: false,
            p_fast: 0.5,
            seed: 0,
        }
    }
}

fn check_mean(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be a finite mean >= 0, got {v}")))
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be in [0, 1], got {v}")))
    }
}

fn check_source(n: usize, period: usize, high: f64, low: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if period == 0 {
        return Err(Error::InvalidParameter("period must be >= 1".into()));
    }
    check_mean("lambda_high", high)?;
    check_mean("lambda_low", low)
}

impl PoissonChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sensors < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 sensors, got {}", self.num_sensors)));
        }
        check_source(self.n, self.period, self.lambda_high, self.lambda_low)?;
        check_mean("noise_mean", self.noise_mean)?;
        check_probability("p_fast", self.p_fast)
    }
}

/// Source mean at step `i`: `high` during even phases, `low` during odd ones.
pub fn source_mean(i: usize, period: usize, high: f64, low: f64) -> f64 {
    if (i / period) % 2 == 0 {
        high
    } else {
        low
    }
}

fn source_cars(seed: u64, label: &str, n: usize, period: usize, high: f64, low: f64) -> Vec<u64> {
    let mut rng = stream(seed, label);
    (0..n).map(|i| poisson(&mut rng, source_mean(i, period, high, low))).collect()
}

/// Splits `cars[i]` into the part arriving downstream at `i` (fast) and at
/// `i+1` (slow), and returns the downstream arrivals.
fn propagate(cars: &[u64], p_fast: f64, rng: &mut crate::rng::SimRng) -> Vec<u64> {
    let mut out = vec![0u64; cars.len()];
    let mut carried = 0u64;
    for (i, &c) in cars.iter().enumerate() {
        let fast = binomial(rng, c, p_fast);
        out[i] = fast + carried;
        carried = c - fast;
    }
    out
}

fn observe(seed: u64, label: &str, cars: &[u64], noise_mean: f64) -> Vec<u64> {
    let mut rng = stream(seed, label);
    cars.iter().map(|&c| c + poisson(&mut rng, noise_mean)).collect()
}

fn to_series(prefix: &str, readings: Vec<Vec<u64>>) -> Result<Vec<FlowSeries>> {
    readings
        .into_iter()
        .enumerate()
        .map(|(j, s)| FlowSeries::new(format!("{prefix}{}", j + 1), s, SIM_PERIOD_SECONDS))
        .collect()
}

/// Cars passing each sensor, before noise.
pub fn chain_cars(config: &PoissonChainConfig) -> Result<Vec<Vec<u64>>> {
    config.validate()?;
    let mut cars = vec![source_cars(
        config.seed,
        "poisson/chain/source",
        config.n,
        config.period,
        config.lambda_high,
        config.lambda_low,
    )];
    let p_fast = if config.instantaneous { config.p_fast } else { 0.0 };
    for j in 1..config.num_sensors {
        let mut rng = stream(config.seed, &format!("poisson/chain/hop{j}"));
        let next = propagate(&cars[j - 1], p_fast, &mut rng);
        cars.push(next);
    }
    Ok(cars)
}

/// Sensors in sequence: S-I (unit delay per hop) or, with `instantaneous`,
/// S-II (each car reaches the next sensor in the same step with `p_fast`).
/// Series are named `s1..sM`.
pub fn generate_chain(config: &PoissonChainConfig) -> Result<Vec<FlowSeries>> {
    let cars = chain_cars(config)?;
    let readings = cars
        .iter()
        .enumerate()
        .map(|(j, c)| observe(config.seed, &format!("poisson/chain/noise{}", j + 1), c, config.noise_mean))
        .collect();
    to_series("s", readings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub n: usize,
    pub lambda_high: f64,
    pub lambda_low: f64,
    pub period: usize,
    pub noise_mean: f64,
    /// Probability that a car from input 1 reaches the merge sensor in the same step.
    pub p_fast: f64,
    pub seed: u64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { n: 100_000, lambda_high: 5.0, lambda_low: 1.0, period: 20, noise_mean: 1.0, p_fast: 0.75, seed: 0 }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        check_source(self.n, self.period, self.lambda_high, self.lambda_low)?;
        check_mean("noise_mean", self.noise_mean)?;
        check_probability("p_fast", self.p_fast)
    }
}

/// Cars passing the three sensors of the merge, before noise.
pub fn merge_cars(config: &MergeConfig) -> Result<[Vec<u64>; 3]> {
    config.validate()?;
    let (n, period, hi, lo) = (config.n, config.period, config.lambda_high, config.lambda_low);
    let x1 = source_cars(config.seed, "poisson/merge/source1", n, period, hi, lo);
    let x2 = source_cars(config.seed, "poisson/merge/source2", n, period, hi, lo);
    let mut rng = stream(config.seed, "poisson/merge/hop");
    let from1 = propagate(&x1, config.p_fast, &mut rng);
    let x3 = (0..n).map(|i| from1[i] + if i > 0 { x2[i - 1] } else { 0 }).collect();
    Ok([x1, x2, x3])
}

/// Merging traffic (S-III): inputs `s1`, `s2` feed `s3`. Cars from `s1` may
/// arrive in the same step; cars from `s2` always take one step.
pub fn generate_merge(config: &MergeConfig) -> Result<Vec<FlowSeries>> {
    let cars = merge_cars(config)?;
    let readings = cars
        .iter()
        .enumerate()
        .map(|(j, c)| observe(config.seed, &format!("poisson/merge/noise{}", j + 1), c, config.noise_mean))
        .collect();
    to_series("s", readings)
}

/// Coefficients and noise means of
///
/// ```text
/// X_i = a1 Z_{i-1} + N_i
/// Y_i = a2 X_{i-1} + a3 Z_i + N'_i
/// Z_i = a4 Z_{i-2} + N''_i
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearPoissonCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub noise_x: f64,
    pub noise_y: f64,
    pub noise_z: f64,
    pub n: usize,
    /// Initial steps simulated and discarded so the output starts near stationarity.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for LinearPoissonCoeffs {
    fn default() -> Self {
        Self {
            a1: 0.5,
            a2: 0.5,
            a3: 0.5,
            a4: 0.4,
            noise_x: 1.0,
            noise_y: 1.0,
            noise_z: 1.0,
            n: 100_000,
            warmup: 100,
            seed: 0,
        }
    }
}

impl LinearPoissonCoeffs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if !(self.a4.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("unstable recursion: |a4| = {} must be < 1", self.a4.abs())));
        }
        for (name, v) in [("a1", self.a1), ("a2", self.a2), ("a3", self.a3), ("a4", self.a4)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0 so flows stay non-negative, got {v}")));
            }
        }
        check_mean("noise_x", self.noise_x)?;
        check_mean("noise_y", self.noise_y)?;
        check_mean("noise_z", self.noise_z)
    }

    /// `E[N''] / (1 - a4)`.
    pub fn stationary_mean_z(&self) -> f64 {
        self.noise_z / (1.0 - self.a4)
    }
}

/// Real-valued and rounded trajectories of the linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelOutput {
    /// `[X, Y, Z]` before rounding.
    pub raw: [Vec<f64>; 3],
    /// Rounded series named `x`, `y`, `z`.
    pub series: Vec<FlowSeries>,
}

pub fn generate_linear_model(coeffs: &LinearPoissonCoeffs) -> Result<LinearModelOutput> {
    coeffs.validate()?;
    let total = coeffs.n + coeffs.warmup;
    let mut rx = stream(coeffs.seed, "poisson/linear/nx");
    let mut ry = stream(coeffs.seed, "poisson/linear/ny");
    let mut rz = stream(coeffs.seed, "poisson/linear/nz");
    let (mut x, mut y, mut z) = (vec![0.0; total], vec![0.0; total], vec![0.0; total]);
    for i in 0..total {
        let z2 = if i >= 2 { z[i - 2] } else { 0.0 };
        z[i] = coeffs.a4 * z2 + poisson(&mut rz, coeffs.noise_z) as f64;
        let z1 = if i >= 1 { z[i - 1] } else { 0.0 };
        x[i] = coeffs.a1 * z1 + poisson(&mut rx, coeffs.noise_x) as f64;
        let x1 = if i >= 1 { x[i - 1] } else { 0.0 };
        y[i] = coeffs.a2 * x1 + coeffs.a3 * z[i] + poisson(&mut ry, coeffs.noise_y) as f64;
    }
    let w = coeffs.warmup;
    let raw = [x[w..].to_vec(), y[w..].to_vec(), z[w..].to_vec()];
    let series = ["x", "y", "z"]
        .iter()
        .zip(&raw)
        .map(|(id, v)| FlowSeries::new(*id, v.iter().map(|a| a.round() as u64).collect(), SIM_PERIOD_SECONDS))
        .collect::<Result<_>>()?;
    Ok(LinearModelOutput { raw, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_phase_means() {
        let cfg = PoissonChainConfig { n: 100_000, seed: 3, ..Default::default() };
        let s = generate_chain(&cfg).unwrap();
        let high: Vec<f64> =
            (0..cfg.n).filter(|&i| (i / cfg.period) % 2 == 0).map(|i| s[0].samples[i] as f64).collect();
        let mean = high.iter().sum::<f64>() / high.len() as f64;
        // reading = Poisson(5) + Poisson(1): mean 6, variance 6
        let se = (6.0 / high.len() as f64).sqrt();
        assert!((mean - 6.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn s1_noise_free_is_unit_shift() {
        let cfg = PoissonChainConfig { n: 2000, noise_mean: 0.0, seed: 5, ..Default::default() };
        let s = generate_chain(&cfg).unwrap();
        for j in 1..4 {
            assert_eq!(s[j].samples[0], 0);
            assert_eq!(&s[j].samples[1..], &s[j - 1].samples[..cfg.n - 1]);
        }
    }

    #[test]
    fn s2_conserves_cars() {
        let cfg = PoissonChainConfig { n: 5000, noise_mean: 0.0, instantaneous: true, seed: 6, ..Default::default() };
        let s = generate_chain(&cfg).unwrap();
        let t0: u64 = s[0].samples.iter().sum();
        for j in 1..4 {
            let tj: u64 = s[j].samples.iter().sum();
            // only cars still in transit at the end are missing
            assert!(tj <= t0 && t0 - tj <= 3 * 20);
        }
        let p1 = PoissonChainConfig { p_fast: 1.0, ..cfg.clone() };
        let s = generate_chain(&p1).unwrap();
        assert_eq!(s[0].samples, s[3].samples);
    }

    #[test]
    fn seeded_determinism() {
        let cfg = PoissonChainConfig { n: 500, seed: 9, instantaneous: true, ..Default::default() };
        assert_eq!(generate_chain(&cfg).unwrap(), generate_chain(&cfg).unwrap());
        let other = PoissonChainConfig { seed: 10, ..cfg.clone() };
        assert_ne!(generate_chain(&cfg).unwrap(), generate_chain(&other).unwrap());
    }

    #[test]
    fn merge_exact_without_noise() {
        let cfg = MergeConfig { n: 1000, noise_mean: 0.0, p_fast: 1.0, seed: 2, ..Default::default() };
        let s = generate_merge(&cfg).unwrap();
        assert_eq!(s[2].samples[0], s[0].samples[0]);
        for i in 1..cfg.n {
            assert_eq!(s[2].samples[i], s[0].samples[i] + s[1].samples[i - 1]);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_chain(&PoissonChainConfig { num_sensors: 1, ..Default::default() }).is_err());
        assert!(generate_chain(&PoissonChainConfig { p_fast: 1.5, ..Default::default() }).is_err());
        assert!(generate_chain(&PoissonChainConfig { noise_mean: -1.0, ..Default::default() }).is_err());
        assert!(generate_merge(&MergeConfig { period: 0, ..Default::default() }).is_err());
        assert!(generate_linear_model(&LinearPoissonCoeffs { a4: 1.0, ..Default::default() }).is_err());
        assert!(generate_linear_model(&LinearPoissonCoeffs { a4: -1.2, ..Default::default() }).is_err());
    }

    #[test]
    fn linear_stationary_mean() {
        let c = LinearPoissonCoeffs { n: 100_000, seed: 4, ..Default::default() };
        let out = generate_linear_model(&c).unwrap();
        let z = &out.raw[2];
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        // Var Z = Var N'' / (1 - a4^2); autocorrelation is a4^k at lag 2k and
        // zero at odd lags, so the variance of the mean grows by (1+a4)/(1-a4).
        let var = c.noise_z / (1.0 - c.a4 * c.a4);
        let inflate = (1.0 + c.a4) / (1.0 - c.a4);
        let se = (var * inflate / z.len() as f64).sqrt();
        assert!((mean - c.stationary_mean_z()).abs() < 3.0 * se, "mean {mean}");
        assert!(out.series.iter().all(|s| s.len() == c.n));
        for (s, r) in out.series.iter().zip(&out.raw) {
            assert!(s.samples.iter().zip(r).all(|(&a, &b)| a == b.round() as u64));
        }
    }

    #[test]
    fn linear_zero_coefficients_are_independent_noise() {
        let c = LinearPoissonCoeffs { a1: 0.0, a2: 0.0, a3: 0.0, a4: 0.0, n: 1000, seed: 1, ..Default::default() };
        let out = generate_linear_model(&c).unwrap();
        assert!(out.raw.iter().flatten().all(|v| v.fract() == 0.0));
    }
}
