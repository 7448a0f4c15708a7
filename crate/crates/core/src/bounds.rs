//! Asymptotic false-alarm and detection bounds for the graph threshold test,
//! and the regularized incomplete gamma function they rest on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GAMMA_EPS: f64 = 1e-12;
const GAMMA_MAX_ITER: usize = 10_000;

/// Natural log of Γ(s) for s > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(s: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if s < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * s).sin()).ln() - ln_gamma(1.0 - s);
    }
    let s = s - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (s + i as f64);
    }
    let t = s + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (s + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(s, x) = γ(s, x) / Γ(s)`.
///
/// Power series for `x < s + 1`, Lentz continued fraction for the upper
/// function otherwise; both stop at 1e-12 relative change.
pub fn regularized_gamma_p(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma shape must be positive, got {s}")));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma argument must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let log_prefactor = s * x.ln() - x - ln_gamma(s);
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut a = s;
        for _ in 0..GAMMA_MAX_ITER {
            a += 1.0;
            term *= x / a;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                return Ok((sum * log_prefactor.exp()).clamp(0.0, 1.0));
            }
        }
        Err(Error::Internal(format!("gamma series did not converge for s={s}, x={x}")))
    } else {
        let tiny = f64::MIN_POSITIVE / GAMMA_EPS;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                let q = log_prefactor.exp() * h;
                return Ok((1.0 - q).clamp(0.0, 1.0));
            }
        }
        Err(Error::Internal(format!("gamma continued fraction did not converge for s={s}, x={x}")))
    }
}

/// Bounds on false-alarm and detection probability of the threshold test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBounds {
    pub sensors: u32,
    pub order: u32,
    pub alphabet: u32,
    /// Directed edges in the hypothesis graph.
    pub w1: u64,
    /// `M(M-1) - W1`.
    pub w0: u64,
    pub threshold: f64,
    /// `|X|^{M k} (|X|^M - 1)`.
    pub r: f64,
    /// `P_G(R/2, I_th)`.
    pub p_gamma: f64,
    pub pf_upper: f64,
    pub pd_lower: f64,
}

/// `P_F <= 1 - P_G(R/2, I_th)` and `P_D >= max{1 - W0 (1 - P_G(R/2, I_th)), 0}`.
pub fn detection_bounds(sensors: u32, order: u32, alphabet: u32, w1: u64, threshold: f64) -> Result<DetectionBounds> {
    if sensors < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 sensors, got {sensors}")));
    }
    if order < 1 {
        return Err(Error::InvalidParameter("Markov order must be >= 1".into()));
    }
    if alphabet < 2 {
        return Err(Error::InvalidParameter(format!("alphabet must be >= 2, got {alphabet}")));
    }
    let pairs = sensors as u64 * (sensors as u64 - 1);
    if w1 > pairs {
        return Err(Error::InvalidParameter(format!("W1 = {w1} exceeds M(M-1) = {pairs}")));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {threshold}")));
    }
    let a = alphabet as f64;
    let m = sensors as f64;
    let r = a.powf(m * order as f64) * (a.powf(m) - 1.0);
    if !r.is_finite() {
        return Err(Error::InvalidParameter("R overflows; reduce sensors, order or alphabet".into()));
    }
    let w0 = pairs - w1;
    let p_gamma = regularized_gamma_p(r / 2.0, threshold)?;
    let miss = 1.0 - p_gamma;
    Ok(DetectionBounds {
        sensors,
        order,
        alphabet,
        w1,
        w0,
        threshold,
        r,
        p_gamma,
        pf_upper: miss.clamp(0.0, 1.0),
        pd_lower: (1.0 - w0 as f64 * miss).clamp(0.0, 1.0),
    })
}
