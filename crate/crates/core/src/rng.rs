//! Portable seeded randomness.
//!
//! Every generator draws from a ChaCha8 stream. The stream is selected from
//! a run-wide seed plus a text label, so two scenarios seeded from the same
//! `--seed` never share or shift each other's draws. ChaCha output is
//! specified bit-for-bit, which keeps golden values identical across
//! platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The RNG used by every simulator in this crate.
pub type SimRng = ChaCha8Rng;

/// Builds the generator for `label` under the run seed `seed`.
pub fn stream(seed: u64, label: &str) -> SimRng {
    let digest = Sha256::digest(label.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from_le_bytes(word));
    rng
}

/// Poisson draw by sequential inversion of the CDF.
///
/// Exact for the small means used by the traffic generators; for means above
/// ~700 `exp(-mean)` underflows and the draw is split into halves.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 500.0 {
        let half = mean / 2.0;
        return poisson(rng, half) + poisson(rng, mean - half);
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p < f64::MIN_POSITIVE && cdf < u {
            // Floating point cannot reach u; the remaining mass is negligible.
            break;
        }
    }
    k
}

/// Number of successes in `trials` independent Bernoulli(`p`) draws.
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64
}

/// Uniform draw on `[lo, hi]`; returns `lo` when the interval is degenerate.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}
