//! Plug-in estimator of causally conditioned directed information under an
//! order-`d` Markov simplification.
//!
//! The sufficient statistic is the table of length-`(d+1)` blocks of the
//! combined symbol `w = x + |X|·(y + |Y|·z)`. From the empirical block law we
//! evaluate
//!
//! ```text
//! Î = I(Y_{d+1}; X^{d+1} | Y^d, Z^{d+1}) = H(Y_{d+1} | Y^d, Z^{d+1}) - H(Y_{d+1} | X^{d+1}, Y^d, Z^{d+1})
//! Ĥ = H(Y_{d+1} | Y^d, Z^{d+1})
//! ```
//!
//! in bits. Both conditional entropies are sums of non-negative terms, so
//! `0 <= Î <= Ĥ` holds for the computed floating-point values, not only in
//! exact arithmetic. All sums run over keys in sorted order, which makes the
//! results independent of hash seeds.
//!
//! The simplification assumes the triple is jointly stationary Markov of
//! order `d` with positive transitions, and that each pair satisfies the
//! finite-memory Markov-chain condition. None of this is checked at runtime.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::series::{combine_series, QuantizedSeries};

/// Empirical counts of length-`(depth+1)` blocks of combined symbols.
///
/// Block codes put the oldest symbol in the least significant position:
/// `code = Σ_j w_{i-d+j} · A^j` with `A = |X||Y||Z|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCountTable {
    depth: usize,
    alphabet_sizes: [u32; 3],
    entries: Vec<(u128, u64)>,
    total: u64,
}

/// Î and Ĥ evaluated on one table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalEstimate {
    pub directed_info: f64,
    pub entropy: f64,
}

impl BlockCountTable {
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `(|X|, |Y|, |Z|)`.
    pub fn alphabet_sizes(&self) -> [u32; 3] {
        self.alphabet_sizes
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct blocks observed.
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    fn joint_alphabet(&self) -> u128 {
        self.alphabet_sizes.iter().map(|&a| a as u128).product()
    }

    /// Count of the block given as `(x, y, z)` triples, oldest first.
    pub fn count(&self, block: &[(u32, u32, u32)]) -> u64 {
        if block.len() != self.depth + 1 {
            return 0;
        }
        let [ax, ay, az] = self.alphabet_sizes;
        if block.iter().any(|&(x, y, z)| x >= ax || y >= ay || z >= az) {
            return 0;
        }
        let a = self.joint_alphabet();
        let code = block.iter().rev().fold(0u128, |acc, &(x, y, z)| {
            acc * a + (x as u128 + ax as u128 * (y as u128 + ay as u128 * z as u128))
        });
        self.entries
            .binary_search_by_key(&code, |e| e.0)
            .map_or(0, |i| self.entries[i].1)
    }

    /// Iterates `(block as (x, y, z) triples oldest first, count)`.
    pub fn blocks(&self) -> impl Iterator<Item = (Vec<(u32, u32, u32)>, u64)> + '_ {
        self.entries.iter().map(move |&(code, count)| (self.decode(code), count))
    }

    fn decode(&self, mut code: u128) -> Vec<(u32, u32, u32)> {
        let [ax, ay, _] = self.alphabet_sizes;
        let a = self.joint_alphabet();
        (0..=self.depth)
            .map(|_| {
                let w = code % a;
                code /= a;
                let x = (w % ax as u128) as u32;
                let rest = w / ax as u128;
                ((x), (rest % ay as u128) as u32, (rest / ay as u128) as u32)
            })
            .collect()
    }

    /// Î and Ĥ in bits.
    pub fn estimate(&self) -> EmpiricalEstimate {
        let [ax, ay, az] = self.alphabet_sizes;
        let (ax, ay, az) = (ax as u128, ay as u128, az as u128);
        let d = self.depth;
        let x_space = ax.pow(d as u32 + 1);

        // (c, a) and (c, b, a) keys; c = (y^d, z^{d+1}), a = y_{d+1}, b = x^{d+1}
        let mut ca: Vec<(u128, u64)> = Vec::with_capacity(self.entries.len());
        let mut cba: Vec<(u128, u64)> = Vec::with_capacity(self.entries.len());
        for &(code, count) in &self.entries {
            let block = self.decode(code);
            let mut c: u128 = 0;
            for &(_, y, _) in block[..d].iter().rev() {
                c = c * ay + y as u128;
            }
            for &(_, _, z) in block.iter().rev() {
                c = c * az + z as u128;
            }
            let mut b: u128 = 0;
            for &(x, _, _) in block.iter().rev() {
                b = b * ax + x as u128;
            }
            let a = block[d].1 as u128;
            ca.push((c * ay + a, count));
            cba.push(((c * x_space + b) * ay + a, count));
        }

        let total = self.total as f64;
        let entropy = conditional_entropy_bits(&mut ca, ay, total);
        let residual = conditional_entropy_bits(&mut cba, ay, total);
        EmpiricalEstimate { directed_info: (entropy - residual).max(0.0), entropy }
    }
}

/// `H(A | rest)` where each key is `rest * radix + a`. Sorts and merges keys
/// in place; every summand `-p(a, rest) log2 p(a | rest)` is non-negative.
fn conditional_entropy_bits(keys: &mut Vec<(u128, u64)>, radix: u128, total: f64) -> f64 {
    keys.sort_unstable_by_key(|e| e.0);
    keys.dedup_by(|next, kept| {
        if next.0 == kept.0 {
            kept.1 += next.1;
            true
        } else {
            false
        }
    });
    let mut h = 0.0;
    let mut start = 0;
    while start < keys.len() {
        let group = keys[start].0 / radix;
        let mut end = start;
        let mut group_count = 0u64;
        while end < keys.len() && keys[end].0 / radix == group {
            group_count += keys[end].1;
            end += 1;
        }
        let gc = group_count as f64;
        for &(_, n) in &keys[start..end] {
            let n = n as f64;
            h += -(n / total) * (n / gc).log2();
        }
        start = end;
    }
    h
}

/// Counts every window `(w_{i-d}, ..., w_i)` of the combined stream.
///
/// `z` is the hyper-node; its series are merged into one super-alphabet
/// symbol. An empty `z` means a constant unit-alphabet conditioning stream.
pub fn count_blocks(
    x: &QuantizedSeries,
    y: &QuantizedSeries,
    z: &[&QuantizedSeries],
    depth: usize,
) -> Result<BlockCountTable> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::LengthMismatch(format!(
            "'{}' has {n} symbols, '{}' has {}",
            x.node_id,
            y.node_id,
            y.len()
        )));
    }
    let (zs, az) = combine_series(z, n)?;
    count_blocks_raw(&x.symbols, x.alphabet(), &y.symbols, y.alphabet(), &zs, az, depth)
}

/// [`count_blocks`] on raw symbol streams with explicit alphabet sizes.
pub fn count_blocks_raw(
    x: &[u32],
    ax: u32,
    y: &[u32],
    ay: u32,
    z: &[u32],
    az: u32,
    depth: usize,
) -> Result<BlockCountTable> {
    let n = x.len();
    if y.len() != n || z.len() != n {
        return Err(Error::LengthMismatch(format!(
            "stream lengths {n}, {}, {} differ",
            y.len(),
            z.len()
        )));
    }
    if n <= depth {
        return Err(Error::InsufficientData(format!("{n} samples cannot fill a block of depth {depth}")));
    }
    for (s, a) in [(x, ax), (y, ay), (z, az)] {
        if a == 0 {
            return Err(Error::InvalidParameter("alphabet size 0".into()));
        }
        if let Some(&bad) = s.iter().find(|&&v| v >= a) {
            return Err(Error::SymbolOutOfRange { symbol: bad, alphabet: a });
        }
    }
    let a = ax as u128 * ay as u128 * az as u128;
    let top = a
        .checked_pow(depth as u32)
        .filter(|t| t.checked_mul(a).is_some())
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "block space {a}^{} does not fit in 128 bits; reduce depth or levels",
                depth + 1
            ))
        })?;

    let w: Vec<u128> = (0..n)
        .map(|i| x[i] as u128 + ax as u128 * (y[i] as u128 + ay as u128 * z[i] as u128))
        .collect();
    let mut counts: HashMap<u128, u64> = HashMap::new();
    // Rolling code: drop the oldest (least significant) symbol, append the newest on top.
    let mut code = w[..=depth].iter().rev().fold(0u128, |acc, &s| acc * a + s);
    *counts.entry(code).or_default() += 1;
    for i in depth + 1..n {
        code = code / a + w[i] * top;
        *counts.entry(code).or_default() += 1;
    }
    let mut entries: Vec<(u128, u64)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    Ok(BlockCountTable {
        depth,
        alphabet_sizes: [ax, ay, az],
        entries,
        total: (n - depth) as u64,
    })
}

/// `I(Y_{d+1}; X^{d+1} | Y^d, Z^{d+1})` in bits.
pub fn conditional_directed_info_emp(table: &BlockCountTable) -> f64 {
    table.estimate().directed_info
}

/// `H(Y_{d+1} | Y^d, Z^{d+1})` in bits.
pub fn causally_conditioned_entropy_emp(table: &BlockCountTable) -> f64 {
    table.estimate().entropy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn q(id: &str, s: Vec<u32>, r: u32) -> QuantizedSeries {
        QuantizedSeries::from_symbols(id, s, r).unwrap()
    }

    fn coin(seed: u64, label: &str, n: usize) -> Vec<u32> {
        let mut r = rng::stream(seed, label);
        (0..n).map(|_| r.random_range(0..2)).collect()
    }

    #[test]
    fn single_window() {
        let x = q("x", vec![0, 1], 2);
        let y = q("y", vec![1, 1], 2);
        let t = count_blocks(&x, &y, &[], 1).unwrap();
        assert_eq!(t.total(), 1);
        assert_eq!(t.distinct(), 1);
        assert_eq!(t.count(&[(0, 1, 0), (1, 1, 0)]), 1);
    }

    #[test]
    fn constant_series_single_key() {
        let x = q("x", vec![1; 20], 2);
        let y = q("y", vec![0; 20], 2);
        let z = q("z", vec![1; 20], 2);
        let t = count_blocks(&x, &y, &[&z], 3).unwrap();
        assert_eq!(t.distinct(), 1);
        assert_eq!(t.total(), 17);
        assert_eq!(t.count(&[(1, 0, 1); 4]), 17);
        let e = t.estimate();
        assert_eq!(e.entropy, 0.0);
        assert_eq!(e.directed_info, 0.0);
    }

    #[test]
    fn hand_enumerated_table() {
        let x = q("x", vec![0, 1, 0, 1], 2);
        let y = q("y", vec![0, 0, 1, 1], 2);
        let t = count_blocks(&x, &y, &[], 1).unwrap();
        // windows: (x,y) pairs (0,0)(1,0) | (1,0)(0,1) | (0,1)(1,1)
        let mut expect: Vec<(Vec<(u32, u32, u32)>, u64)> = vec![
            (vec![(0, 0, 0), (1, 0, 0)], 1),
            (vec![(1, 0, 0), (0, 1, 0)], 1),
            (vec![(0, 1, 0), (1, 1, 0)], 1),
        ];
        let mut got: Vec<_> = t.blocks().collect();
        expect.sort();
        got.sort();
        assert_eq!(got, expect);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn insufficient_data() {
        let x = q("x", vec![0, 1], 2);
        assert!(matches!(count_blocks(&x, &x, &[], 2), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn independent_noise_near_zero() {
        let n = 100_000;
        let x = q("x", coin(1, "x", n), 2);
        let y = q("y", coin(1, "y", n), 2);
        let z = q("z", coin(1, "z", n), 2);
        let e = count_blocks(&x, &y, &[&z], 1).unwrap().estimate();
        assert!(e.directed_info <= 0.02, "{}", e.directed_info);
        assert!((e.entropy - 1.0).abs() < 0.02, "{}", e.entropy);
    }

    #[test]
    fn unit_delay_copy_is_one_bit() {
        let n = 100_000;
        let xs = coin(2, "x", n);
        let mut ys = vec![0];
        ys.extend_from_slice(&xs[..n - 1]);
        let z = q("z", vec![0; n], 2);
        let e = count_blocks(&q("x", xs, 2), &q("y", ys, 2), &[&z], 1).unwrap().estimate();
        assert!((e.directed_info - 1.0).abs() < 0.02, "{}", e.directed_info);
    }

    #[test]
    fn entropy_zero_when_y_copies_z() {
        let n = 10_000;
        let zs = coin(3, "z", n);
        let x = q("x", coin(3, "x", n), 2);
        let y = q("y", zs.clone(), 2);
        let z = q("z", zs, 2);
        let e = count_blocks(&x, &y, &[&z], 1).unwrap().estimate();
        assert!(e.entropy.abs() < 1e-12);
        assert!(e.directed_info.abs() < 1e-12);
    }

    #[test]
    fn constant_y_has_zero_entropy() {
        let x = q("x", coin(4, "x", 1000), 2);
        let y = q("y", vec![1; 1000], 2);
        let e = count_blocks(&x, &y, &[], 2).unwrap().estimate();
        assert_eq!(e.entropy, 0.0);
    }

    #[test]
    fn hyper_node_order_does_not_matter() {
        let n = 5000;
        let x = q("x", coin(5, "x", n), 2);
        let y = q("y", coin(5, "y", n), 2);
        let a = q("a", coin(5, "a", n), 2);
        let b = q("b", coin(5, "b", n), 2);
        let e1 = count_blocks(&x, &y, &[&a, &b], 1).unwrap().estimate();
        let e2 = count_blocks(&x, &y, &[&b, &a], 1).unwrap().estimate();
        assert!((e1.directed_info - e2.directed_info).abs() < 1e-12);
        assert!((e1.entropy - e2.entropy).abs() < 1e-12);
    }
}
