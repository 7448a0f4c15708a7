//! Flow series, CSV ingestion/export, quantization and super-alphabet symbols.
//!
//! The CSV layout is the exchange format for the whole crate: a header
//! `timestamp,<id1>,<id2>,...` followed by one row per sampling interval with
//! integer timestamps in seconds. Simulators write it, `ingest_csv` reads it.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sampling period when a file has a single row and no override.
pub const DEFAULT_PERIOD_SECONDS: u64 = 300;

/// One sensor's vehicle counts at a fixed sampling period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSeries {
    pub node_id: String,
    pub samples: Vec<u64>,
    pub period_seconds: u64,
}

impl FlowSeries {
    pub fn new(node_id: impl Into<String>, samples: Vec<u64>, period_seconds: u64) -> Result<Self> {
        let node_id = node_id.into();
        if node_id.is_empty() {
            return Err(Error::InvalidParameter("node id must be non-empty".into()));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientData(format!("series '{node_id}' is empty")));
        }
        if period_seconds == 0 {
            return Err(Error::InvalidParameter("period must be positive".into()));
        }
        Ok(Self { node_id, samples, period_seconds })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| v as f64).collect()
    }
}

/// Options for [`ingest_csv`].
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Overrides the period inferred from the first two timestamps.
    pub period_seconds: Option<u64>,
}

/// Reads the standard flow CSV. The first column holds timestamps; every
/// other column becomes one [`FlowSeries`] in header order.
pub fn ingest_csv<R: Read>(reader: R, options: &IngestOptions) -> Result<Vec<FlowSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "header needs a timestamp column and at least one sensor column".into(),
        });
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for id in &ids {
        if id.is_empty() {
            return Err(Error::Parse { line: 1, message: "empty sensor id in header".into() });
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Parse { line: 1, message: format!("duplicate sensor id '{id}'") });
        }
    }

    let mut timestamps: Vec<i64> = Vec::new();
    let mut columns: Vec<Vec<u64>> = vec![Vec::new(); ids.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let stamp = record.get(0).unwrap_or("");
        if stamp.is_empty() {
            return Err(Error::MissingCell { row: line, column: header[0].to_owned() });
        }
        let stamp: i64 = stamp.parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp '{stamp}' is not an integer"),
        })?;
        if let Some(&prev) = timestamps.last() {
            if stamp <= prev {
                return Err(Error::NonMonotoneTimestamps { row: line });
            }
        }
        timestamps.push(stamp);

        for (col, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(Error::MissingCell { row: line, column: ids[col].clone() });
            }
            columns[col].push(parse_count(cell).ok_or_else(|| Error::Parse {
                line,
                message: format!("column '{}': '{cell}' is not a non-negative number", ids[col]),
            })?);
        }
    }

    if timestamps.is_empty() {
        return Err(Error::InsufficientData("CSV has no data rows".into()));
    }
    let period = match (options.period_seconds, timestamps.len()) {
        (Some(p), _) => p,
        (None, 1) => DEFAULT_PERIOD_SECONDS,
        (None, _) => (timestamps[1] - timestamps[0]) as u64,
    };

    ids.into_iter()
        .zip(columns)
        .map(|(id, samples)| FlowSeries::new(id, samples, period))
        .collect()
}

fn parse_count(cell: &str) -> Option<u64> {
    if let Ok(v) = cell.parse::<u64>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    (v.is_finite() && v >= 0.0).then(|| v.floor() as u64)
}

/// Writes series in the standard CSV layout, timestamps starting at `start`.
pub fn write_csv<W: Write>(writer: W, series: &[FlowSeries], start: i64) -> Result<()> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to write".into()))?;
    check_equal_lengths(series)?;
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Internal(format!("csv write failed: {e}"));
    let mut header = vec!["timestamp".to_owned()];
    header.extend(series.iter().map(|s| s.node_id.clone()));
    wtr.write_record(&header).map_err(io)?;
    let mut row = Vec::with_capacity(series.len() + 1);
    for i in 0..first.len() {
        row.clear();
        row.push((start + i as i64 * first.period_seconds as i64).to_string());
        row.extend(series.iter().map(|s| s.samples[i].to_string()));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::Internal(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub(crate) fn check_equal_lengths(series: &[FlowSeries]) -> Result<usize> {
    let n = series.first().map_or(0, FlowSeries::len);
    if let Some(bad) = series.iter().find(|s| s.len() != n) {
        return Err(Error::LengthMismatch(format!(
            "series '{}' has {} samples, expected {n}",
            bad.node_id,
            bad.len()
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerStrategy {
    #[default]
    EqualWidth,
    EqualFrequency,
}

/// Thresholds mapping raw flows onto `levels` symbols.
///
/// Bins are right-closed: a value equal to an edge falls into the lower bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub levels: u32,
    pub strategy: QuantizerStrategy,
    pub bin_edges: Vec<f64>,
}

impl QuantizerSpec {
    /// Builds a spec from explicit edges (e.g. fixed thresholds for real data).
    pub fn fixed(bin_edges: Vec<f64>) -> Result<Self> {
        let spec = Self {
            levels: bin_edges.len() as u32 + 1,
            strategy: QuantizerStrategy::EqualWidth,
            bin_edges,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidParameter(format!("levels must be >= 2, got {}", self.levels)));
        }
        if self.bin_edges.len() != self.levels as usize - 1 {
            return Err(Error::InvalidParameter(format!(
                "{} levels need {} edges, got {}",
                self.levels,
                self.levels - 1,
                self.bin_edges.len()
            )));
        }
        if self.bin_edges.iter().any(|e| !e.is_finite())
            || self.bin_edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter("bin edges must be finite and strictly increasing".into()));
        }
        Ok(())
    }

    /// Number of edges strictly below `value`.
    pub fn symbol(&self, value: f64) -> u32 {
        self.bin_edges.partition_point(|&e| e < value) as u32
    }
}

/// Symbol sequence over `{0..levels-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedSeries {
    pub node_id: String,
    pub symbols: Vec<u32>,
    pub spec: QuantizerSpec,
}

impl QuantizedSeries {
    pub fn alphabet(&self) -> u32 {
        self.spec.levels
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Wraps a raw symbol sequence, checking every symbol against `levels`.
    pub fn from_symbols(node_id: impl Into<String>, symbols: Vec<u32>, levels: u32) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidParameter(format!("levels must be >= 2, got {levels}")));
        }
        if let Some(&s) = symbols.iter().find(|&&s| s >= levels) {
            return Err(Error::SymbolOutOfRange { symbol: s, alphabet: levels });
        }
        let spec = QuantizerSpec {
            levels,
            strategy: QuantizerStrategy::EqualWidth,
            bin_edges: (1..levels).map(|i| i as f64 - 0.5).collect(),
        };
        Ok(Self { node_id: node_id.into(), symbols, spec })
    }
}

/// Fits quantizer thresholds to one series.
pub fn fit_quantizer(series: &FlowSeries, levels: u32, strategy: QuantizerStrategy) -> Result<QuantizerSpec> {
    if levels < 2 {
        return Err(Error::InvalidParameter(format!("levels must be >= 2, got {levels}")));
    }
    let min = *series.samples.iter().min().expect("FlowSeries is non-empty") as f64;
    let max = *series.samples.iter().max().expect("FlowSeries is non-empty") as f64;
    let r = levels as usize;

    let bin_edges = match strategy {
        QuantizerStrategy::EqualWidth if max > min => {
            let width = (max - min) / r as f64;
            (1..r).map(|i| min + width * i as f64).collect()
        }
        // Constant series: unit-spaced edges above the value keep every sample in bin 0.
        QuantizerStrategy::EqualWidth => (1..r).map(|i| min + i as f64).collect(),
        QuantizerStrategy::EqualFrequency => {
            if max == min {
                return Err(Error::InvalidParameter(format!(
                    "equal-frequency quantization of constant series '{}'",
                    series.node_id
                )));
            }
            equal_frequency_edges(&series.samples, r)
        }
    };
    let spec = QuantizerSpec { levels, strategy, bin_edges };
    spec.validate()?;
    Ok(spec)
}

/// Edges at the `i/r` quantiles, placed midway between neighbouring distinct
/// values. With ties, each edge snaps to the distinct-value boundary whose
/// cumulative count is closest to the target; when boundaries run out an
/// empty bin is created just above the previous edge.
fn equal_frequency_edges(samples: &[u64], r: usize) -> Vec<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();

    // boundaries[j] = (number of samples <= distinct value j, midpoint to next distinct value)
    let mut boundaries: Vec<(usize, f64)> = Vec::new();
    for i in 1..n {
        if sorted[i] != sorted[i - 1] {
            boundaries.push((i, (sorted[i - 1] as f64 + sorted[i] as f64) / 2.0));
        }
    }

    let mut edges = Vec::with_capacity(r - 1);
    let mut next = 0usize;
    for i in 1..r {
        let target = i * n / r;
        // leave enough boundaries for the edges still to place
        let last = boundaries.len().saturating_sub(r - 1 - i).max(next + 1).min(boundaries.len());
        let pick = (next..last).min_by_key(|&j| boundaries[j].0.abs_diff(target));
        match pick {
            Some(j) => {
                edges.push(boundaries[j].1);
                next = j + 1;
            }
            None => {
                let prev = edges.last().copied().unwrap_or(sorted[n - 1] as f64);
                edges.push(prev + 0.5);
            }
        }
    }
    edges
}

/// Maps every sample to its bin.
pub fn quantize(series: &FlowSeries, spec: &QuantizerSpec) -> QuantizedSeries {
    QuantizedSeries {
        node_id: series.node_id.clone(),
        symbols: series.samples.iter().map(|&v| spec.symbol(v as f64)).collect(),
        spec: spec.clone(),
    }
}

/// Mixed-radix encoding with the first symbol least significant:
/// `s0 + size0 * (s1 + size1 * (s2 + ...))`.
pub fn combine_symbols(symbols: &[u32], sizes: &[u32]) -> Result<u64> {
    if symbols.len() != sizes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} symbols but {} alphabet sizes",
            symbols.len(),
            sizes.len()
        )));
    }
    let mut code: u64 = 0;
    for (&s, &size) in symbols.iter().zip(sizes).rev() {
        if s >= size {
            return Err(Error::SymbolOutOfRange { symbol: s, alphabet: size });
        }
        code = code
            .checked_mul(size as u64)
            .and_then(|c| c.checked_add(s as u64))
            .ok_or_else(|| Error::InvalidParameter("combined alphabet overflows 64 bits".into()))?;
    }
    Ok(code)
}

/// Inverse of [`combine_symbols`].
pub fn split_symbols(mut code: u64, sizes: &[u32]) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 {
            return Err(Error::InvalidParameter("alphabet size 0".into()));
        }
        out.push((code % size as u64) as u32);
        code /= size as u64;
    }
    if code != 0 {
        return Err(Error::InvalidParameter("code exceeds the product of alphabet sizes".into()));
    }
    Ok(out)
}

/// Combines several quantized series into one super-alphabet stream.
///
/// Returns the stream and its alphabet size. An empty list yields the
/// constant unit-alphabet stream of length `n`.
pub fn combine_series(series: &[&QuantizedSeries], n: usize) -> Result<(Vec<u32>, u32)> {
    let mut alphabet: u64 = 1;
    for s in series {
        if s.len() != n {
            return Err(Error::LengthMismatch(format!(
                "series '{}' has {} symbols, expected {n}",
                s.node_id,
                s.len()
            )));
        }
        alphabet = alphabet
            .checked_mul(s.alphabet() as u64)
            .filter(|&a| a <= u32::MAX as u64)
            .ok_or(Error::HyperNodeTooLarge { size: u128::MAX, cap: u32::MAX as u128 })?;
    }
    let mut out = vec![0u32; n];
    // Horner from the last series so the first is least significant.
    for s in series.iter().rev() {
        let size = s.alphabet();
        for (o, &sym) in out.iter_mut().zip(&s.symbols) {
            *o = *o * size + sym;
        }
    }
    Ok((out, alphabet as u32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(samples: Vec<u64>) -> FlowSeries {
        FlowSeries::new("s", samples, 300).unwrap()
    }

    #[test]
    fn ingest_maps_columns_in_header_order() {
        let csv = "t,s1,s2,s3\n0,1,2,3\n300,4,5,6\n600,7,8,9\n900,1,1,1\n";
        let series = ingest_csv(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(series.len(), 3);
        assert!(series.iter().all(|s| s.len() == 4 && s.period_seconds == 300));
        assert_eq!(series[1].node_id, "s2");
        assert_eq!(series[1].samples, vec![2, 5, 8, 1]);
    }

    #[test]
    fn ingest_floors_reals_and_honours_period_override() {
        let csv = "timestamp,a\n0,2.7\n60,0.2\n";
        let opts = IngestOptions { period_seconds: Some(300) };
        let series = ingest_csv(csv.as_bytes(), &opts).unwrap();
        assert_eq!(series[0].samples, vec![2, 0]);
        assert_eq!(series[0].period_seconds, 300);
        let series = ingest_csv(csv.as_bytes(), &IngestOptions::default()).unwrap();
        assert_eq!(series[0].period_seconds, 60);
    }

    #[test]
    fn ingest_reports_missing_cell_position() {
        let csv = "timestamp,a,b\n0,1,2\n300,,2\n";
        let err = ingest_csv(csv.as_bytes(), &IngestOptions::default()).unwrap_err();
        assert_eq!(err, Error::MissingCell { row: 3, column: "a".into() });
    }

    #[test]
    fn ingest_rejects_bad_rows() {
        let opts = IngestOptions::default();
        let short = "timestamp,a,b\n0,1\n";
        assert!(matches!(ingest_csv(short.as_bytes(), &opts), Err(Error::Parse { line: 2, .. })));
        let negative = "timestamp,a\n0,-1\n";
        assert!(matches!(ingest_csv(negative.as_bytes(), &opts), Err(Error::Parse { line: 2, .. })));
        let backwards = "timestamp,a\n300,1\n0,1\n";
        assert_eq!(
            ingest_csv(backwards.as_bytes(), &opts).unwrap_err(),
            Error::NonMonotoneTimestamps { row: 3 }
        );
        let dup = "timestamp,a,a\n0,1,1\n";
        assert!(ingest_csv(dup.as_bytes(), &opts).is_err());
    }

    #[test]
    fn equal_width_edges_split_range() {
        let spec = fit_quantizer(&fs((0..=100).collect()), 4, QuantizerStrategy::EqualWidth).unwrap();
        assert_eq!(spec.bin_edges, vec![25.0, 50.0, 75.0]);
        assert_eq!(spec.symbol(60.0), 2);
        assert_eq!(spec.symbol(50.0), 1);
        assert_eq!(spec.symbol(100.0), 3);
    }

    #[test]
    fn two_point_series() {
        let s = fs(vec![0, 10, 0, 10]);
        let spec = fit_quantizer(&s, 2, QuantizerStrategy::EqualWidth).unwrap();
        assert_eq!(spec.bin_edges, vec![5.0]);
        assert_eq!(quantize(&s, &spec).symbols, vec![0, 1, 0, 1]);
    }

    #[test]
    fn constant_series_maps_to_zero() {
        let s = fs(vec![7; 10]);
        let spec = fit_quantizer(&s, 2, QuantizerStrategy::EqualWidth).unwrap();
        assert!(quantize(&s, &spec).symbols.iter().all(|&v| v == 0));
        assert!(fit_quantizer(&s, 2, QuantizerStrategy::EqualFrequency).is_err());
        assert!(fit_quantizer(&s, 1, QuantizerStrategy::EqualWidth).is_err());
    }

    #[test]
    fn below_first_edge_is_all_zero() {
        let spec = QuantizerSpec::fixed(vec![25.0, 50.0, 75.0]).unwrap();
        let q = quantize(&fs(vec![0, 3, 25, 12]), &spec);
        assert_eq!(q.symbols, vec![0; 4]);
    }

    #[test]
    fn equal_frequency_with_ties_stays_increasing() {
        let s = fs(vec![1, 1, 1, 1, 1, 1, 2, 3]);
        let spec = fit_quantizer(&s, 4, QuantizerStrategy::EqualFrequency).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.bin_edges.len(), 3);
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_symbols(&[1, 0], &[2, 2]).unwrap(), 1);
        assert_eq!(combine_symbols(&[0, 0, 0], &[3, 5, 7]).unwrap(), 0);
        assert_eq!(combine_symbols(&[1, 1, 1], &[2, 2, 2]).unwrap(), 7);
        assert!(matches!(
            combine_symbols(&[2, 0], &[2, 2]),
            Err(Error::SymbolOutOfRange { symbol: 2, alphabet: 2 })
        ));
        assert!(split_symbols(8, &[2, 2, 2]).is_err());
    }

    #[test]
    fn combine_split_exhaustive_up_to_444() {
        for a in 1..=4u32 {
            for b in 1..=4u32 {
                for c in 1..=4u32 {
                    let sizes = [a, b, c];
                    for code in 0..(a * b * c) as u64 {
                        let parts = split_symbols(code, &sizes).unwrap();
                        assert_eq!(combine_symbols(&parts, &sizes).unwrap(), code);
                    }
                }
            }
        }
    }

    #[test]
    fn combine_series_matches_combine_symbols() {
        let a = QuantizedSeries::from_symbols("a", vec![0, 1, 2], 3).unwrap();
        let b = QuantizedSeries::from_symbols("b", vec![1, 0, 1], 2).unwrap();
        let (w, size) = combine_series(&[&a, &b], 3).unwrap();
        assert_eq!(size, 6);
        for i in 0..3 {
            let expect = combine_symbols(&[a.symbols[i], b.symbols[i]], &[3, 2]).unwrap();
            assert_eq!(w[i] as u64, expect);
        }
        let (unit, size) = combine_series(&[], 4).unwrap();
        assert_eq!((unit, size), (vec![0; 4], 1));
    }
}
