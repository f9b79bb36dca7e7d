//! Reader and writer for the sparse libSVM text format:
//! `label idx:val idx:val ...` with 1-based, strictly increasing indices.

use std::io::BufRead;

use kkm_core::linalg::DenseMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseOptions {
    /// Declared feature count; indices beyond it are rejected. Inferred from
    /// the largest index when absent.
    pub dim: Option<usize>,
    /// Keep a seeded uniform sample of at most this many features.
    pub d_limit: Option<usize>,
    /// Keep a seeded uniform sample of at most this many points.
    pub n_limit: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LibsvmData {
    pub points: DenseMatrix<f64>,
    pub labels: Vec<f64>,
}

impl LibsvmData {
    /// Labels mapped to dense class ids in ascending label order.
    pub fn class_ids(&self) -> Vec<u32> {
        let mut distinct: Vec<f64> = self.labels.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        self.labels
            .iter()
            .map(|l| distinct.partition_point(|d| d.total_cmp(l).is_lt()) as u32)
            .collect()
    }
}

fn parse_error(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Sorted seeded sample of `amount` indices out of `len`, or all of them.
fn sample_sorted(len: usize, amount: Option<usize>, seed: u64) -> Option<Vec<usize>> {
    let amount = amount?;
    if amount >= len {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = sample(&mut rng, len, amount).into_vec();
    keep.sort_unstable();
    Some(keep)
}

pub fn parse_libsvm(reader: impl BufRead, opts: &ParseOptions) -> Result<LibsvmData, CliError> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| parse_error(lineno, e.to_string()))?;
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let label: f64 = label
            .parse()
            .map_err(|_| parse_error(lineno, format!("malformed label '{label}'")))?;
        let mut entries = Vec::new();
        let mut prev = 0;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(lineno, format!("malformed token '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_error(lineno, format!("malformed index in '{tok}'")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| parse_error(lineno, format!("malformed value in '{tok}'")))?;
            if idx == 0 {
                return Err(parse_error(lineno, "indices are 1-based"));
            }
            if idx <= prev {
                return Err(parse_error(lineno, format!("index {idx} does not increase after {prev}")));
            }
            if let Some(dim) = opts.dim {
                if idx > dim {
                    return Err(parse_error(lineno, format!("index {idx} exceeds dimension {dim}")));
                }
            }
            prev = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(prev);
        labels.push(label);
        rows.push(entries);
    }

    let d = opts.dim.unwrap_or(max_index);
    let n = rows.len();
    let row_keep = sample_sorted(n, opts.n_limit, opts.seed);
    let col_keep = sample_sorted(d, opts.d_limit, opts.seed.wrapping_add(1));
    let row_ids: Vec<usize> = row_keep.unwrap_or_else(|| (0..n).collect());
    let (out_d, col_map) = match col_keep {
        Some(cols) => {
            let mut map = vec![usize::MAX; d];
            for (new, &old) in cols.iter().enumerate() {
                map[old] = new;
            }
            (cols.len(), map)
        }
        None => (d, (0..d).collect()),
    };

    let mut data = vec![0.0; row_ids.len() * out_d];
    for (r, &src) in row_ids.iter().enumerate() {
        for &(c, v) in &rows[src] {
            let dst = col_map[c];
            if dst != usize::MAX {
                data[r * out_d + dst] = v;
            }
        }
    }
    Ok(LibsvmData {
        points: DenseMatrix::new(row_ids.len(), out_d, data)?,
        labels: row_ids.iter().map(|&r| labels[r]).collect(),
    })
}

/// Writes every entry whose bit pattern is not `+0.0`; values use the
/// shortest representation that parses back to the same bits.
pub fn write_libsvm(points: &DenseMatrix<f64>, labels: &[f64]) -> String {
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate().take(points.rows()) {
        out.push_str(&label.to_string());
        for (j, v) in points.row(i).iter().enumerate() {
            if v.to_bits() != 0 {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        out.push('\n');
    }
    out
}
