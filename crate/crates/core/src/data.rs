//! Sparse examples, datasets, and the LIBSVM text format.
//!
//! Feature indices are 0-based in memory and 1-based on disk.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A sparse feature vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from 0-based `(index, value)` pairs. Explicit zeros are dropped.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut indices: Vec<usize> = Vec::new();
        let mut values = Vec::new();
        let mut prev: Option<usize> = None;
        for (idx, val) in entries {
            if idx >= dim {
                return Err(Error::InvalidVector(format!(
                    "index {} exceeds dimension {dim}",
                    idx + 1
                )));
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(Error::InvalidVector(format!(
                    "index {} not strictly increasing",
                    idx + 1
                )));
            }
            prev = Some(idx);
            if !val.is_finite() {
                return Err(Error::InvalidVector(format!(
                    "non-finite value at index {}",
                    idx + 1
                )));
            }
            if val != 0.0 {
                indices.push(idx);
                values.push(val);
            }
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * x[j]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `y += alpha * self`
    #[inline]
    pub fn axpy_into(&self, alpha: f64, y: &mut [f64]) {
        for (j, v) in self.iter() {
            y[j] += alpha * v;
        }
    }

    /// `alpha * self`, dropping entries that become exactly zero.
    pub fn scaled(&self, alpha: f64) -> SparseVector {
        let (indices, values) = self
            .iter()
            .map(|(j, v)| (j, alpha * v))
            .filter(|(_, v)| *v != 0.0)
            .unzip();
        SparseVector {
            dim: self.dim,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (j, v) in self.iter() {
            out[j] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub label: f64,
}

/// An immutable collection of labeled examples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    dim: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>, dim: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.dim() != dim {
                return Err(Error::InvalidDataset(format!(
                    "example {} has dimension {}, expected {dim}",
                    i + 1,
                    ex.features.dim()
                )));
            }
            if !ex.label.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "example {} has a non-finite label",
                    i + 1
                )));
            }
        }
        Ok(Self { examples, dim })
    }

    /// Dense rows convenience constructor, mostly for small hand-built problems.
    pub fn from_dense_rows(rows: &[Vec<f64>], labels: &[f64]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let examples = rows
            .iter()
            .zip(labels)
            .map(|(r, &label)| {
                if r.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: r.len(),
                    });
                }
                Ok(Example {
                    features: SparseVector::from_dense(r),
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(examples, dim)
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &Example {
        &self.examples[i]
    }

    pub fn nnz(&self) -> usize {
        self.examples.iter().map(|e| e.features.nnz()).sum()
    }

    /// Fraction of stored entries over `n * p`.
    pub fn density(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.n() as f64 * self.dim as f64)
    }

    pub fn max_norm_sq(&self) -> f64 {
        self.examples
            .iter()
            .map(|e| e.features.norm_sq())
            .fold(0.0, f64::max)
    }

    /// Maps labels to `{-1, +1}` for classification: `0` becomes `-1`, any other
    /// value outside `{-1, +1}` is rejected.
    pub fn into_binary_labels(mut self) -> Result<Self> {
        for (i, ex) in self.examples.iter_mut().enumerate() {
            ex.label = match ex.label {
                1.0 => 1.0,
                -1.0 | 0.0 => -1.0,
                l => {
                    return Err(Error::InvalidDataset(format!(
                        "example {} has label {l}, expected -1, 0 or +1",
                        i + 1
                    )))
                }
            };
        }
        Ok(self)
    }

    /// Stable content fingerprint used to key cached reference solutions.
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.dim.hash(&mut h);
        for ex in &self.examples {
            ex.label.to_bits().hash(&mut h);
            ex.features.indices().hash(&mut h);
            for v in ex.features.values() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let examples = indices.iter().map(|&i| self.examples[i].clone()).collect();
        Self::new(examples, self.dim)
    }

    /// Seeded random halving. The first half (`ceil(n/2)` examples) is the
    /// training set; both halves keep the original relative order.
    pub fn split_half(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidDataset(format!(
                "cannot split a dataset with {n} example(s)"
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = n.div_ceil(2);
        let (train, test) = perm.split_at_mut(n_train);
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(train)?, self.subset(test)?))
    }

    pub fn parse_libsvm(text: &str) -> Result<Self> {
        Self::parse_libsvm_with_dim(text, None)
    }

    /// Parses LIBSVM text. `dim` overrides the inferred dimension (the largest
    /// index seen) and must be at least that large.
    pub fn parse_libsvm_with_dim(text: &str, dim: Option<usize>) -> Result<Self> {
        let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
        let mut max_index = 0usize;
        for (lineno, raw) in text.split('\n').enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = lineno + 1;
            let err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let mut tokens = line.split_whitespace();
            let label_tok = tokens.next().expect("non-empty line has a token");
            let label: f64 = label_tok
                .parse()
                .map_err(|_| err(format!("malformed label {label_tok:?}")))?;
            if !label.is_finite() {
                return Err(err(format!("non-finite label {label_tok:?}")));
            }
            let mut entries = Vec::new();
            let mut prev = 0usize;
            for tok in tokens {
                let (idx_s, val_s) = tok
                    .split_once(':')
                    .ok_or_else(|| err(format!("malformed token {tok:?}")))?;
                let idx: usize = idx_s
                    .parse()
                    .map_err(|_| err(format!("malformed index in {tok:?}")))?;
                if idx == 0 {
                    return Err(err(format!("indices are 1-based, got 0 in {tok:?}")));
                }
                if idx <= prev {
                    return Err(err(format!(
                        "index {idx} not strictly increasing (previous {prev})"
                    )));
                }
                prev = idx;
                let val: f64 = val_s
                    .parse()
                    .map_err(|_| err(format!("malformed value in {tok:?}")))?;
                if !val.is_finite() {
                    return Err(err(format!("non-finite value in {tok:?}")));
                }
                entries.push((idx - 1, val));
            }
            max_index = max_index.max(prev);
            rows.push((label, entries));
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = match dim {
            Some(d) if d < max_index => {
                return Err(Error::InvalidDataset(format!(
                    "dimension override {d} smaller than largest index {max_index}"
                )))
            }
            Some(d) => d,
            None => max_index,
        };
        let examples = rows
            .into_iter()
            .map(|(label, entries)| {
                Ok(Example {
                    features: SparseVector::new(dim, entries)?,
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(examples, dim)
    }

    /// Serializes to LIBSVM text using shortest round-trip float formatting.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            out.push_str(&format!("{}", ex.label));
            for (j, v) in ex.features.iter() {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
            out.push('\n');
        }
        out
    }
}

/// When to standardize feature columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Standardize {
    Never,
    /// Only when more than half of the entries are stored (dense data).
    #[default]
    IfDense,
    Always,
}

const DENSE_THRESHOLD: f64 = 0.5;

/// Column statistics fitted on one dataset and applied to others, followed
/// by appending a constant bias coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    dim: usize,
    /// `(mean, std)` per column; `None` when standardization is off.
    columns: Option<Vec<(f64, f64)>>,
}

impl Preprocessor {
    pub fn fit(data: &Dataset, mode: Standardize) -> Self {
        let active = match mode {
            Standardize::Never => false,
            Standardize::Always => true,
            Standardize::IfDense => data.density() > DENSE_THRESHOLD,
        };
        let columns = active.then(|| column_stats(data));
        Self {
            dim: data.dim(),
            columns,
        }
    }

    pub fn standardizes(&self) -> bool {
        self.columns.is_some()
    }

    /// Output has dimension `p + 1`; the last coordinate is `1.0`.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: data.dim(),
            });
        }
        let out_dim = self.dim + 1;
        let examples = data
            .examples()
            .iter()
            .map(|ex| {
                let mut row: Vec<(usize, f64)> = match &self.columns {
                    None => ex.features.iter().collect(),
                    Some(cols) => {
                        let dense = ex.features.to_dense();
                        dense
                            .iter()
                            .zip(cols)
                            .enumerate()
                            .map(|(j, (&v, &(mean, std)))| {
                                let z = if std > 0.0 { (v - mean) / std } else { 0.0 };
                                (j, z)
                            })
                            .collect()
                    }
                };
                row.push((self.dim, 1.0));
                Ok(Example {
                    features: SparseVector::new(out_dim, row)?,
                    label: ex.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(examples, out_dim)
    }
}

/// Population mean and standard deviation of each column (implicit zeros included).
fn column_stats(data: &Dataset) -> Vec<(f64, f64)> {
    let n = data.n() as f64;
    let mut sum = vec![0.0; data.dim()];
    for ex in data.examples() {
        ex.features.axpy_into(1.0, &mut sum);
    }
    let means: Vec<f64> = sum.iter().map(|s| s / n).collect();
    // two-pass variance; implicit zeros contribute mean^2 each
    let mut ssq = vec![0.0; data.dim()];
    let mut nnz = vec![0usize; data.dim()];
    for ex in data.examples() {
        for (j, v) in ex.features.iter() {
            ssq[j] += (v - means[j]) * (v - means[j]);
            nnz[j] += 1;
        }
    }
    means
        .iter()
        .zip(ssq.iter().zip(&nnz))
        .map(|(&m, (&s, &k))| {
            let zeros = data.n() - k;
            let var = (s + zeros as f64 * m * m) / n;
            (m, var.sqrt())
        })
        .collect()
}

/// Fits column statistics on `data` and applies them to it, then appends the bias.
pub fn standardize_and_bias(data: &Dataset, mode: Standardize) -> Result<Dataset> {
    Preprocessor::fit(data, mode).transform(data)
}
