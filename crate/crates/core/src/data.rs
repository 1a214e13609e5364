//! Shared domain types: labelled feature tables, class priors and
//! row-stochastic probability matrices.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a [`Prior`].
pub const PRIOR_SUM_TOL: f64 = 1e-12;
/// Tolerance on row sums of a [`ProbMatrix`].
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Ingested rows whose sum is off by less than this are renormalized.
pub const RENORMALIZE_LIMIT: f64 = 1e-6;

/// Feature matrix with optional labels and per-example weights.
///
/// Features are stored row-major, `len() * dim()` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Option<Vec<usize>>,
    weights: Option<Vec<f64>>,
    class_count: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Option<Vec<usize>>,
        weights: Option<Vec<f64>>,
        class_count: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension must be at least 1".into()));
        }
        if class_count < 2 {
            return Err(Error::InvalidDataset(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        if !features.len().is_multiple_of(dim) {
            return Err(Error::InvalidDataset(format!(
                "{} feature values do not form rows of width {dim}",
                features.len()
            )));
        }
        let n = features.len() / dim;
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: labels.len(),
                });
            }
            if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    class_count,
                });
            }
        }
        if let Some(weights) = &weights {
            if weights.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: weights.len(),
                });
            }
            if let Some(row) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::InvalidDataset(format!(
                    "weight at row {row} is {}, weights must be positive",
                    weights[row]
                )));
            }
        }
        Ok(Self {
            features,
            dim,
            labels,
            weights,
            class_count,
        })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>, class_count: usize) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let features = rows.iter().flatten().copied().collect();
        Self::new(features, dim, labels, None, class_count)
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.features[n * self.dim..(n + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.features.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels().ok_or(Error::MissingLabels)
    }

    /// Per-example weights, or all ones when none are attached.
    pub fn weights_or_unit(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.len()])
    }

    pub fn with_weights(mut self, weights: Option<Vec<f64>>) -> Result<Self> {
        let features = std::mem::take(&mut self.features);
        Self::new(features, self.dim, self.labels, weights, self.class_count)
    }

    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    /// First `n` rows (all rows if `n` exceeds the length).
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            features: self.features[..n * self.dim].to_vec(),
            dim: self.dim,
            labels: self.labels.as_ref().map(|l| l[..n].to_vec()),
            weights: self.weights.as_ref().map(|w| w[..n].to_vec()),
            class_count: self.class_count,
        }
    }

    /// Rows at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            dim: self.dim,
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            weights: self.weights.as_ref().map(|w| indices.iter().map(|&i| w[i]).collect()),
            class_count: self.class_count,
        }
    }

    /// Per-class example counts `n_i`.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let labels = self.require_labels()?;
        let mut counts = vec![0; self.class_count];
        for &l in labels {
            counts[l] += 1;
        }
        Ok(counts)
    }
}

/// Class abundances on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Prior(Vec<f64>);

impl Prior {
    /// Validates `p`: non-negative, finite, summing to 1 within 1e-12.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidPrior("no classes".into()));
        }
        if let Some(i) = p.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidPrior(format!("entry {i} is {}", p[i])));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::InvalidPrior(format!("entries sum to {sum}")));
        }
        Ok(Self(p))
    }

    /// Scales non-negative abundances so they sum to one.
    pub fn normalized(p: Vec<f64>) -> Result<Self> {
        if let Some(i) = p.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidPrior(format!("entry {i} is {}", p[i])));
        }
        let sum: f64 = p.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidPrior("all entries are zero".into()));
        }
        Self::new(p.into_iter().map(|v| v / sum).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_vec_unchecked(p: Vec<f64>) -> Self {
        debug_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self(p)
    }

    /// Mean absolute difference between two priors of equal length.
    pub fn mean_abs_deviation(&self, other: &Prior) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.0.len() as f64
    }
}

impl Index<usize> for Prior {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Prior {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        Prior::new(p)
    }
}

impl From<Prior> for Vec<f64> {
    fn from(p: Prior) -> Self {
        p.0
    }
}

/// `P(i)` as the label frequencies `n_i / N`.
pub fn prior_from_labels(ds: &Dataset) -> Result<Prior> {
    if ds.is_empty() {
        return Err(Error::Empty);
    }
    let counts = ds.class_counts()?;
    let n = ds.len() as f64;
    Ok(Prior::from_vec_unchecked(
        counts.into_iter().map(|c| c as f64 / n).collect(),
    ))
}

/// Inverse-fraction class weights `w_i = 1 / P(i)`.
pub fn balancing_weights(prior: &Prior) -> Result<Vec<f64>> {
    prior
        .as_slice()
        .iter()
        .enumerate()
        .map(|(class, &p)| {
            if p > 0.0 {
                Ok(1.0 / p)
            } else {
                Err(Error::ZeroPrior { class })
            }
        })
        .collect()
}

/// Expands class weights to one weight per labelled example.
pub fn per_example_weights(ds: &Dataset, class_weights: &[f64]) -> Result<Vec<f64>> {
    if class_weights.len() != ds.class_count() {
        return Err(Error::DimensionMismatch {
            expected: ds.class_count(),
            got: class_weights.len(),
        });
    }
    Ok(ds.require_labels()?.iter().map(|&l| class_weights[l]).collect())
}

/// Row-stochastic `N x K` matrix of class probabilities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    data: Vec<f64>,
    k: usize,
}

impl ProbMatrix {
    /// Strict constructor: entries in `[0, 1]`, rows summing to 1 within 1e-9.
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(k, &data)?;
        let diag = ProbDiagnostics::of(k, &data, ROW_SUM_TOL);
        if !diag.passed {
            return Err(Error::InvalidProbabilities(diag.describe()));
        }
        Ok(Self { data, k })
    }

    /// Ingestion constructor: rows off by less than [`RENORMALIZE_LIMIT`]
    /// are rescaled to sum to one; anything worse is rejected.
    pub fn new_renormalizing(k: usize, mut data: Vec<f64>) -> Result<Self> {
        check_shape(k, &data)?;
        if let Some(i) = data.iter().position(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::InvalidProbabilities(format!(
                "row {} has entry {}",
                i / k,
                data[i]
            )));
        }
        for (n, row) in data.chunks_exact_mut(k).enumerate() {
            let sum: f64 = row.iter().sum();
            let dev = (sum - 1.0).abs();
            if dev >= RENORMALIZE_LIMIT {
                return Err(Error::InvalidProbabilities(format!(
                    "row {n} sums to {sum}"
                )));
            }
            if dev > ROW_SUM_TOL {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(Self { data, k })
    }

    pub(crate) fn from_vec_unchecked(k: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % k, 0);
        Self { data, k }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: bad.len(),
            });
        }
        Self::new(k, rows.iter().flatten().copied().collect())
    }

    pub fn empty(k: usize) -> Self {
        Self { data: Vec::new(), k }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.k
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.k..(n + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Column `i` as a vector.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows().map(|r| r[i]).collect()
    }

    /// Rows at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.k);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { data, k: self.k }
    }
}

fn check_shape(k: usize, data: &[f64]) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidProbabilities("zero classes".into()));
    }
    if !data.len().is_multiple_of(k) {
        return Err(Error::InvalidProbabilities(format!(
            "{} entries do not form rows of width {k}",
            data.len()
        )));
    }
    Ok(())
}

/// Summary of how far a set of rows is from being row-stochastic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbDiagnostics {
    pub rows: usize,
    pub max_row_deviation: f64,
    pub worst_row: Option<usize>,
    pub min_entry: Option<f64>,
    pub max_entry: Option<f64>,
    pub passed: bool,
}

impl ProbDiagnostics {
    /// Inspects `data` as rows of width `k`. Never fails; `passed` reports
    /// whether every entry is in `[0, 1]` and every row sum is within `tol`.
    pub fn of(k: usize, data: &[f64], tol: f64) -> Self {
        let mut max_dev = 0.0f64;
        let mut worst_row = None;
        let mut min_entry: Option<f64> = None;
        let mut max_entry: Option<f64> = None;
        let mut finite = true;
        for (n, row) in data.chunks_exact(k.max(1)).enumerate() {
            let dev = (row.iter().sum::<f64>() - 1.0).abs();
            if dev > max_dev || dev.is_nan() {
                max_dev = if dev.is_nan() { f64::INFINITY } else { dev };
                worst_row = Some(n);
            }
            for &v in row {
                finite &= v.is_finite();
                min_entry = Some(min_entry.map_or(v, |m| m.min(v)));
                max_entry = Some(max_entry.map_or(v, |m| m.max(v)));
            }
        }
        let in_range = min_entry.is_none_or(|m| m >= 0.0) && max_entry.is_none_or(|m| m <= 1.0);
        Self {
            rows: data.len() / k.max(1),
            max_row_deviation: max_dev,
            worst_row,
            min_entry,
            max_entry,
            passed: finite && in_range && max_dev <= tol,
        }
    }

    pub fn of_matrix(m: &ProbMatrix, tol: f64) -> Self {
        Self::of(m.class_count(), m.as_slice(), tol)
    }

    fn describe(&self) -> String {
        format!(
            "max row-sum deviation {:e} (row {:?}), entries in [{:?}, {:?}]",
            self.max_row_deviation, self.worst_row, self.min_entry, self.max_entry
        )
    }
}
