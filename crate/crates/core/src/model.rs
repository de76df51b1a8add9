//! Representation matrices, prediction rules in matrix form, finite priors,
//! and the seeded sampling primitives shared by the rest of the crate.
//!
//! A [`RepresentationMatrix`] `P` is row-stochastic: `P[i, o]` is the
//! probability that user `i` emits representation `o`. A
//! [`PredictionMatrix`] `A` is column-stochastic: `A[i, o]` is the probability
//! that a (possibly randomized) attack maps observation `o` to user `i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::rng::{SeedSpec, Stream, StreamLabel};

/// Allowed drift of a row (or column) sum away from 1.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Loaders renormalize rows whose drift is at most this, and reject the rest.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A single reason a matrix fails validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    Ragged { row: usize, len: usize, expected: usize },
    NonFinite { row: usize, col: usize },
    Negative { row: usize, col: usize, value: f64 },
    AboveOne { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    ColumnSum { col: usize, sum: f64 },
    LabelCount { labels: usize, columns: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "matrix has no rows or no columns"),
            Violation::Ragged { row, len, expected } => {
                write!(f, "row {row} has {len} entries, expected {expected}")
            }
            Violation::NonFinite { row, col } => write!(f, "entry ({row}, {col}) is not finite"),
            Violation::Negative { row, col, value } => {
                write!(f, "entry ({row}, {col}) = {value} is negative")
            }
            Violation::AboveOne { row, col, value } => {
                write!(f, "entry ({row}, {col}) = {value} exceeds 1")
            }
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::ColumnSum { col, sum } => write!(f, "column {col} sums to {sum}"),
            Violation::LabelCount { labels, columns } => {
                write!(f, "{labels} column labels for {columns} columns")
            }
        }
    }
}

fn check_entries(rows: &[Vec<f64>]) -> (Vec<Violation>, usize) {
    let mut out = Vec::new();
    let m = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || m == 0 {
        out.push(Violation::Empty);
        return (out, m);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            out.push(Violation::Ragged {
                row: i,
                len: row.len(),
                expected: m,
            });
            continue;
        }
        for (o, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFinite { row: i, col: o });
            } else if v < 0.0 {
                out.push(Violation::Negative {
                    row: i,
                    col: o,
                    value: v,
                });
            } else if v > 1.0 + SUM_TOLERANCE {
                out.push(Violation::AboveOne {
                    row: i,
                    col: o,
                    value: v,
                });
            }
        }
    }
    (out, m)
}

/// Validates raw rows as a representation matrix. An empty result means the
/// rows form a valid row-stochastic matrix.
pub fn validate_rows(rows: &[Vec<f64>]) -> Vec<Violation> {
    let (mut out, m) = check_entries(rows);
    if out.iter().any(|v| matches!(v, Violation::Empty)) {
        return out;
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            continue;
        }
        let sum: f64 = row.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > SUM_TOLERANCE {
            out.push(Violation::RowSum { row: i, sum });
        }
    }
    out
}

/// Validates raw rows as a prediction matrix (column-stochastic).
pub fn validate_prediction_rows(rows: &[Vec<f64>]) -> Vec<Violation> {
    let (mut out, m) = check_entries(rows);
    if !out.is_empty() {
        return out;
    }
    for o in 0..m {
        let sum: f64 = rows.iter().map(|r| r[o]).sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            out.push(Violation::ColumnSum { col: o, sum });
        }
    }
    out
}

/// Row-stochastic `n x m` matrix, stored dense and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
    column_labels: Option<Vec<String>>,
}

impl RepresentationMatrix {
    /// Strict constructor: every row must sum to 1 within [`SUM_TOLERANCE`].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let violations = validate_rows(&rows);
        if !violations.is_empty() {
            return Err(ReidError::InvalidMatrix(violations));
        }
        let n = rows.len();
        let m = rows[0].len();
        Ok(Self {
            n,
            m,
            data: rows.into_iter().flatten().collect(),
            column_labels: None,
        })
    }

    /// Loader-side constructor: rows whose sum drifts from 1 by at most
    /// [`RENORMALIZE_TOLERANCE`] are rescaled, larger drift is rejected.
    pub fn from_rows_renormalized(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        let (violations, _) = check_entries(&rows);
        if !violations.is_empty() {
            return Err(ReidError::InvalidMatrix(violations));
        }
        let mut bad = Vec::new();
        for (i, row) in rows.iter_mut().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                bad.push(Violation::RowSum { row: i, sum });
            } else if (sum - 1.0).abs() > SUM_TOLERANCE {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        if !bad.is_empty() {
            return Err(ReidError::InvalidMatrix(bad));
        }
        Self::from_rows(rows)
    }

    /// Builds from a row-major buffer of length `n * m`.
    pub fn from_dense(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(ReidError::InvalidMatrix(vec![Violation::Empty]));
        }
        if data.len() != n * m {
            return Err(ReidError::ShapeMismatch {
                expected: (n, m),
                actual: (data.len() / m, m),
            });
        }
        let rows = data.chunks(m).map(<[f64]>::to_vec).collect();
        Self::from_rows(rows)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.m {
            return Err(ReidError::InvalidMatrix(vec![Violation::LabelCount {
                labels: labels.len(),
                columns: self.m,
            }]));
        }
        self.column_labels = Some(labels);
        Ok(self)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    #[inline]
    pub fn get(&self, i: usize, o: usize) -> f64 {
        self.data[i * self.m + o]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.m)
    }

    pub fn column(&self, o: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.get(i, o))
    }

    pub fn column_labels(&self) -> Option<&[String]> {
        self.column_labels.as_deref()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Re-runs validation; always empty for a constructed matrix.
    pub fn validate(&self) -> Vec<Violation> {
        validate_rows(&self.to_rows())
    }
}

/// Column-stochastic `n x m` matrix: `A[i, o] = Pr(rule(o) = i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl PredictionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let violations = validate_prediction_rows(&rows);
        if !violations.is_empty() {
            return Err(ReidError::InvalidMatrix(violations));
        }
        let n = rows.len();
        let m = rows[0].len();
        Ok(Self {
            n,
            m,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Every column is the uniform distribution over users.
    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(ReidError::InvalidMatrix(vec![Violation::Empty]));
        }
        Ok(Self {
            n,
            m,
            data: vec![1.0 / n as f64; n * m],
        })
    }

    /// Deterministic rule mapping observation `o` to user `assignment[o]`.
    pub fn deterministic(n: usize, assignment: &[usize]) -> Result<Self> {
        let m = assignment.len();
        if n == 0 || m == 0 {
            return Err(ReidError::InvalidMatrix(vec![Violation::Empty]));
        }
        let mut data = vec![0.0; n * m];
        for (o, &i) in assignment.iter().enumerate() {
            if i >= n {
                return Err(ReidError::IndexOutOfRange { index: i, limit: n });
            }
            data[i * m + o] = 1.0;
        }
        Ok(Self { n, m, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    #[inline]
    pub fn get(&self, i: usize, o: usize) -> f64 {
        self.data[i * self.m + o]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    /// Draws the rule's prediction for observation `o`.
    pub fn predict(&self, o: usize, stream: &mut Stream) -> usize {
        let u = stream.next_f64();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for i in 0..self.n {
            let a = self.get(i, o);
            if a > 0.0 {
                acc += a;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// One representation index per user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationVector {
    values: Vec<usize>,
}

impl ObservationVector {
    pub fn new(values: Vec<usize>, m: usize) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|&&v| v >= m) {
            return Err(ReidError::IndexOutOfRange { index: bad, limit: m });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorComponent {
    pub weight: f64,
    pub matrix: RepresentationMatrix,
}

/// Finite-support distribution over representation matrices of one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct FinitePrior {
    components: Vec<PriorComponent>,
}

impl FinitePrior {
    pub fn new(components: Vec<PriorComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| ReidError::invalid("prior has no components"))?;
        let shape = first.matrix.shape();
        let mut total = 0.0;
        for c in &components {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(ReidError::invalid(format!(
                    "prior weight {} is not a nonnegative number",
                    c.weight
                )));
            }
            if c.matrix.shape() != shape {
                return Err(ReidError::ShapeMismatch {
                    expected: shape,
                    actual: c.matrix.shape(),
                });
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(ReidError::invalid(format!("prior weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn single(matrix: RepresentationMatrix) -> Self {
        Self {
            components: vec![PriorComponent { weight: 1.0, matrix }],
        }
    }

    pub fn components(&self) -> &[PriorComponent] {
        &self.components
    }

    pub fn shape(&self) -> (usize, usize) {
        self.components[0].matrix.shape()
    }
}

/// Draws one representation for user `i`.
pub fn sample_observation(p: &RepresentationMatrix, i: usize, stream: &mut Stream) -> Result<usize> {
    if i >= p.n() {
        return Err(ReidError::IndexOutOfRange { index: i, limit: p.n() });
    }
    Ok(sample_row(p.row(i), stream))
}

/// Inverse-CDF draw from one probability row. Rounding slack at the top of
/// the CDF falls back to the last positive entry.
#[inline]
pub(crate) fn sample_row(row: &[f64], stream: &mut Stream) -> usize {
    let u = stream.next_f64();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (o, &v) in row.iter().enumerate() {
        if v > 0.0 {
            acc += v;
            last_positive = o;
            if u < acc {
                return o;
            }
        }
    }
    last_positive
}

/// Draws `W` with `W_i ~ P[i, :]`, user `i` reading the stream `label.user(i)`.
pub fn sample_observation_vector(p: &RepresentationMatrix, seeds: &SeedSpec, label: StreamLabel) -> ObservationVector {
    let values = (0..p.n())
        .map(|i| {
            let mut s = seeds.stream(label.user(i as u64));
            sample_row(p.row(i), &mut s)
        })
        .collect();
    ObservationVector { values }
}

/// Posterior weights of the prior's components given `W`.
pub fn posterior_weights(prior: &FinitePrior, w: &ObservationVector) -> Result<Vec<f64>> {
    let (n, m) = prior.shape();
    if w.len() != n {
        return Err(ReidError::ShapeMismatch {
            expected: (n, m),
            actual: (w.len(), m),
        });
    }
    if let Some(&bad) = w.values().iter().find(|&&v| v >= m) {
        return Err(ReidError::IndexOutOfRange { index: bad, limit: m });
    }
    // Log domain: products over many users underflow quickly.
    let log_post: Vec<f64> = prior
        .components()
        .iter()
        .map(|c| {
            if c.weight == 0.0 {
                return f64::NEG_INFINITY;
            }
            w.values()
                .iter()
                .enumerate()
                .map(|(i, &o)| c.matrix.get(i, o).ln())
                .sum::<f64>()
                + c.weight.ln()
        })
        .collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ReidError::ImpossibleObservation);
    }
    let unnorm: Vec<f64> = log_post.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / z).collect())
}

/// `E[P | W]` under a finite prior, by exact Bayes over the components.
pub fn posterior_matrix(prior: &FinitePrior, w: &ObservationVector) -> Result<RepresentationMatrix> {
    let weights = posterior_weights(prior, w)?;
    let (n, m) = prior.shape();
    let mut data = vec![0.0; n * m];
    for (c, &wt) in prior.components().iter().zip(&weights) {
        if wt == 0.0 {
            continue;
        }
        for (d, &v) in data.iter_mut().zip(&c.matrix.data) {
            *d += wt * v;
        }
    }
    RepresentationMatrix::from_dense(n, m, data)
}
