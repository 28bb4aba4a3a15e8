//! Embedding-space primitives on the unit hypersphere.
//!
//! Embeddings live on `S^(D-1)`, so every pairwise Euclidean distance lies in
//! `[0, 2]`. For points drawn uniformly on the sphere the distance has the
//! closed-form density
//!
//! ```text
//! q(d) ∝ d^(D-2) · (1 - d²/4)^((D-3)/2),    0 < d < 2
//! ```
//!
//! which is what static distance-weighted sampling inverts to obtain a flat
//! distribution over anchor-negative distances.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row norms accepted by [`EmbeddingBatch::new`].
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// L2-normalized embeddings together with their integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    vectors: Array2<f64>,
    labels: Vec<usize>,
}

impl EmbeddingBatch {
    /// Wraps already normalized rows. Fails if any row is off the unit sphere.
    pub fn new(vectors: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (n, dim) = vectors.dim();
        if n == 0 {
            return Err(Error::InvalidBatch("batch has no rows".into()));
        }
        if dim < 2 {
            return Err(Error::InvalidBatch(format!(
                "embedding dimension must be at least 2, got {dim}"
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        for (i, row) in vectors.outer_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidBatch(format!("row {i} has norm {norm}, expected 1")));
            }
        }
        Ok(Self { vectors, labels })
    }

    /// Projects every row onto the sphere before wrapping it.
    pub fn from_unnormalized(mut vectors: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        for mut row in vectors.outer_iter_mut() {
            let owned = row.to_vec();
            let unit = normalize_to_sphere(&owned)?;
            row.assign(&ArrayView1::from(&unit));
        }
        Self::new(vectors, labels)
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    /// Number of distinct labels in the batch.
    pub fn num_classes(&self) -> usize {
        let mut labels = self.labels.clone();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }
}

/// Scales `v` to unit L2 norm.
pub fn normalize_to_sphere(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("embedding"));
    }
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// All pairwise Euclidean distances of a batch.
///
/// Uses the Gram identity `d² = 2 - 2⟨a, b⟩`; rounding can push `d²` slightly
/// below zero for near-duplicates, so it is clamped before the square root.
/// Entries with `d² < 1e-4` are recomputed from the coordinate difference.
/// The diagonal is exactly zero and the result is exactly symmetric.
pub fn pairwise_distances(batch: &EmbeddingBatch) -> Array2<f64> {
    gram_distances(batch.vectors())
}

const NEAR_ZERO_SQ: f64 = 1e-4;

pub(crate) fn gram_distances(vectors: &Array2<f64>) -> Array2<f64> {
    let n = vectors.nrows();
    let gram = vectors.dot(&vectors.t());
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = (2.0 - 2.0 * gram[[i, j]]).clamp(0.0, 4.0);
            // Cancellation leaves ~sqrt(eps) absolute error near zero.
            if sq < NEAR_ZERO_SQ {
                let diff = &vectors.row(i) - &vectors.row(j);
                sq = diff.dot(&diff);
            }
            let d = sq.sqrt();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

fn check_density_domain(d: f64, dim: usize) -> Result<()> {
    if dim < 3 {
        return Err(Error::Domain(format!(
            "distance density needs dimension >= 3, got {dim}"
        )));
    }
    if !(d > 0.0 && d < 2.0) {
        return Err(Error::Domain(format!("distance {d} outside (0, 2)")));
    }
    Ok(())
}

/// `ln q(d)` for the unnormalized sphere distance density.
pub fn log_analytic_density(d: f64, dim: usize) -> Result<f64> {
    check_density_domain(d, dim)?;
    let dim = dim as f64;
    Ok((dim - 2.0) * d.ln() + 0.5 * (dim - 3.0) * (1.0 - 0.25 * d * d).ln())
}

/// Unnormalized density `q(d) = d^(D-2) (1 - d²/4)^((D-3)/2)` of distances
/// between uniform random points on `S^(D-1)`.
///
/// Exact for every `D >= 3`; the formula is evaluated in log space.
pub fn analytic_density(d: f64, dim: usize) -> Result<f64> {
    log_analytic_density(d, dim).map(f64::exp)
}

/// How the inverse density is capped before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum WeightClip {
    /// No cap (`λ = ∞`).
    None,
    /// `min(λ, 1/q(d))` with `λ` in the units of the unnormalized `q`.
    Absolute(f64),
    /// Cap at this multiple of the median uncapped weight of the input.
    MedianMultiple(f64),
}

impl Default for WeightClip {
    fn default() -> Self {
        WeightClip::MedianMultiple(4.0)
    }
}

/// Normalized sampling weights `w_i ∝ min(λ, 1/q(d_i))`.
///
/// Computed on log-weights shifted by their maximum so large `D` does not
/// overflow. The output sums to one and is permutation-equivariant.
pub fn inverse_density_weights(distances: &[f64], dim: usize, clip: WeightClip) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut log_w = distances
        .iter()
        .map(|&d| log_analytic_density(d, dim).map(|lq| -lq))
        .collect::<Result<Vec<_>>>()?;

    let log_cap = match clip {
        WeightClip::None => None,
        WeightClip::Absolute(lambda) => {
            if !(lambda > 0.0) {
                return Err(Error::Domain(format!("clip threshold must be > 0, got {lambda}")));
            }
            Some(lambda.ln())
        }
        WeightClip::MedianMultiple(factor) => {
            if !(factor > 0.0) {
                return Err(Error::Domain(format!("clip factor must be > 0, got {factor}")));
            }
            Some(median(&log_w) + factor.ln())
        }
    };
    if let Some(cap) = log_cap {
        for w in &mut log_w {
            *w = w.min(cap);
        }
    }

    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

// Median of log-weights; log is monotone so this is the log of the median weight.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
