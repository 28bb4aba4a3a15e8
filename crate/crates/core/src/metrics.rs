//! Validation metrics and the running tracks summarizing them over episodes.

use std::collections::{BTreeMap, VecDeque};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pairwise_distances, EmbeddingBatch};
use crate::samplers::categorical;

pub const RECALL_KS: [usize; 3] = [1, 2, 4];
pub const KMEANS_MAX_ITER: usize = 300;

/// Recall@k for each `k`: the fraction of points with at least one same-class
/// point among their `k` nearest neighbours (self excluded, ties by index).
pub fn recall_at_k(batch: &EmbeddingBatch, ks: &[usize]) -> Result<Vec<f64>> {
    let n = batch.len();
    let k_max = ks.iter().copied().max().unwrap_or(0);
    if ks.contains(&0) {
        return Err(Error::Metric("recall@0 is undefined".into()));
    }
    if k_max >= n {
        return Err(Error::Metric(format!(
            "recall@{k_max} needs more than {k_max} points, have {n}"
        )));
    }
    let dist = pairwise_distances(batch);
    let labels = batch.labels();
    let mut hits = vec![0usize; ks.len()];
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for q in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != q));
        let row = dist.row(q);
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let first_match = order.iter().position(|&j| labels[j] == labels[q]);
        for (slot, &k) in ks.iter().enumerate() {
            if first_match.is_some_and(|p| p < k) {
                hits[slot] += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / n as f64).collect())
}

/// Lloyd's k-means with k-means++ seeding. Returns one cluster id per row.
///
/// Ties in the assignment step go to the lowest cluster id; an emptied
/// cluster keeps its previous center.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>> {
    let (n, dim) = points.dim();
    if k == 0 || k > n {
        return Err(Error::Metric(format!("cannot form {k} clusters from {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq_dist =
        |i: usize, c: &Array2<f64>, j: usize| -> f64 { (0..dim).map(|d| (points[[i, d]] - c[[j, d]]).powi(2)).sum() };

    let mut centers = Array2::<f64>::zeros((k, dim));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(i, &centers, 0)).collect();
    for c in 1..k {
        let pick = if nearest.iter().sum::<f64>() > 0.0 {
            categorical(&nearest, &mut rng)?
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq_dist(i, &centers, c));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(i, &centers, c);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if *slot != best.1 {
                *slot = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &points.row(i);
            counts[c] += 1;
        }
        for (c, &n) in counts.iter().enumerate() {
            if n > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / n as f64));
            }
        }
    }
    Ok(assign)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization,
/// `2 I(A; B) / (H(A) + H(B))`. Zero when either partition is trivial.
pub fn nmi_from_assignments(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Metric("NMI of an empty assignment".into()));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut count_a: BTreeMap<usize, usize> = BTreeMap::new();
    let mut count_b: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *count_a.entry(x).or_default() += 1;
        *count_b.entry(y).or_default() += 1;
    }
    let h_a = entropy(count_a.values().copied(), n);
    let h_b = entropy(count_b.values().copied(), n);
    if h_a == 0.0 || h_b == 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let p_xy = c as f64 / n;
            let p_x = count_a[&x] as f64 / n;
            let p_y = count_b[&y] as f64 / n;
            p_xy * (p_xy / (p_x * p_y)).ln()
        })
        .sum();
    Ok((2.0 * mi / (h_a + h_b)).clamp(0.0, 1.0))
}

/// NMI between a k-means clustering of the embeddings and the labels.
pub fn nmi(batch: &EmbeddingBatch, n_clusters: usize, seed: u64) -> Result<f64> {
    let clusters = kmeans(batch.vectors(), n_clusters, seed, KMEANS_MAX_ITER)?;
    nmi_from_assignments(&clusters, batch.labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDistanceStats {
    pub intra: f64,
    pub inter: f64,
    /// False when no class has two members; `intra` is then reported as 0.
    pub intra_defined: bool,
}

/// Mean distance over all same-class pairs and over all cross-class pairs.
pub fn class_distance_stats(batch: &EmbeddingBatch) -> Result<ClassDistanceStats> {
    if batch.num_classes() < 2 {
        return Err(Error::Metric(
            "class distance statistics need at least 2 classes".into(),
        ));
    }
    let dist = pairwise_distances(batch);
    let labels = batch.labels();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..batch.len() {
        for j in (i + 1)..batch.len() {
            if labels[i] == labels[j] {
                intra += dist[[i, j]];
                n_intra += 1;
            } else {
                inter += dist[[i, j]];
                n_inter += 1;
            }
        }
    }
    Ok(ClassDistanceStats {
        intra: if n_intra > 0 { intra / n_intra as f64 } else { 0.0 },
        inter: inter / n_inter as f64,
        intra_defined: n_intra > 0,
    })
}

/// Validation metrics after one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub episode: usize,
    /// Recall@1, @2, @4.
    pub recall: [f64; 3],
    pub nmi: f64,
    pub intra: f64,
    pub inter: f64,
}

impl MetricSnapshot {
    pub const FEATURES: usize = 6;

    pub fn evaluate(batch: &EmbeddingBatch, episode: usize, kmeans_seed: u64) -> Result<Self> {
        let r = recall_at_k(batch, &RECALL_KS)?;
        let stats = class_distance_stats(batch)?;
        Ok(Self {
            episode,
            recall: [r[0], r[1], r[2]],
            nmi: nmi(batch, batch.num_classes(), kmeans_seed)?,
            intra: stats.intra,
            inter: stats.inter,
        })
    }

    /// `Recall@1 + NMI`, the quantity whose sign of change is the reward.
    pub fn target(&self) -> f64 {
        self.recall[0] + self.nmi
    }

    /// `[R@1, R@2, R@4, NMI, intra, inter]`
    pub fn features(&self) -> [f64; Self::FEATURES] {
        [
            self.recall[0],
            self.recall[1],
            self.recall[2],
            self.nmi,
            self.intra,
            self.inter,
        ]
    }

    pub const CSV_HEADER: &'static str = "episode,r1,r2,r4,nmi,intra,inter,reward";

    pub fn csv_row(&self, reward: i8) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode, self.recall[0], self.recall[1], self.recall[2], self.nmi, self.intra, self.inter, reward
        )
    }
}

pub const DEFAULT_AVERAGE_LENGTHS: [usize; 4] = [2, 8, 16, 32];
pub const DEFAULT_HISTORY: usize = 20;

/// Recent snapshots with running averages over several window lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningTracks {
    lengths: Vec<usize>,
    history_len: usize,
    buffer: VecDeque<[f64; MetricSnapshot::FEATURES]>,
}

impl Default for RunningTracks {
    fn default() -> Self {
        Self::new(DEFAULT_AVERAGE_LENGTHS.to_vec(), DEFAULT_HISTORY)
    }
}

impl RunningTracks {
    pub fn new(lengths: Vec<usize>, history_len: usize) -> Self {
        let cap = lengths.iter().copied().max().unwrap_or(0).max(history_len).max(1);
        Self {
            lengths,
            history_len,
            buffer: VecDeque::with_capacity(cap),
        }
    }

    pub fn capacity(&self) -> usize {
        self.lengths
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
            .max(self.history_len)
            .max(1)
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, snapshot: &MetricSnapshot) {
        if self.buffer.len() == self.capacity() {
            self.buffer.pop_front();
        }
        self.buffer.push_back(snapshot.features());
    }

    /// One averaged feature row per configured length, over the most recent
    /// `min(length, available)` snapshots. All zeros before the first push.
    pub fn averages(&self) -> Vec<[f64; MetricSnapshot::FEATURES]> {
        self.lengths
            .iter()
            .map(|&len| {
                let take = len.min(self.buffer.len());
                let mut avg = [0.0; MetricSnapshot::FEATURES];
                if take == 0 {
                    return avg;
                }
                for row in self.buffer.iter().rev().take(take) {
                    for (a, v) in avg.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                avg.iter_mut().for_each(|a| *a /= take as f64);
                avg
            })
            .collect()
    }

    /// The last `history_len` snapshots, newest first. Missing slots repeat
    /// the oldest stored snapshot (zeros if there is none).
    pub fn history(&self) -> Vec<[f64; MetricSnapshot::FEATURES]> {
        let pad = self.buffer.front().copied().unwrap_or([0.0; MetricSnapshot::FEATURES]);
        (0..self.history_len)
            .map(|i| self.buffer.len().checked_sub(i + 1).map_or(pad, |idx| self.buffer[idx]))
            .collect()
    }
}
