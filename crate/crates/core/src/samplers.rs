//! Negative selection strategies.
//!
//! The adaptive strategy works on a [`SamplingPmf`]: a histogram with `K`
//! equal-width bins over the distance interval `[λ_min, λ_max]`. To pick a
//! negative for an anchor, a bin is drawn with probability `p_k` (restricted to
//! bins that actually contain a candidate, renormalized), then a candidate is
//! drawn uniformly inside that bin. Candidates outside the interval are never
//! chosen unless no candidate is in range at all, in which case the draw falls
//! back to a uniform pick and the caller is told.
//!
//! The teacher reshapes the histogram with bin-wise multipliers
//! `p_k ← p_k · a_k / Σ_j p_j · a_j`, `a_k ∈ {α, 1, β}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{inverse_density_weights, WeightClip};

/// Normalization tolerance for [`SamplingPmf`].
pub const PMF_SUM_TOL: f64 = 1e-9;

/// Distances handed to the analytic density are kept inside this margin of `(0, 2)`.
const DENSITY_DOMAIN_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPmf {
    lambda_min: f64,
    lambda_max: f64,
    probs: Vec<f64>,
}

fn check_interval(lambda_min: f64, lambda_max: f64, k: usize) -> Result<()> {
    if !(0.0 <= lambda_min && lambda_min < lambda_max && lambda_max <= 2.0) {
        return Err(Error::InvalidPmf(format!(
            "interval [{lambda_min}, {lambda_max}] must satisfy 0 <= min < max <= 2"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidPmf(format!("need at least 2 bins, got {k}")));
    }
    Ok(())
}

impl SamplingPmf {
    /// Checks that `probs` is already a distribution.
    pub fn new(lambda_min: f64, lambda_max: f64, probs: Vec<f64>) -> Result<Self> {
        check_interval(lambda_min, lambda_max, probs.len())?;
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidPmf("probabilities must be finite and >= 0".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidPmf(format!("probabilities sum to {sum}")));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            probs,
        })
    }

    /// Normalizes non-negative `weights` into a distribution.
    pub fn from_weights(lambda_min: f64, lambda_max: f64, weights: Vec<f64>) -> Result<Self> {
        check_interval(lambda_min, lambda_max, weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidPmf("weights must be finite and >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidPmf("all weights are zero".into()));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn bin_width(&self) -> f64 {
        (self.lambda_max - self.lambda_min) / self.k() as f64
    }

    /// `K + 1` equidistant edges from `λ_min` to `λ_max`.
    pub fn edges(&self) -> Vec<f64> {
        bin_edges(self.lambda_min, self.lambda_max, self.k())
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let e = self.edges();
        e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin `k` holds `edges[k] <= d < edges[k+1]`; the last bin also holds `λ_max`.
    pub fn bin_of(&self, d: f64) -> Option<usize> {
        if !(d >= self.lambda_min && d <= self.lambda_max) {
            return None;
        }
        let edges = self.edges();
        let k = self.k();
        let mut bin = (((d - self.lambda_min) / self.bin_width()) as usize).min(k - 1);
        while bin > 0 && d < edges[bin] {
            bin -= 1;
        }
        while bin + 1 < k && d >= edges[bin + 1] {
            bin += 1;
        }
        Some(bin)
    }

    /// Multiplies bin `k` by `multipliers[k]` and renormalizes.
    pub fn adjusted(&self, multipliers: &[f64]) -> Result<Self> {
        if multipliers.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: multipliers.len(),
            });
        }
        if multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidPmf("multipliers must be finite and > 0".into()));
        }
        if multipliers.iter().all(|&m| m == 1.0) {
            return Ok(self.clone());
        }
        let weights: Vec<f64> = self.probs.iter().zip(multipliers).map(|(p, m)| p * m).collect();
        Self::from_weights(self.lambda_min, self.lambda_max, weights)
    }

    pub fn apply_action(&self, action: &ActionVector, multipliers: &ActionMultipliers) -> Result<Self> {
        self.adjusted(&action.multipliers(multipliers))
    }
}

pub fn bin_edges(lambda_min: f64, lambda_max: f64, k: usize) -> Vec<f64> {
    let width = (lambda_max - lambda_min) / k as f64;
    (0..=k)
        .map(|i| {
            if i == k {
                lambda_max
            } else {
                lambda_min + i as f64 * width
            }
        })
        .collect()
}

/// Initial shapes for the adaptive histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PmfInit {
    /// Flat over the whole interval.
    Uniform,
    /// Mass proportional to each bin's overlap with `[lo, hi]`, plus a small
    /// floor of [`EMPHASIS_FLOOR`] per bin so every bin stays adjustable.
    UniformRange { lo: f64, hi: f64 },
    /// Gaussian density evaluated at bin centers.
    Gaussian { mean: f64, std: f64 },
}

/// Relative weight of a bin outside the emphasized range of [`PmfInit::UniformRange`].
pub const EMPHASIS_FLOOR: f64 = 1e-2;

pub fn init_pmf(lambda_min: f64, lambda_max: f64, k: usize, init: PmfInit) -> Result<SamplingPmf> {
    check_interval(lambda_min, lambda_max, k)?;
    let edges = bin_edges(lambda_min, lambda_max, k);
    let width = (lambda_max - lambda_min) / k as f64;
    let weights = match init {
        PmfInit::Uniform => vec![1.0; k],
        PmfInit::UniformRange { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::InvalidPmf(format!("empty emphasis range [{lo}, {hi}]")));
            }
            edges
                .windows(2)
                .map(|e| overlap(e[0], e[1], lo, hi) / width + EMPHASIS_FLOOR)
                .collect()
        }
        PmfInit::Gaussian { mean, std } => {
            if !(std > 0.0) {
                return Err(Error::InvalidPmf(format!("gaussian std must be > 0, got {std}")));
            }
            edges
                .windows(2)
                .map(|e| {
                    let z = (0.5 * (e[0] + e[1]) - mean) / std;
                    (-0.5 * z * z).exp()
                })
                .collect()
        }
    };
    SamplingPmf::from_weights(lambda_min, lambda_max, weights)
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

// ---------------------------------------------------------------------------
// Actions

/// One trit of an action: decrease, maintain or increase a bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Adjustment {
    Decrease = 0,
    Maintain = 1,
    Increase = 2,
}

impl Adjustment {
    pub const ALL: [Adjustment; 3] = [Adjustment::Decrease, Adjustment::Maintain, Adjustment::Increase];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionMultipliers {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ActionMultipliers {
    fn default() -> Self {
        Self { alpha: 0.8, beta: 1.25 }
    }
}

impl ActionMultipliers {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let m = Self { alpha, beta };
        let problems = m.validate();
        if problems.is_empty() {
            Ok(m)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            problems.push(format!("pmf.alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            problems.push(format!("pmf.beta must be > 1, got {}", self.beta));
        }
        problems
    }

    /// `(α + β)/2 - 1` when it is not zero. The defaults (0.8, 1.25) give 0.025.
    pub fn mean_one_deviation(&self) -> Option<f64> {
        let dev = 0.5 * (self.alpha + self.beta) - 1.0;
        (dev.abs() > 1e-12).then_some(dev)
    }

    pub fn multiplier(&self, adj: Adjustment) -> f64 {
        match adj {
            Adjustment::Decrease => self.alpha,
            Adjustment::Maintain => 1.0,
            Adjustment::Increase => self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVector(pub Vec<Adjustment>);

impl ActionVector {
    pub fn identity(k: usize) -> Self {
        Self(vec![Adjustment::Maintain; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn multipliers(&self, m: &ActionMultipliers) -> Vec<f64> {
        self.0.iter().map(|&a| m.multiplier(a)).collect()
    }

    pub fn trits(&self) -> Vec<usize> {
        self.0.iter().map(|a| a.index()).collect()
    }
}

// ---------------------------------------------------------------------------
// Negative selection

/// Outcome of a negative draw: the chosen candidate id and whether a
/// fallback path was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    pub fallback: bool,
}

/// Draws an index with probability proportional to `weights`.
pub fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidPmf(format!("categorical weights sum to {total}")));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(weights.iter().rposition(|&w| w > 0.0).expect("positive total"))
}

fn check_candidates(candidates: &[usize], distances: &[f64]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if candidates.len() != distances.len() {
        return Err(Error::DimensionMismatch {
            expected: candidates.len(),
            got: distances.len(),
        });
    }
    Ok(())
}

pub fn sample_negative_random<R: Rng + ?Sized>(candidates: &[usize], rng: &mut R) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(Selection {
        index: candidates[rng.random_range(0..candidates.len())],
        fallback: false,
    })
}

/// Bin-then-uniform draw from the adaptive histogram.
///
/// Bins without a candidate are dropped and the remaining `p_k` renormalized.
/// If no candidate lies in `[λ_min, λ_max]`, or every occupied bin has zero
/// probability, the draw is uniform over all candidates with `fallback` set.
pub fn sample_negative_adaptive<R: Rng + ?Sized>(
    pmf: &SamplingPmf,
    candidates: &[usize],
    distances: &[f64],
    rng: &mut R,
) -> Result<Selection> {
    check_candidates(candidates, distances)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); pmf.k()];
    for (pos, &d) in distances.iter().enumerate() {
        if let Some(bin) = pmf.bin_of(d) {
            members[bin].push(pos);
        }
    }
    let weights: Vec<f64> = members
        .iter()
        .zip(pmf.probs())
        .map(|(m, &p)| if m.is_empty() { 0.0 } else { p })
        .collect();
    if weights.iter().sum::<f64>() > 0.0 {
        let bin = categorical(&weights, rng)?;
        let inside = &members[bin];
        let pos = inside[rng.random_range(0..inside.len())];
        Ok(Selection {
            index: candidates[pos],
            fallback: false,
        })
    } else {
        let pos = rng.random_range(0..candidates.len());
        Ok(Selection {
            index: candidates[pos],
            fallback: true,
        })
    }
}

/// Closest negative that is farther than the positive; ties go to the lowest
/// candidate id. Without such a negative, the farthest candidate is returned
/// with `fallback` set.
pub fn sample_negative_semihard(d_ap: f64, candidates: &[usize], distances: &[f64]) -> Result<Selection> {
    check_candidates(candidates, distances)?;
    let key = |i: usize| (distances[i], candidates[i]);
    let semihard = (0..candidates.len())
        .filter(|&i| distances[i] > d_ap)
        .min_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite distances"));
    if let Some(i) = semihard {
        return Ok(Selection {
            index: candidates[i],
            fallback: false,
        });
    }
    let farthest = (0..candidates.len())
        .min_by(|&a, &b| {
            distances[b]
                .partial_cmp(&distances[a])
                .expect("finite distances")
                .then(candidates[a].cmp(&candidates[b]))
        })
        .expect("non-empty");
    Ok(Selection {
        index: candidates[farthest],
        fallback: true,
    })
}

/// Static distance-weighted sampling, `p(n) ∝ min(λ, 1/q(d_an))`.
pub fn sample_negative_distweighted<R: Rng + ?Sized>(
    candidates: &[usize],
    distances: &[f64],
    dim: usize,
    clip: WeightClip,
    rng: &mut R,
) -> Result<Selection> {
    check_candidates(candidates, distances)?;
    let clamped: Vec<f64> = distances
        .iter()
        .map(|d| d.clamp(DENSITY_DOMAIN_MARGIN, 2.0 - DENSITY_DOMAIN_MARGIN))
        .collect();
    let weights = inverse_density_weights(&clamped, dim, clip)?;
    Ok(Selection {
        index: candidates[categorical(&weights, rng)?],
        fallback: false,
    })
}

// ---------------------------------------------------------------------------
// Fixed curricula

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurriculumKind {
    /// A fixed-width window sliding from semihard distances to `λ_min`.
    Linear,
    /// Discretized distance-weighted sampling tilted toward small distances.
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Width of the linear window.
    pub window: f64,
    /// Lower edge of the linear window at `t = 0`.
    pub start: f64,
    /// Exponential tilt strength of the nonlinear schedule at `t = 1`.
    pub hardness: f64,
    /// Embedding dimension used by the analytic density.
    pub dim: usize,
    pub clip: WeightClip,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            window: 0.4,
            start: 0.6,
            hardness: 3.0,
            dim: 32,
            clip: WeightClip::default(),
        }
    }
}

/// Histogram prescribed by a fixed schedule at training progress `t ∈ [0, 1]`.
pub fn curriculum_pmf(
    t: f64,
    kind: CurriculumKind,
    lambda_min: f64,
    lambda_max: f64,
    k: usize,
    config: &CurriculumConfig,
) -> Result<SamplingPmf> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("progress {t} outside [0, 1]")));
    }
    check_interval(lambda_min, lambda_max, k)?;
    let edges = bin_edges(lambda_min, lambda_max, k);
    let width = (lambda_max - lambda_min) / k as f64;
    let weights: Vec<f64> = match kind {
        CurriculumKind::Linear => {
            let lo = config.start + t * (lambda_min - config.start);
            let hi = lo + config.window;
            edges.windows(2).map(|e| overlap(e[0], e[1], lo, hi) / width).collect()
        }
        CurriculumKind::Nonlinear => {
            let centers: Vec<f64> = edges
                .windows(2)
                .map(|e| (0.5 * (e[0] + e[1])).clamp(DENSITY_DOMAIN_MARGIN, 2.0 - DENSITY_DOMAIN_MARGIN))
                .collect();
            let base = inverse_density_weights(&centers, config.dim, config.clip)?;
            centers
                .iter()
                .zip(base)
                .map(|(c, w)| w * (-config.hardness * t * (c - lambda_min) / (lambda_max - lambda_min)).exp())
                .collect()
        }
    };
    SamplingPmf::from_weights(lambda_min, lambda_max, weights)
}
