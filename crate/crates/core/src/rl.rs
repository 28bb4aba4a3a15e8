//! The teacher that adjusts the negative-sampling histogram.
//!
//! Episodes are single steps: the teacher sees a [`TrainingState`], picks one
//! of `{decrease, maintain, increase}` for each of the `K` bins, the learner
//! trains for `M` iterations, and the sign of the change in `Recall@1 + NMI`
//! comes back as reward. The action distribution factorizes into `K`
//! independent 3-way softmax heads, so `log π(a|s) = Σ_k log softmax(z_k)[a_k]`.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricSnapshot, RunningTracks};
use crate::model::{Adam, AdamConfig};
use crate::samplers::{categorical, ActionVector, Adjustment, SamplingPmf};

// ---------------------------------------------------------------------------
// State

/// Feature vector handed to the policy.
///
/// Layout, in order:
///
/// 1. for each running-average length `ℓ`: the averaged metric features;
/// 2. the raw metric features of the last `H` episodes, newest first;
/// 3. the previous histogram, `K` values scaled by `K` (uniform ↦ 1);
/// 4. training progress in `[0, 1]`.
///
/// Metric features are `[R@1, R@2, R@4, NMI, intra/2, inter/2]`, or
/// `[R@1, NMI, intra/2, inter/2]` when only Recall@1 is used. Distances are
/// halved so every metric feature lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub average_lengths: Vec<usize>,
    pub history: usize,
    pub bins: usize,
    pub all_recalls: bool,
}

impl StateLayout {
    pub fn metric_features(&self) -> usize {
        if self.all_recalls {
            6
        } else {
            4
        }
    }

    pub fn dim(&self) -> usize {
        (self.average_lengths.len() + self.history) * self.metric_features() + self.bins + 1
    }

    fn metric_row(&self, raw: &[f64; MetricSnapshot::FEATURES]) -> Vec<f64> {
        let [r1, r2, r4, nmi, intra, inter] = *raw;
        if self.all_recalls {
            vec![r1, r2, r4, nmi, 0.5 * intra, 0.5 * inter]
        } else {
            vec![r1, nmi, 0.5 * intra, 0.5 * inter]
        }
    }

    pub fn build(&self, tracks: &RunningTracks, pmf: &SamplingPmf, progress: f64) -> Result<TrainingState> {
        if tracks.lengths() != self.average_lengths.as_slice() || tracks.history_len() != self.history {
            return Err(Error::Policy("running tracks do not match the state layout".into()));
        }
        if pmf.k() != self.bins {
            return Err(Error::DimensionMismatch {
                expected: self.bins,
                got: pmf.k(),
            });
        }
        let mut s = Vec::with_capacity(self.dim());
        for row in tracks.averages() {
            s.extend(self.metric_row(&row));
        }
        for row in tracks.history() {
            s.extend(self.metric_row(&row));
        }
        let scale = self.bins as f64;
        s.extend(pmf.probs().iter().map(|p| p * scale));
        s.push(progress.clamp(0.0, 1.0));
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training state"));
        }
        Ok(TrainingState(s))
    }
}

/// `sign(e_new - e_old)` as `-1`, `0` or `+1`; exact ties give 0.
pub fn compute_reward(e_new: f64, e_old: f64) -> i8 {
    if e_new > e_old {
        1
    } else if e_new < e_old {
        -1
    } else {
        0
    }
}

// ---------------------------------------------------------------------------
// Policy network

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub state_dim: usize,
    pub hidden: usize,
    pub bins: usize,
    pub value_head: bool,
}

/// Two ReLU layers of `hidden` units, then `K` heads of 3 logits and an
/// optional scalar value head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    shape: PolicyShape,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    /// `3K × hidden`; rows `3k..3k+3` belong to bin `k`.
    w_logits: Array2<f64>,
    b_logits: Array1<f64>,
    value: Option<(Array1<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<[f64; 3]>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    input: Array1<f64>,
    pre1: Array1<f64>,
    h1: Array1<f64>,
    pre2: Array1<f64>,
    h2: Array1<f64>,
}

impl PolicyNetwork {
    /// All-zero parameters: every head is uniform.
    pub fn zeros(shape: PolicyShape) -> Self {
        let (s, h, k) = (shape.state_dim, shape.hidden, shape.bins);
        Self {
            w1: Array2::zeros((h, s)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((h, h)),
            b2: Array1::zeros(h),
            w_logits: Array2::zeros((3 * k, h)),
            b_logits: Array1::zeros(3 * k),
            value: shape.value_head.then(|| (Array1::zeros(h), 0.0)),
            shape,
        }
    }

    /// He init on hidden layers; heads start near zero so the initial policy
    /// is close to uniform.
    pub fn new<R: Rng + ?Sized>(shape: PolicyShape, rng: &mut R) -> Result<Self> {
        if shape.state_dim == 0 || shape.hidden == 0 || shape.bins == 0 {
            return Err(Error::Policy(format!("invalid policy shape {shape:?}")));
        }
        let mut net = Self::zeros(shape);
        let mut fill = |m: &mut Array2<f64>, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            m.mapv_inplace(|_| normal.sample(rng));
        };
        let (s, h) = (net.shape.state_dim as f64, net.shape.hidden as f64);
        fill(&mut net.w1, (2.0 / s).sqrt());
        fill(&mut net.w2, (2.0 / h).sqrt());
        fill(&mut net.w_logits, 0.01 / h.sqrt());
        if let Some((w, _)) = net.value.as_mut() {
            let normal = Normal::new(0.0, 0.01 / h.sqrt()).expect("positive std");
            w.mapv_inplace(|_| normal.sample(rng));
        }
        Ok(net)
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn num_params(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.w_logits.len()
            + self.b_logits.len()
            + self.value.as_ref().map_or(0, |(w, _)| w.len() + 1)
    }

    /// Flattened in the order w1, b1, w2, b2, w_logits, b_logits, w_value, b_value.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w_logits.iter());
        out.extend(self.b_logits.iter());
        if let Some((w, b)) = &self.value {
            out.extend(w.iter());
            out.push(*b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        let mut next = || it.next().expect("length checked");
        self.w1.iter_mut().for_each(|v| *v = next());
        self.b1.iter_mut().for_each(|v| *v = next());
        self.w2.iter_mut().for_each(|v| *v = next());
        self.b2.iter_mut().for_each(|v| *v = next());
        self.w_logits.iter_mut().for_each(|v| *v = next());
        self.b_logits.iter_mut().for_each(|v| *v = next());
        if let Some((w, b)) = self.value.as_mut() {
            w.iter_mut().for_each(|v| *v = next());
            *b = next();
        }
        Ok(())
    }

    pub fn forward(&self, state: &[f64]) -> Result<PolicyOutput> {
        self.forward_cached(state).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, state: &[f64]) -> Result<(PolicyOutput, PolicyCache)> {
        if state.len() != self.shape.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.shape.state_dim,
                got: state.len(),
            });
        }
        let input = Array1::from(state.to_vec());
        let pre1 = self.w1.dot(&input) + &self.b1;
        let h1 = pre1.mapv(|v| v.max(0.0));
        let pre2 = self.w2.dot(&h1) + &self.b2;
        let h2 = pre2.mapv(|v| v.max(0.0));
        let flat = self.w_logits.dot(&h2) + &self.b_logits;
        let logits = flat
            .as_slice()
            .expect("contiguous")
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let value = self.value.as_ref().map(|(w, b)| w.dot(&h2) + b);
        Ok((
            PolicyOutput { logits, value },
            PolicyCache {
                input,
                pre1,
                h1,
                pre2,
                h2,
            },
        ))
    }

    /// Parameter gradient given upstream gradients on the logits and value.
    pub fn backward(&self, cache: &PolicyCache, d_logits: &[[f64; 3]], d_value: f64) -> Result<Vec<f64>> {
        if d_logits.len() != self.shape.bins {
            return Err(Error::DimensionMismatch {
                expected: self.shape.bins,
                got: d_logits.len(),
            });
        }
        let d_flat = Array1::from_iter(d_logits.iter().flatten().copied());
        let outer = |a: &Array1<f64>, b: &Array1<f64>| -> Array2<f64> {
            let col = a.view().insert_axis(ndarray::Axis(1));
            let row = b.view().insert_axis(ndarray::Axis(0));
            col.dot(&row)
        };
        let d_w_logits = outer(&d_flat, &cache.h2);
        let mut d_h2 = self.w_logits.t().dot(&d_flat);
        let d_value_params = self.value.as_ref().map(|(w, _)| {
            d_h2 = &d_h2 + &(w * d_value);
            (&cache.h2 * d_value, d_value)
        });
        let d_pre2 = ndarray::Zip::from(&d_h2)
            .and(&cache.pre2)
            .map_collect(|&g, &p| if p > 0.0 { g } else { 0.0 });
        let d_w2 = outer(&d_pre2, &cache.h1);
        let d_h1 = self.w2.t().dot(&d_pre2);
        let d_pre1 = ndarray::Zip::from(&d_h1)
            .and(&cache.pre1)
            .map_collect(|&g, &p| if p > 0.0 { g } else { 0.0 });
        let d_w1 = outer(&d_pre1, &cache.input);

        let mut out = Vec::with_capacity(self.num_params());
        out.extend(d_w1.iter());
        out.extend(d_pre1.iter());
        out.extend(d_w2.iter());
        out.extend(d_pre2.iter());
        out.extend(d_w_logits.iter());
        out.extend(d_flat.iter());
        if let Some((dw, db)) = d_value_params {
            out.extend(dw.iter());
            out.push(db);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let record = PolicyCheckpoint {
            format: POLICY_FORMAT.into(),
            shape: self.shape.clone(),
            params: self.params(),
        };
        std::fs::write(path, serde_json::to_string(&record)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let record: PolicyCheckpoint = serde_json::from_str(&text)?;
        if record.format != POLICY_FORMAT {
            return Err(Error::Policy(format!(
                "unknown policy checkpoint format {:?}",
                record.format
            )));
        }
        let mut net = Self::zeros(record.shape);
        net.set_params(&record.params)?;
        Ok(net)
    }
}

pub const POLICY_FORMAT: &str = "pads-policy/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyCheckpoint {
    format: String,
    shape: PolicyShape,
    params: Vec<f64>,
}

pub fn log_softmax(logits: &[f64; 3]) -> [f64; 3] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    [logits[0] - lse, logits[1] - lse, logits[2] - lse]
}

pub fn softmax(logits: &[f64; 3]) -> [f64; 3] {
    log_softmax(logits).map(f64::exp)
}

/// Joint log-probability of a factorized action.
pub fn log_prob(logits: &[[f64; 3]], action: &ActionVector) -> Result<f64> {
    if logits.len() != action.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.len(),
            got: action.len(),
        });
    }
    Ok(logits
        .iter()
        .zip(&action.0)
        .map(|(z, a)| log_softmax(z)[a.index()])
        .sum())
}

/// `∂ log π(a|s) / ∂ z_k[j] = 1[j = a_k] - softmax(z_k)[j]`
pub fn log_prob_grad(logits: &[[f64; 3]], action: &ActionVector) -> Vec<[f64; 3]> {
    logits
        .iter()
        .zip(&action.0)
        .map(|(z, a)| {
            let mut g = softmax(z).map(|p| -p);
            g[a.index()] += 1.0;
            g
        })
        .collect()
}

/// Draws each bin's adjustment independently from its head.
pub fn sample_action<R: Rng + ?Sized>(logits: &[[f64; 3]], rng: &mut R) -> Result<(ActionVector, f64)> {
    let mut action = Vec::with_capacity(logits.len());
    let mut lp = 0.0;
    for z in logits {
        let probs = softmax(z);
        let i = categorical(&probs, rng)?;
        lp += log_softmax(z)[i];
        action.push(Adjustment::from_index(i).expect("3-way head"));
    }
    Ok((ActionVector(action), lp))
}

// ---------------------------------------------------------------------------
// Updates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: TrainingState,
    pub action: ActionVector,
    /// `log π(a|s)` under the policy that sampled the action.
    pub log_prob: f64,
    pub reward: f64,
    pub value: Option<f64>,
    /// `log π_old(a|s)`, filled in before a PPO update.
    pub old_log_prob: Option<f64>,
}

/// Loss, its parameter gradient and diagnostics for one update.
#[derive(Debug, Clone)]
pub struct LossGradient {
    /// Mean policy surrogate being maximized.
    pub objective: f64,
    /// Mean `½ (V(s) - r)²` (zero without a critic).
    pub value_loss: f64,
    /// Gradient of `value_loss - objective`.
    pub grads: Vec<f64>,
    /// Transitions whose clipped PPO branch was selected.
    pub clipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Advantage {
    /// `r - b` with a fixed baseline.
    Baseline(f64),
    /// `r - V(s)` from the value head, treated as a constant in the policy term.
    Critic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surrogate {
    LogProb,
    Clipped { epsilon: f64 },
}

fn surrogate_gradient(
    policy: &PolicyNetwork,
    transitions: &[Transition],
    advantage: Advantage,
    surrogate: Surrogate,
) -> Result<LossGradient> {
    if transitions.is_empty() {
        return Err(Error::Policy("update needs at least one transition".into()));
    }
    if advantage == Advantage::Critic && !policy.shape.value_head {
        return Err(Error::Policy("critic advantage requires a value head".into()));
    }
    let scale = 1.0 / transitions.len() as f64;
    let mut grads = vec![0.0; policy.num_params()];
    let (mut objective, mut value_loss, mut clipped) = (0.0, 0.0, 0);
    for t in transitions {
        let (out, cache) = policy.forward_cached(&t.state.0)?;
        let lp = log_prob(&out.logits, &t.action)?;
        let adv = match advantage {
            Advantage::Baseline(b) => t.reward - b,
            Advantage::Critic => t.reward - out.value.expect("value head checked"),
        };
        // coefficient of ∇ log π in the gradient of the loss
        let coef = match surrogate {
            Surrogate::LogProb => {
                objective += lp * adv;
                -adv * scale
            }
            Surrogate::Clipped { epsilon } => {
                let old = t
                    .old_log_prob
                    .ok_or_else(|| Error::Policy("PPO update needs old-policy log-probabilities".into()))?;
                let rho = (lp - old).exp();
                let unclipped = rho * adv;
                let bounded = rho.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
                if unclipped <= bounded {
                    objective += unclipped;
                    -unclipped * scale
                } else {
                    objective += bounded;
                    clipped += 1;
                    0.0
                }
            }
        };
        let g_lp = log_prob_grad(&out.logits, &t.action);
        let d_logits: Vec<[f64; 3]> = g_lp.iter().map(|g| g.map(|v| v * coef)).collect();
        let d_value = match (advantage, out.value) {
            (Advantage::Critic, Some(v)) => {
                value_loss += 0.5 * (v - t.reward).powi(2);
                (v - t.reward) * scale
            }
            _ => 0.0,
        };
        let g = policy.backward(&cache, &d_logits, d_value)?;
        for (acc, v) in grads.iter_mut().zip(g) {
            *acc += v;
        }
    }
    Ok(LossGradient {
        objective: objective * scale,
        value_loss: value_loss * scale,
        grads,
        clipped,
    })
}

/// REINFORCE: ascend `log π(a|s) · (r - b)`.
pub fn reinforce_gradient(policy: &PolicyNetwork, transitions: &[Transition], baseline: f64) -> Result<LossGradient> {
    surrogate_gradient(policy, transitions, Advantage::Baseline(baseline), Surrogate::LogProb)
}

/// A2C: ascend `log π(a|s) · (r - V(s))` and regress `V(s)` onto `r`.
pub fn a2c_gradient(policy: &PolicyNetwork, transitions: &[Transition]) -> Result<LossGradient> {
    surrogate_gradient(policy, transitions, Advantage::Critic, Surrogate::LogProb)
}

/// PPO: ascend `min(ρA, clip(ρ, 1-ε, 1+ε)A)` with `ρ = π(a|s)/π_old(a|s)`.
/// With [`Advantage::Critic`] the value head is trained as in A2C.
pub fn ppo_gradient(
    policy: &PolicyNetwork,
    transitions: &[Transition],
    epsilon: f64,
    advantage: Advantage,
) -> Result<LossGradient> {
    if !(epsilon > 0.0) {
        return Err(Error::Policy(format!("PPO epsilon must be > 0, got {epsilon}")));
    }
    surrogate_gradient(policy, transitions, advantage, Surrogate::Clipped { epsilon })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RlAlgorithm {
    Reinforce,
    ReinforceEma,
    A2c,
    PpoEma,
    PpoA2c,
}

impl RlAlgorithm {
    pub const ALL: [RlAlgorithm; 5] = [
        RlAlgorithm::Reinforce,
        RlAlgorithm::ReinforceEma,
        RlAlgorithm::A2c,
        RlAlgorithm::PpoEma,
        RlAlgorithm::PpoA2c,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RlAlgorithm::Reinforce => "reinforce",
            RlAlgorithm::ReinforceEma => "reinforce-ema",
            RlAlgorithm::A2c => "a2c",
            RlAlgorithm::PpoEma => "ppo-ema",
            RlAlgorithm::PpoA2c => "ppo-a2c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn uses_critic(self) -> bool {
        matches!(self, RlAlgorithm::A2c | RlAlgorithm::PpoA2c)
    }

    pub fn uses_ema(self) -> bool {
        matches!(self, RlAlgorithm::ReinforceEma | RlAlgorithm::PpoEma)
    }

    pub fn uses_ppo(self) -> bool {
        matches!(self, RlAlgorithm::PpoEma | RlAlgorithm::PpoA2c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub algorithm: RlAlgorithm,
    pub hidden: usize,
    pub lr: f64,
    pub ema_decay: f64,
    pub ppo_epsilon: f64,
    /// Copy the current policy into the PPO reference every this many updates.
    pub old_policy_refresh: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            algorithm: RlAlgorithm::PpoA2c,
            hidden: 128,
            lr: 1e-4,
            ema_decay: 0.9,
            ppo_epsilon: 0.2,
            old_policy_refresh: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub advantage_baseline: f64,
    pub objective: f64,
    pub value_loss: f64,
    pub clipped: usize,
}

/// Policy, PPO reference policy, optimizer and EMA baseline.
#[derive(Debug, Clone)]
pub struct Teacher {
    config: TeacherConfig,
    policy: PolicyNetwork,
    old_policy: PolicyNetwork,
    optimizer: Adam,
    baseline: f64,
    updates: usize,
}

impl Teacher {
    pub fn new<R: Rng + ?Sized>(config: TeacherConfig, state_dim: usize, bins: usize, rng: &mut R) -> Result<Self> {
        let shape = PolicyShape {
            state_dim,
            hidden: config.hidden,
            bins,
            value_head: config.algorithm.uses_critic(),
        };
        Ok(Self::from_policy(config, PolicyNetwork::new(shape, rng)?))
    }

    pub fn from_policy(config: TeacherConfig, policy: PolicyNetwork) -> Self {
        let optimizer = Adam::new(AdamConfig::with_lr(config.lr), policy.num_params());
        Self {
            config,
            old_policy: policy.clone(),
            policy,
            optimizer,
            baseline: 0.0,
            updates: 0,
        }
    }

    pub fn policy(&self) -> &PolicyNetwork {
        &self.policy
    }

    pub fn old_policy(&self) -> &PolicyNetwork {
        &self.old_policy
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Samples an action for `state`; returns it with its log-probability and
    /// the value estimate when there is a critic.
    pub fn act<R: Rng + ?Sized>(&self, state: &TrainingState, rng: &mut R) -> Result<(ActionVector, f64, Option<f64>)> {
        let out = self.policy.forward(&state.0)?;
        let (action, lp) = sample_action(&out.logits, rng)?;
        Ok((action, lp, out.value))
    }

    /// One policy update from a completed single-step episode.
    pub fn update(&mut self, mut transition: Transition) -> Result<UpdateStats> {
        let algo = self.config.algorithm;
        let baseline = if algo.uses_ema() { self.baseline } else { 0.0 };
        let advantage = if algo.uses_critic() {
            Advantage::Critic
        } else {
            Advantage::Baseline(baseline)
        };
        let lg = if algo.uses_ppo() {
            let old = self.old_policy.forward(&transition.state.0)?;
            transition.old_log_prob = Some(log_prob(&old.logits, &transition.action)?);
            ppo_gradient(
                &self.policy,
                std::slice::from_ref(&transition),
                self.config.ppo_epsilon,
                advantage,
            )?
        } else if algo.uses_critic() {
            a2c_gradient(&self.policy, std::slice::from_ref(&transition))?
        } else {
            reinforce_gradient(&self.policy, std::slice::from_ref(&transition), baseline)?
        };
        let mut params = self.policy.params();
        self.optimizer.step(&mut params, &lg.grads)?;
        self.policy.set_params(&params)?;

        if algo.uses_ema() {
            let d = self.config.ema_decay;
            self.baseline = d * self.baseline + (1.0 - d) * transition.reward;
        }
        self.updates += 1;
        if algo.uses_ppo() && self.updates.is_multiple_of(self.config.old_policy_refresh.max(1)) {
            self.old_policy = self.policy.clone();
        }
        Ok(UpdateStats {
            advantage_baseline: baseline,
            objective: lg.objective,
            value_loss: lg.value_loss,
            clipped: lg.clipped,
        })
    }
}
