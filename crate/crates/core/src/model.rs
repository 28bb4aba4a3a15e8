//! The embedding learner: a ReLU MLP whose last layer is L2 normalization,
//! trained with triplet or margin losses through hand-derived gradients.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
}

impl ModelConfig {
    /// Two hidden layers of width `hidden`.
    pub fn new(input_dim: usize, hidden: usize, embedding_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![hidden, hidden],
            embedding_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `outputs × inputs`
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl Dense {
    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// MLP `input → hidden… → D` followed by projection onto the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    layers: Vec<Dense>,
    version: u64,
}

/// Activations retained by [`EmbeddingModel::forward`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Input of each layer (post-ReLU for hidden layers).
    layer_inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    hidden_pre: Vec<Array2<f64>>,
    /// Output of the last linear layer before normalization.
    raw: Array2<f64>,
    raw_norms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Unit-norm rows, one per input.
    pub embeddings: Array2<f64>,
    pub cache: ForwardCache,
}

impl EmbeddingModel {
    /// He-initialized hidden layers, variance `1/fan_in` on the output layer.
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        if config.input_dim == 0 || config.embedding_dim < 2 || config.hidden.contains(&0) {
            return Err(Error::Domain(format!("invalid model shape {config:?}")));
        }
        let mut sizes = vec![config.input_dim];
        sizes.extend(&config.hidden);
        sizes.push(config.embedding_dim);
        let n_layers = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let gain = if i + 1 < n_layers { 2.0 } else { 1.0 };
                let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(rng));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, version: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// Incremented every time parameters change; caches remember it.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Flattened parameters: per layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
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
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
        self.version += 1;
        Ok(())
    }

    /// One optimizer step on the flattened parameters.
    pub fn apply_gradient(&mut self, optimizer: &mut Adam, grads: &[f64]) -> Result<()> {
        let mut params = self.params();
        optimizer.step(&mut params, grads)?;
        self.set_params(&params)
    }

    pub fn forward(&self, inputs: &Array2<f64>) -> Result<Forward> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut hidden_pre = Vec::with_capacity(last);
        let mut x = inputs.clone();
        for layer in &self.layers[..last] {
            let pre = x.dot(&layer.weights.t()) + &layer.bias;
            layer_inputs.push(x);
            x = pre.mapv(|v| v.max(0.0));
            hidden_pre.push(pre);
        }
        let out = &self.layers[last];
        let raw = x.dot(&out.weights.t()) + &out.bias;
        layer_inputs.push(x);

        let mut embeddings = raw.clone();
        let mut raw_norms = Vec::with_capacity(raw.nrows());
        for mut row in embeddings.outer_iter_mut() {
            let norm = row.dot(&row).sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite("embedding"));
            }
            if norm == 0.0 {
                return Err(Error::DegenerateEmbedding);
            }
            row /= norm;
            raw_norms.push(norm);
        }
        Ok(Forward {
            embeddings,
            cache: ForwardCache {
                version: self.version,
                layer_inputs,
                hidden_pre,
                raw,
                raw_norms,
            },
        })
    }

    /// Backpropagates `d_embeddings` (gradient w.r.t. the unit-norm outputs)
    /// to a flattened parameter gradient in [`params`](Self::params) order.
    pub fn backward(&self, cache: &ForwardCache, d_embeddings: &Array2<f64>) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cache: cache.version,
                model: self.version,
            });
        }
        if d_embeddings.dim() != cache.raw.dim() {
            return Err(Error::DimensionMismatch {
                expected: cache.raw.len(),
                got: d_embeddings.len(),
            });
        }
        // y = z/|z|  =>  dz = (g - y⟨y, g⟩) / |z|
        let mut delta = Array2::zeros(cache.raw.dim());
        for (i, (g, mut dz)) in d_embeddings.outer_iter().zip(delta.outer_iter_mut()).enumerate() {
            let norm = cache.raw_norms[i];
            let y = cache.raw.row(i).mapv(|v| v / norm);
            let radial = y.dot(&g);
            dz.assign(&((&g - &(y * radial)) / norm));
        }

        let mut layer_grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let d_w = delta.t().dot(&cache.layer_inputs[l]);
            let d_b = delta.sum_axis(Axis(0));
            layer_grads.push((d_w, d_b));
            if l > 0 {
                let mut d_in = delta.dot(&self.layers[l].weights);
                d_in.zip_mut_with(&cache.hidden_pre[l - 1], |d, &pre| {
                    if pre <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_in;
            }
        }
        layer_grads.reverse();

        let mut out = Vec::with_capacity(self.num_params());
        for (d_w, d_b) in layer_grads {
            out.extend(d_w.iter());
            out.extend(d_b.iter());
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.weights.ncols(),
                    outputs: l.weights.nrows(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Domain(format!("unknown checkpoint format {:?}", ckpt.format)));
        }
        if ckpt.layers.is_empty() {
            return Err(Error::Domain("checkpoint has no layers".into()));
        }
        let mut layers = Vec::with_capacity(ckpt.layers.len());
        for (i, rec) in ckpt.layers.iter().enumerate() {
            if i > 0 && rec.inputs != ckpt.layers[i - 1].outputs {
                return Err(Error::DimensionMismatch {
                    expected: ckpt.layers[i - 1].outputs,
                    got: rec.inputs,
                });
            }
            let weights = Array2::from_shape_vec((rec.outputs, rec.inputs), rec.weights.clone())
                .map_err(|e| Error::Domain(format!("layer {i}: {e}")))?;
            if rec.bias.len() != rec.outputs {
                return Err(Error::DimensionMismatch {
                    expected: rec.outputs,
                    got: rec.bias.len(),
                });
            }
            layers.push(Dense {
                weights,
                bias: Array1::from(rec.bias.clone()),
            });
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "pads-mlp/1";

/// JSON checkpoint. Each layer carries its shape header followed by the
/// row-major `outputs × inputs` weight matrix and the bias. Floats are written
/// in shortest round-trip form, so save/load is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Losses

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Triplet,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Triplet margin, or the separation of the margin loss.
    pub gamma: f64,
    /// Boundary between positive and negative distances (margin loss).
    pub beta_margin: f64,
    /// Learn one boundary per class (margin loss only).
    pub learn_beta: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Triplet,
            gamma: 0.2,
            beta_margin: 1.2,
            learn_beta: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.gamma > 0.0) {
            problems.push(format!("loss.gamma must be > 0, got {}", self.gamma));
        }
        if self.kind == LossKind::Margin && !(self.beta_margin > 0.0) {
            problems.push(format!("loss.beta must be > 0, got {}", self.beta_margin));
        }
        problems
    }
}

/// `max(0, d_ap² - d_an² + γ)`
pub fn triplet_loss(d_ap: f64, d_an: f64, gamma: f64) -> f64 {
    (d_ap * d_ap - d_an * d_an + gamma).max(0.0)
}

/// `max(0, γ + d_ap - β) + max(0, γ - d_an + β)`
pub fn margin_loss(d_ap: f64, d_an: f64, gamma: f64, beta: f64) -> f64 {
    (gamma + d_ap - beta).max(0.0) + (gamma - d_an + beta).max(0.0)
}

/// Row indices into an embedding batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Loss configuration plus the per-class margin boundaries when those are learned.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub config: LossConfig,
    class_betas: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TripletGradient {
    /// Mean loss over the triplets.
    pub loss: f64,
    /// Triplets with a non-zero loss.
    pub active: usize,
    pub d_embeddings: Array2<f64>,
    /// Gradient w.r.t. the per-class boundaries, when learned.
    pub d_betas: Option<Vec<f64>>,
}

impl Objective {
    pub fn new(config: LossConfig, n_classes: usize) -> Self {
        let class_betas =
            (config.kind == LossKind::Margin && config.learn_beta).then(|| vec![config.beta_margin; n_classes]);
        Self { config, class_betas }
    }

    pub fn beta_for(&self, class: usize) -> f64 {
        match &self.class_betas {
            Some(b) => b[class],
            None => self.config.beta_margin,
        }
    }

    pub fn class_betas(&self) -> Option<&[f64]> {
        self.class_betas.as_deref()
    }

    pub fn class_betas_mut(&mut self) -> Option<&mut Vec<f64>> {
        self.class_betas.as_mut()
    }

    /// Mean loss over `triplets` and its gradient w.r.t. the embedding rows.
    pub fn evaluate(
        &self,
        embeddings: &Array2<f64>,
        labels: &[usize],
        triplets: &[Triplet],
    ) -> Result<TripletGradient> {
        let (n, dim) = embeddings.dim();
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        let mut d_emb = Array2::<f64>::zeros((n, dim));
        let mut d_betas = self.class_betas.as_ref().map(|b| vec![0.0; b.len()]);
        if triplets.is_empty() {
            return Ok(TripletGradient {
                loss: 0.0,
                active: 0,
                d_embeddings: d_emb,
                d_betas,
            });
        }
        let scale = 1.0 / triplets.len() as f64;
        let gamma = self.config.gamma;
        let mut total = 0.0;
        let mut active = 0;
        for t in triplets {
            if t.anchor >= n || t.positive >= n || t.negative >= n {
                return Err(Error::Domain(format!("triplet {t:?} out of range for {n} rows")));
            }
            let a = embeddings.row(t.anchor);
            let diff_ap = &a - &embeddings.row(t.positive);
            let diff_an = &a - &embeddings.row(t.negative);
            let d_ap = diff_ap.dot(&diff_ap).sqrt();
            let d_an = diff_an.dot(&diff_an).sqrt();
            match self.config.kind {
                LossKind::Triplet => {
                    let l = triplet_loss(d_ap, d_an, gamma);
                    if l > 0.0 {
                        active += 1;
                        total += l;
                        // ∂/∂a = 2(a-p) - 2(a-n), ∂/∂p = -2(a-p), ∂/∂n = 2(a-n)
                        let g_ap = &diff_ap * (2.0 * scale);
                        let g_an = &diff_an * (2.0 * scale);
                        let mut ra = d_emb.row_mut(t.anchor);
                        ra += &g_ap;
                        ra -= &g_an;
                        let mut rp = d_emb.row_mut(t.positive);
                        rp -= &g_ap;
                        let mut rn = d_emb.row_mut(t.negative);
                        rn += &g_an;
                    }
                }
                LossKind::Margin => {
                    let class = labels[t.anchor];
                    let beta = self.beta_for(class);
                    let pos = gamma + d_ap - beta;
                    let neg = gamma - d_an + beta;
                    if pos > 0.0 || neg > 0.0 {
                        active += 1;
                    }
                    if pos > 0.0 {
                        total += pos;
                        if d_ap > 0.0 {
                            let g = &diff_ap * (scale / d_ap);
                            let mut ra = d_emb.row_mut(t.anchor);
                            ra += &g;
                            let mut rp = d_emb.row_mut(t.positive);
                            rp -= &g;
                        }
                        if let Some(db) = d_betas.as_mut() {
                            db[class] -= scale;
                        }
                    }
                    if neg > 0.0 {
                        total += neg;
                        if d_an > 0.0 {
                            let g = &diff_an * (scale / d_an);
                            let mut ra = d_emb.row_mut(t.anchor);
                            ra -= &g;
                            let mut rn = d_emb.row_mut(t.negative);
                            rn += &g;
                        }
                        if let Some(db) = d_betas.as_mut() {
                            db[class] += scale;
                        }
                    }
                }
            }
        }
        Ok(TripletGradient {
            loss: total * scale,
            active,
            d_embeddings: d_emb,
            d_betas,
        })
    }
}

/// Parameter gradient of the mean triplet loss for a cached forward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub active: usize,
    pub params: Vec<f64>,
    pub betas: Option<Vec<f64>>,
}

pub fn backward(
    model: &EmbeddingModel,
    forward: &Forward,
    labels: &[usize],
    triplets: &[Triplet],
    objective: &Objective,
) -> Result<Gradients> {
    let tg = objective.evaluate(&forward.embeddings, labels, triplets)?;
    let params = model.backward(&forward.cache, &tg.d_embeddings)?;
    Ok(Gradients {
        loss: tg.loss,
        active: tg.active,
        params,
        betas: tg.d_betas,
    })
}

// ---------------------------------------------------------------------------
// Optimizer

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. The moments persist across calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Fails fast on a non-finite gradient, leaving `params` untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
