//! Central finite-difference checks (`h = 1e-5`) of every hand-derived gradient.

use crate::common::{numeric_gradient, relative_error};
use ndarray::Array2;
use pads::model::{self, EmbeddingModel, LossConfig, LossKind, ModelConfig, Objective, Triplet};
use pads::rl::{
    a2c_gradient, log_prob, log_prob_grad, ppo_gradient, reinforce_gradient, sample_action, Advantage, PolicyNetwork,
    PolicyShape, TrainingState, Transition,
};
use pads::rng::{stream, RunRng, Stream};
use rand::Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
pub const CONFIGS: usize = 60;

fn gaussian(rng: &mut RunRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn random_triplets(rng: &mut RunRng, labels: &[usize]) -> Vec<Triplet> {
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        let pos: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
        let neg: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        out.push(Triplet {
            anchor: a,
            positive: pos[rng.random_range(0..pos.len())],
            negative: neg[rng.random_range(0..neg.len())],
        });
    }
    out
}

/// Whether any hinge sits within `margin` of its kink.
fn near_kink(emb: &Array2<f64>, triplets: &[Triplet], objective: &Objective, labels: &[usize], margin: f64) -> bool {
    triplets.iter().any(|t| {
        let d = |i: usize, j: usize| {
            let diff = &emb.row(i) - &emb.row(j);
            diff.dot(&diff).sqrt()
        };
        let (ap, an) = (d(t.anchor, t.positive), d(t.anchor, t.negative));
        let g = objective.config.gamma;
        match objective.config.kind {
            LossKind::Triplet => (ap * ap - an * an + g).abs() < margin,
            LossKind::Margin => {
                let b = objective.beta_for(labels[t.anchor]);
                (g + ap - b).abs() < margin || (g - an + b).abs() < margin
            }
        }
    })
}

fn loss_config(kind: LossKind, learn_beta: bool) -> LossConfig {
    LossConfig {
        kind,
        learn_beta,
        ..LossConfig::default()
    }
}

pub fn check_loss_on_embeddings(kind: LossKind, seed: u64) {
    let mut rng = stream(seed, Stream::Data);
    let mut checked = 0;
    while checked < CONFIGS {
        let n = rng.random_range(4..9);
        let dim = rng.random_range(2..6);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let emb = gaussian(&mut rng, n, dim) * 0.6;
        let triplets = random_triplets(&mut rng, &labels);
        let objective = Objective::new(loss_config(kind, false), 2);
        if near_kink(&emb, &triplets, &objective, &labels, 1e-3) {
            continue;
        }
        let analytic = objective.evaluate(&emb, &labels, &triplets).unwrap();
        let flat: Vec<f64> = emb.iter().copied().collect();
        let numeric = numeric_gradient(&flat, H, |x| {
            let e = Array2::from_shape_vec((n, dim), x.to_vec()).unwrap();
            objective.evaluate(&e, &labels, &triplets).unwrap().loss
        });
        let got: Vec<f64> = analytic.d_embeddings.iter().copied().collect();
        let err = relative_error(&got, &numeric);
        assert!(err < TOL, "{kind:?} config {checked}: relative error {err}");
        checked += 1;
    }
}

pub fn triplet_loss_gradient() {
    check_loss_on_embeddings(LossKind::Triplet, 1);
}

pub fn margin_loss_gradient() {
    check_loss_on_embeddings(LossKind::Margin, 2);
}

pub fn learned_margin_boundary_gradient() {
    let mut rng = stream(3, Stream::Data);
    let mut checked = 0;
    while checked < CONFIGS {
        let n = 6;
        let labels = vec![0, 0, 1, 1, 2, 2];
        let emb = gaussian(&mut rng, n, 3) * 0.6;
        let triplets = random_triplets(&mut rng, &labels);
        let mut objective = Objective::new(loss_config(LossKind::Margin, true), 3);
        let betas: Vec<f64> = (0..3).map(|_| rng.random_range(0.4..1.6)).collect();
        objective.class_betas_mut().unwrap().clone_from(&betas);
        if near_kink(&emb, &triplets, &objective, &labels, 1e-3) {
            continue;
        }
        let analytic = objective.evaluate(&emb, &labels, &triplets).unwrap().d_betas.unwrap();
        let numeric = numeric_gradient(&betas, H, |b| {
            let mut o = objective.clone();
            o.class_betas_mut().unwrap().copy_from_slice(b);
            o.evaluate(&emb, &labels, &triplets).unwrap().loss
        });
        assert!(relative_error(&analytic, &numeric) < TOL);
        checked += 1;
    }
}

pub fn embedding_mlp_gradient() {
    let mut rng = stream(4, Stream::ModelInit);
    let mut c = 0;
    while c < CONFIGS {
        let cfg = ModelConfig::new(rng.random_range(2..6), rng.random_range(2..8), rng.random_range(2..5));
        let mut m = EmbeddingModel::new(&cfg, &mut rng).unwrap();
        assert!(m.num_params() <= 500);
        let n = rng.random_range(1..5);
        let x = gaussian(&mut rng, n, cfg.input_dim);
        let probe = gaussian(&mut rng, n, cfg.embedding_dim);
        // Narrow random ReLU stacks can map a row to the origin; redraw those.
        let Ok(fwd) = m.forward(&x) else { continue };
        let analytic = m.backward(&fwd.cache, &probe).unwrap();
        let p0 = m.params();
        let numeric = numeric_gradient(&p0, H, |p| {
            m.set_params(p).unwrap();
            (&m.forward(&x).unwrap().embeddings * &probe).sum()
        });
        let err = relative_error(&analytic, &numeric);
        assert!(err < TOL, "config {c}: relative error {err}");
        c += 1;
    }
}

pub fn end_to_end_loss_gradient() {
    let mut rng = stream(5, Stream::ModelInit);
    let mut checked = 0;
    while checked < CONFIGS {
        let kind = if checked % 2 == 0 {
            LossKind::Triplet
        } else {
            LossKind::Margin
        };
        let cfg = ModelConfig::new(4, 6, 3);
        let mut m = EmbeddingModel::new(&cfg, &mut rng).unwrap();
        let labels = vec![0, 0, 1, 1, 2, 2];
        let x = gaussian(&mut rng, 6, 4);
        let triplets = random_triplets(&mut rng, &labels);
        let objective = Objective::new(loss_config(kind, false), 3);
        let Ok(fwd) = m.forward(&x) else { continue };
        if near_kink(&fwd.embeddings, &triplets, &objective, &labels, 1e-3) {
            continue;
        }
        let analytic = model::backward(&m, &fwd, &labels, &triplets, &objective).unwrap();
        let p0 = m.params();
        let mut loss_at = |p: &[f64]| {
            m.set_params(p).unwrap();
            let e = m.forward(&x).unwrap().embeddings;
            objective.evaluate(&e, &labels, &triplets).unwrap().loss
        };
        let numeric = numeric_gradient(&p0, H, &mut loss_at);
        // A ReLU or hinge crossing inside the stencil shows up as step-size dependence.
        if relative_error(&numeric, &numeric_gradient(&p0, H / 4.0, &mut loss_at)) > TOL {
            eprintln!("skipping non-smooth config");
            continue;
        }
        let err = relative_error(&analytic.params, &numeric);
        assert!(err < TOL, "{kind:?} config {checked}: relative error {err}");
        checked += 1;
    }
}

fn small_policy(rng: &mut RunRng, value_head: bool) -> PolicyNetwork {
    let shape = PolicyShape {
        state_dim: rng.random_range(2..7),
        hidden: rng.random_range(2..7),
        bins: rng.random_range(1..5),
        value_head,
    };
    // Larger-than-default heads so the softmax is far from uniform.
    let mut p = PolicyNetwork::new(shape, rng).unwrap();
    let scaled: Vec<f64> = p
        .params()
        .iter()
        .map(|w| w + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    p.set_params(&scaled).unwrap();
    p
}

fn random_state(rng: &mut RunRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn policy_log_prob_gradient() {
    let mut rng = stream(6, Stream::PolicyInit);
    for c in 0..CONFIGS {
        let mut p = small_policy(&mut rng, c % 2 == 0);
        let s = random_state(&mut rng, p.shape().state_dim);
        let (out, cache) = p.forward_cached(&s).unwrap();
        let (action, _) = sample_action(&out.logits, &mut rng).unwrap();
        let analytic = p.backward(&cache, &log_prob_grad(&out.logits, &action), 0.0).unwrap();
        let p0 = p.params();
        let numeric = numeric_gradient(&p0, H, |q| {
            p.set_params(q).unwrap();
            log_prob(&p.forward(&s).unwrap().logits, &action).unwrap()
        });
        let err = relative_error(&analytic, &numeric);
        assert!(err < TOL, "config {c}: relative error {err}");
    }
}

pub fn value_head_gradient() {
    let mut rng = stream(7, Stream::PolicyInit);
    for c in 0..CONFIGS {
        let mut p = small_policy(&mut rng, true);
        let s = random_state(&mut rng, p.shape().state_dim);
        let (out, cache) = p.forward_cached(&s).unwrap();
        let zeros = vec![[0.0; 3]; out.logits.len()];
        let analytic = p.backward(&cache, &zeros, 1.0).unwrap();
        let p0 = p.params();
        let numeric = numeric_gradient(&p0, H, |q| {
            p.set_params(q).unwrap();
            p.forward(&s).unwrap().value.unwrap()
        });
        let err = relative_error(&analytic, &numeric);
        assert!(err < TOL, "config {c}: relative error {err}");
    }
}

fn transition(p: &PolicyNetwork, rng: &mut RunRng) -> Transition {
    let s = random_state(rng, p.shape().state_dim);
    let out = p.forward(&s).unwrap();
    let (action, lp) = sample_action(&out.logits, rng).unwrap();
    Transition {
        state: TrainingState(s),
        action,
        log_prob: lp,
        reward: [-1.0, 0.0, 1.0][rng.random_range(0..3)],
        value: out.value,
        old_log_prob: None,
    }
}

pub fn update_rule_gradients() {
    let mut rng = stream(8, Stream::PolicyActions);
    for c in 0..CONFIGS {
        // REINFORCE with a baseline
        let mut p = small_policy(&mut rng, false);
        let t = transition(&p, &mut rng);
        let b = rng.random_range(-0.5..0.5);
        let analytic = reinforce_gradient(&p, std::slice::from_ref(&t), b).unwrap().grads;
        let p0 = p.params();
        let numeric = numeric_gradient(&p0, H, |q| {
            p.set_params(q).unwrap();
            -log_prob(&p.forward(&t.state.0).unwrap().logits, &t.action).unwrap() * (t.reward - b)
        });
        assert!(relative_error(&analytic, &numeric) < TOL, "reinforce config {c}");

        // A2C: the advantage is a constant in the policy term
        let mut p = small_policy(&mut rng, true);
        let t = transition(&p, &mut rng);
        let v0 = p.forward(&t.state.0).unwrap().value.unwrap();
        let analytic = a2c_gradient(&p, std::slice::from_ref(&t)).unwrap().grads;
        let p0 = p.params();
        let numeric = numeric_gradient(&p0, H, |q| {
            p.set_params(q).unwrap();
            let out = p.forward(&t.state.0).unwrap();
            0.5 * (out.value.unwrap() - t.reward).powi(2) - log_prob(&out.logits, &t.action).unwrap() * (t.reward - v0)
        });
        assert!(relative_error(&analytic, &numeric) < TOL, "a2c config {c}");

        // PPO against a perturbed reference policy
        let mut p = small_policy(&mut rng, true);
        let mut t = transition(&p, &mut rng);
        let old = t.log_prob + rng.random_range(-0.4..0.4);
        t.old_log_prob = Some(old);
        let eps = 0.2;
        let v0 = p.forward(&t.state.0).unwrap().value.unwrap();
        let adv = t.reward - v0;
        let rho0 = (t.log_prob - old).exp();
        if ((rho0 - (1.0 - eps)).abs() < 1e-3) || ((rho0 - (1.0 + eps)).abs() < 1e-3) {
            continue;
        }
        let analytic = ppo_gradient(&p, std::slice::from_ref(&t), eps, Advantage::Critic)
            .unwrap()
            .grads;
        let p0 = p.params();
        let numeric = numeric_gradient(&p0, H, |q| {
            p.set_params(q).unwrap();
            let out = p.forward(&t.state.0).unwrap();
            let rho = (log_prob(&out.logits, &t.action).unwrap() - old).exp();
            let surrogate = (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv);
            0.5 * (out.value.unwrap() - t.reward).powi(2) - surrogate
        });
        assert!(relative_error(&analytic, &numeric) < TOL, "ppo config {c}");
    }
}
