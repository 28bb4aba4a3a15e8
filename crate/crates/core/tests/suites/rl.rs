//! Reward and update-rule contracts.

use pads::model::{Adam, AdamConfig};
use pads::rl::*;
use pads::rng::{stream, RunRng, Stream};
use rand::Rng;

pub fn shape(value_head: bool) -> PolicyShape {
    PolicyShape {
        state_dim: 6,
        hidden: 8,
        bins: 4,
        value_head,
    }
}

pub fn state(rng: &mut RunRng) -> TrainingState {
    TrainingState((0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
}

pub fn transition(p: &PolicyNetwork, rng: &mut RunRng, reward: f64) -> Transition {
    let s = state(rng);
    let out = p.forward(&s.0).unwrap();
    let (action, lp) = sample_action(&out.logits, rng).unwrap();
    Transition {
        state: s,
        action,
        log_prob: lp,
        reward,
        value: out.value,
        old_log_prob: None,
    }
}

pub fn reward_examples() {
    assert_eq!(compute_reward(1.30, 1.10), 1);
    assert_eq!(compute_reward(1.0, 1.0), 0);
    assert_eq!(compute_reward(0.90, 1.00), -1);
    let mut rng = stream(1, Stream::Evaluation);
    for _ in 0..1000 {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        assert!([-1, 0, 1].contains(&compute_reward(a, b)));
    }
}

pub fn clipped_transitions_contribute_no_policy_gradient() {
    let mut rng = stream(7, Stream::PolicyInit);
    let p = PolicyNetwork::new(shape(false), &mut rng).unwrap();
    for (ratio, reward) in [(1.5, 1.0), (0.5, -1.0)] {
        let mut t = transition(&p, &mut rng, reward);
        t.old_log_prob = Some(t.log_prob - f64::ln(ratio));
        let g = ppo_gradient(&p, std::slice::from_ref(&t), 0.2, Advantage::Baseline(0.0)).unwrap();
        assert_eq!(g.clipped, 1);
        assert!(g.grads.iter().all(|v| *v == 0.0));
        let bound = if ratio > 1.0 { 1.2 } else { 0.8 };
        assert!((g.objective - bound * reward).abs() < 1e-12);
    }
    // Inside the trust region the unclipped branch is used.
    let mut t = transition(&p, &mut rng, 1.0);
    t.old_log_prob = Some(t.log_prob - f64::ln(1.1));
    let g = ppo_gradient(&p, std::slice::from_ref(&t), 0.2, Advantage::Baseline(0.0)).unwrap();
    assert_eq!(g.clipped, 0);
    assert!(g.grads.iter().any(|v| *v != 0.0));
}

pub fn unbounded_ppo_step_equals_a2c_step() {
    let mut rng = stream(9, Stream::PolicyInit);
    let p = PolicyNetwork::new(shape(true), &mut rng).unwrap();
    let t = transition(&p, &mut rng, 1.0);
    let mut tp = t.clone();
    tp.old_log_prob = Some(log_prob(&p.forward(&t.state.0).unwrap().logits, &t.action).unwrap());
    let a2c = a2c_gradient(&p, std::slice::from_ref(&t)).unwrap();
    let ppo = ppo_gradient(&p, std::slice::from_ref(&tp), f64::INFINITY, Advantage::Critic).unwrap();
    assert_eq!(a2c.grads, ppo.grads);

    let step = |grads: &[f64]| {
        let mut params = p.params();
        Adam::new(AdamConfig::with_lr(1e-4), params.len())
            .step(&mut params, grads)
            .unwrap();
        params
    };
    assert_eq!(step(&a2c.grads), step(&ppo.grads));
}
