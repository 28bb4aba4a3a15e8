mod common;
mod suites;

use pads::rl::*;
use pads::rng::{stream, Stream};
use pads::samplers::{ActionVector, Adjustment};
use rand::Rng;
use suites::rl::{shape, state, transition};

#[test]
fn uniform_heads_give_uniform_joint_actions() {
    let logits = vec![[0.0; 3]; 2];
    let mut rng = stream(2, Stream::PolicyActions);
    let mut counts = [0usize; 9];
    for _ in 0..100_000 {
        let (a, lp) = sample_action(&logits, &mut rng).unwrap();
        assert!((lp - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
        counts[a.0[0].index() * 3 + a.0[1].index()] += 1;
    }
    for c in counts {
        assert!((c as f64 / 1e5 - 1.0 / 9.0).abs() < 0.01);
    }
}

#[test]
fn dominant_head_always_maintains() {
    let logits = vec![[-40.0, 40.0, -40.0]];
    let mut rng = stream(3, Stream::PolicyActions);
    for _ in 0..1000 {
        assert_eq!(sample_action(&logits, &mut rng).unwrap().0 .0[0], Adjustment::Maintain);
    }
}

#[test]
fn log_prob_matches_manual_softmax() {
    let mut rng = stream(4, Stream::PolicyActions);
    for _ in 0..200 {
        let logits: Vec<[f64; 3]> = (0..5)
            .map(|_| {
                [
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                ]
            })
            .collect();
        let (a, lp) = sample_action(&logits, &mut rng).unwrap();
        let manual: f64 = logits
            .iter()
            .zip(&a.0)
            .map(|(z, adj)| {
                let denom: f64 = z.iter().map(|v| v.exp()).sum();
                (z[adj.index()].exp() / denom).ln()
            })
            .sum();
        assert!((lp - manual).abs() < 1e-9);
        assert!((log_prob(&logits, &a).unwrap() - manual).abs() < 1e-9);
        for z in &logits {
            assert!((softmax(z).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn reinforce_direction_and_zero_advantage() {
    let mut rng = stream(5, Stream::PolicyInit);
    let p = PolicyNetwork::new(shape(false), &mut rng).unwrap();
    let t = transition(&p, &mut rng, 1.0);
    let g = reinforce_gradient(&p, std::slice::from_ref(&t), 0.0).unwrap();
    let (out, cache) = p.forward_cached(&t.state.0).unwrap();
    let grad_lp = p.backward(&cache, &log_prob_grad(&out.logits, &t.action), 0.0).unwrap();
    // The loss gradient is -∇ log π, so a descent step moves along +∇ log π.
    for (a, b) in g.grads.iter().zip(&grad_lp) {
        assert_eq!(*a, -b);
    }
    let z = reinforce_gradient(&p, std::slice::from_ref(&t), 1.0).unwrap();
    assert!(z.grads.iter().all(|v| *v == 0.0));
}

#[test]
fn a2c_with_exact_value_is_stationary() {
    let mut rng = stream(6, Stream::PolicyInit);
    let p = PolicyNetwork::new(shape(true), &mut rng).unwrap();
    let mut t = transition(&p, &mut rng, 0.0);
    t.reward = p.forward(&t.state.0).unwrap().value.unwrap();
    let g = a2c_gradient(&p, std::slice::from_ref(&t)).unwrap();
    assert_eq!(g.value_loss, 0.0);
    assert!(g.grads.iter().all(|v| *v == 0.0));
    assert!(a2c_gradient(&PolicyNetwork::new(shape(false), &mut rng).unwrap(), &[t]).is_err());
}

#[test]
fn ppo_surrogate_matches_direct_formula() {
    let mut rng = stream(8, Stream::PolicyInit);
    let p = PolicyNetwork::new(shape(false), &mut rng).unwrap();
    for _ in 0..200 {
        let mut ts = Vec::new();
        for _ in 0..rng.random_range(1..5) {
            let reward = [-1.0, 0.0, 1.0][rng.random_range(0..3)];
            let mut t = transition(&p, &mut rng, reward);
            t.old_log_prob = Some(t.log_prob + rng.random_range(-0.5..0.5));
            ts.push(t);
        }
        let b = rng.random_range(-0.5..0.5);
        let eps = rng.random_range(0.05..0.5);
        let g = ppo_gradient(&p, &ts, eps, Advantage::Baseline(b)).unwrap();
        let direct: f64 = ts
            .iter()
            .map(|t| {
                let rho = (t.log_prob - t.old_log_prob.unwrap()).exp();
                let a = t.reward - b;
                (rho * a).min(rho.clamp(1.0 - eps, 1.0 + eps) * a)
            })
            .sum::<f64>()
            / ts.len() as f64;
        assert!((g.objective - direct).abs() < 1e-9);
    }
}

#[test]
fn value_head_fits_a_constant_reward() {
    let config = TeacherConfig {
        algorithm: RlAlgorithm::A2c,
        hidden: 16,
        lr: 1e-3,
        ..TeacherConfig::default()
    };
    let mut rng = stream(10, Stream::PolicyInit);
    let mut teacher = Teacher::new(config, 6, 3, &mut rng).unwrap();
    let s = state(&mut rng);
    for _ in 0..3000 {
        let (action, lp, value) = teacher.act(&s, &mut rng).unwrap();
        teacher
            .update(Transition {
                state: s.clone(),
                action,
                log_prob: lp,
                reward: 0.6,
                value,
                old_log_prob: None,
            })
            .unwrap();
    }
    let v = teacher.policy().forward(&s.0).unwrap().value.unwrap();
    assert!((v - 0.6).abs() < 1e-2, "{v}");
}

#[test]
fn ema_baseline_tracks_rewards() {
    let config = TeacherConfig {
        algorithm: RlAlgorithm::ReinforceEma,
        hidden: 8,
        ..TeacherConfig::default()
    };
    let mut rng = stream(11, Stream::PolicyInit);
    let mut teacher = Teacher::new(config, 6, 2, &mut rng).unwrap();
    let s = state(&mut rng);
    for i in 0..50 {
        let before = teacher.baseline();
        let stats = teacher
            .update(Transition {
                state: s.clone(),
                action: ActionVector::identity(2),
                log_prob: 0.0,
                reward: 1.0,
                value: None,
                old_log_prob: None,
            })
            .unwrap();
        assert_eq!(stats.advantage_baseline, before);
        assert!((teacher.baseline() - (1.0 - 0.9f64.powi(i + 1))).abs() < 1e-12);
    }
}

#[test]
fn old_policy_refreshes_on_schedule() {
    let config = TeacherConfig {
        algorithm: RlAlgorithm::PpoA2c,
        hidden: 8,
        lr: 1e-2,
        old_policy_refresh: 3,
        ..TeacherConfig::default()
    };
    let mut rng = stream(12, Stream::PolicyInit);
    let mut teacher = Teacher::new(config, 6, 2, &mut rng).unwrap();
    let s = state(&mut rng);
    for i in 1..=7 {
        let (action, lp, value) = teacher.act(&s, &mut rng).unwrap();
        teacher
            .update(Transition {
                state: s.clone(),
                action,
                log_prob: lp,
                reward: 1.0,
                value,
                old_log_prob: None,
            })
            .unwrap();
        assert_eq!(teacher.old_policy() == teacher.policy(), i % 3 == 0, "update {i}");
    }
}

#[test]
fn reward_examples() {
    suites::rl::reward_examples();
}

#[test]
fn clipped_transitions_contribute_no_policy_gradient() {
    suites::rl::clipped_transitions_contribute_no_policy_gradient();
}

#[test]
fn unbounded_ppo_step_equals_a2c_step() {
    suites::rl::unbounded_ppo_step_equals_a2c_step();
}
