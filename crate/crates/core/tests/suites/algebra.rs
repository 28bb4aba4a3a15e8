//! Histogram update algebra.

use pads::rng::{stream, Stream};
use pads::samplers::{ActionMultipliers, ActionVector, Adjustment, SamplingPmf};
use rand::Rng;

pub fn worked_example() {
    let p = SamplingPmf::new(0.1, 1.4, vec![1.0 / 3.0; 3]).unwrap();
    let a = ActionVector(vec![Adjustment::Increase, Adjustment::Maintain, Adjustment::Decrease]);
    let q = p.apply_action(&a, &ActionMultipliers::default()).unwrap();
    for (got, want) in q.probs().iter().zip([0.4098, 0.3279, 0.2623]) {
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}

/// `runs` independent histograms, each pushed through 1000 random actions.
pub fn long_random_action_runs(runs: u64) {
    let m = ActionMultipliers::default();
    for run in 0..runs {
        let mut rng = stream(run, Stream::PolicyActions);
        let k = rng.random_range(2..=40);
        let weights: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random() })
            .collect();
        let Ok(mut p) = SamplingPmf::from_weights(0.1, 1.4, weights) else {
            continue;
        };
        for step in 0..1000 {
            let a = ActionVector((0..k).map(|_| Adjustment::ALL[rng.random_range(0..3)]).collect());
            p = p.apply_action(&a, &m).unwrap();
            let total: f64 = p.probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "run {run} step {step}: sum {total}");
            assert!(
                p.probs().iter().all(|x| *x >= 0.0),
                "run {run} step {step}: negative mass"
            );
        }
    }
}
