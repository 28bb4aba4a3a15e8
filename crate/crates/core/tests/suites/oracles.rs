//! Brute-force oracle equivalence on random instances.

use ndarray::Array2;
use pads::geometry::EmbeddingBatch;
use pads::metrics::{class_distance_stats, nmi_from_assignments, recall_at_k};
use pads::rng::{stream, Stream};
use pads::samplers::sample_negative_semihard;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::common;

pub fn random_instance<R: Rng>(rng: &mut R, n: usize, dim: usize, classes: usize) -> (Array2<f64>, Vec<usize>) {
    let mut v = common::unit_vectors(n, dim, rng);
    // Occasional exact duplicates exercise the index tie-break.
    if n > 3 && rng.random_bool(0.3) {
        let src = v.row(0).to_owned();
        v.row_mut(n - 1).assign(&src);
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(rng);
    (v, labels)
}

pub fn recall_matches_exhaustive_scan() {
    let mut rng = stream(21, Stream::Evaluation);
    for case in 0..200 {
        let n = rng.random_range(6..=32);
        let (dim, classes) = (rng.random_range(2..6), rng.random_range(2..5));
        let (v, labels) = random_instance(&mut rng, n, dim, classes);
        let got = recall_at_k(&EmbeddingBatch::new(v.clone(), labels.clone()).unwrap(), &[1, 2, 4]).unwrap();
        for (slot, k) in [1, 2, 4].into_iter().enumerate() {
            assert_eq!(got[slot], common::recall_oracle(&v, &labels, k), "case {case} k {k}");
        }
    }
}

pub fn nmi_matches_entropy_oracle() {
    let mut rng = stream(22, Stream::Evaluation);
    for case in 0..200 {
        let n = rng.random_range(2..=32);
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let got = nmi_from_assignments(&a, &b).unwrap();
        let want = common::nmi_oracle(&a, &b);
        assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
        assert!((nmi_from_assignments(&b, &a).unwrap() - got).abs() < 1e-12);
    }
}

pub fn class_stats_match_pair_enumeration() {
    let mut rng = stream(23, Stream::Evaluation);
    for case in 0..200 {
        let n = rng.random_range(4..=16);
        let (dim, classes) = (rng.random_range(2..8), rng.random_range(2..4));
        let (v, labels) = random_instance(&mut rng, n, dim, classes);
        let got = class_distance_stats(&EmbeddingBatch::new(v.clone(), labels.clone()).unwrap()).unwrap();
        let (intra, inter) = common::class_stats_oracle(&v, &labels);
        assert!((got.intra - intra).abs() < 1e-9, "case {case}: {got:?} vs {intra}");
        assert!((got.inter - inter).abs() < 1e-9, "case {case}: {got:?} vs {inter}");
        assert!(got.intra <= 2.0 && got.inter <= 2.0, "{got:?}");
    }
}

pub fn semihard_matches_exhaustive_oracle() {
    let mut rng = stream(12, Stream::Negatives);
    for case in 0..200 {
        let n = rng.random_range(1..20);
        // Quantized distances force ties.
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0..16) as f64 / 8.0).collect();
        let mut ids: Vec<usize> = (0..n).map(|i| i * 3 + rng.random_range(0..3)).collect();
        ids.reverse();
        let d_ap = rng.random_range(0..16) as f64 / 8.0;
        let got = sample_negative_semihard(d_ap, &ids, &d).unwrap();
        assert_eq!(
            (got.index, got.fallback),
            common::semihard_oracle(d_ap, &ids, &d),
            "case {case}"
        );
    }
}
