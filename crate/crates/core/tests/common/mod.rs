//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written the slow, obvious way: explicit loops, direct
//! Euclidean distances, entropies from contingency tables.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn unit_vectors<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros((n, dim));
    for mut row in out.rows_mut() {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (dst, x) in row.iter_mut().zip(v) {
            *dst = x / norm;
        }
    }
    out
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn row(v: &Array2<f64>, i: usize) -> Vec<f64> {
    v.row(i).to_vec()
}

pub fn direct_distances(v: &Array2<f64>) -> Vec<Vec<f64>> {
    let n = v.nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { euclid(&row(v, i), &row(v, j)) })
                .collect()
        })
        .collect()
}

/// Recall@k by listing every neighbour in (distance, index) order.
pub fn recall_oracle(v: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
    let d = direct_distances(v);
    let n = labels.len();
    let mut hits = 0;
    for q in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != q).map(|j| (d[q][j], j)).collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if others.iter().take(k).any(|&(_, j)| labels[j] == labels[q]) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

/// `(H(A) + H(B) - H(A, B)) * 2 / (H(A) + H(B))` from explicit tables.
pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let h = |counts: Vec<usize>| -> f64 {
        counts
            .into_iter()
            .filter(|&c| c > 0)
            .map(|c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    };
    let ha = h(table.iter().map(|r| r.iter().sum()).collect());
    let hb = h((0..kb).map(|y| table.iter().map(|r| r[y]).sum()).collect());
    let hab = h(table.iter().flatten().copied().collect());
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    2.0 * (ha + hb - hab) / (ha + hb)
}

pub fn class_stats_oracle(v: &Array2<f64>, labels: &[usize]) -> (f64, f64) {
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if i < j {
                let d = euclid(&row(v, i), &row(v, j));
                if labels[i] == labels[j] {
                    intra.push(d);
                } else {
                    inter.push(d);
                }
            }
        }
    }
    let mean = |x: &[f64]| {
        if x.is_empty() {
            0.0
        } else {
            x.iter().sum::<f64>() / x.len() as f64
        }
    };
    (mean(&intra), mean(&inter))
}

/// Exhaustive semihard choice: smallest `d > d_ap`, lowest id on ties,
/// otherwise the largest distance with the lowest id.
pub fn semihard_oracle(d_ap: f64, ids: &[usize], d: &[f64]) -> (usize, bool) {
    let mut best: Option<(f64, usize)> = None;
    for (&id, &dist) in ids.iter().zip(d) {
        if dist > d_ap {
            let better = match best {
                None => true,
                Some((bd, bid)) => dist < bd || (dist == bd && id < bid),
            };
            if better {
                best = Some((dist, id));
            }
        }
    }
    if let Some((_, id)) = best {
        return (id, false);
    }
    let mut far = (f64::NEG_INFINITY, usize::MAX);
    for (&id, &dist) in ids.iter().zip(d) {
        if dist > far.0 || (dist == far.0 && id < far.1) {
            far = (dist, id);
        }
    }
    (far.1, true)
}

/// Numerically integrates the unnormalized sphere distance density over each bin.
pub fn density_bin_masses(edges: &[f64], dim: usize) -> Vec<f64> {
    let q = |d: f64| d.powi(dim as i32 - 2) * (1.0 - d * d / 4.0).max(0.0).powf((dim as f64 - 3.0) / 2.0);
    let steps = 2000;
    let masses: Vec<f64> = edges
        .windows(2)
        .map(|e| {
            // composite Simpson
            let h = (e[1] - e[0]) / steps as f64;
            let mut s = q(e[0]) + q(e[1]);
            for i in 1..steps {
                let x = e[0] + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * q(x);
            }
            s * h / 3.0
        })
        .collect();
    let total: f64 = masses.iter().sum();
    masses.into_iter().map(|m| m / total).collect()
}

/// Central finite difference of `f` along every coordinate of `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a - b‖ / max(‖a‖ + ‖b‖, tiny)`; zero for two zero vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Pearson χ² statistic of observed counts against expected probabilities.
pub fn chi_square(observed: &[usize], probs: &[f64]) -> (f64, usize) {
    let n: usize = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p > 0.0 {
            let e = p * n as f64;
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            assert_eq!(o, 0, "zero-probability outcome was observed");
        }
    }
    (stat, cells.saturating_sub(1))
}

pub fn chi_square_p_value(observed: &[usize], probs: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let (stat, dof) = chi_square(observed, probs);
    if dof == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

/// Two-sided Kolmogorov–Smirnov statistic against `U[lo, hi]`.
pub fn ks_uniform(samples: &mut [f64], lo: f64, hi: f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut worst: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        worst = worst
            .max((cdf - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - cdf).abs());
    }
    worst
}
