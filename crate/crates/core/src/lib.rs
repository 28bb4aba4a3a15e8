//! Policy-adapted negative sampling for triplet-based metric learning.
//!
//! A small embedding network is trained with triplet or margin losses while a
//! reinforcement-learning teacher reshapes the distribution from which
//! negatives are drawn. The distribution is a histogram over anchor-negative
//! distances; every `M` training iterations the teacher observes validation
//! metrics, receives the sign of the change in `Recall@1 + NMI` as reward and
//! multiplies each histogram bin by one of `{α, 1, β}`.
//!
//! Module map:
//!
//! - [`geometry`]: sphere normalization, pairwise distances, the analytic
//!   distance density and its clipped inverse.
//! - [`model`]: MLP embedding network with exact backprop, losses, Adam.
//! - [`samplers`]: random, semihard, distance-weighted, curriculum and
//!   adaptive histogram negative selection.
//! - [`metrics`]: Recall@k, NMI via k-means, class distance statistics and
//!   the running-average tracks that feed the teacher's state.
//! - [`rl`]: policy network, reward, REINFORCE/A2C/PPO updates.
//! - [`trainer`]: the interleaved training loop and its run modes.
//! - [`data`]: synthetic Gaussian clusters and the CSV dataset format.
//! - [`config`] and [`runner`]: flat `key=value` configuration and the
//!   experiment drivers behind the `pads` binary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        let tol: f64 = $tol;
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod config;
pub mod data;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod rl;
pub mod rng;
pub mod runner;
pub mod samplers;
pub mod trainer;

pub use error::{Error, Result};
