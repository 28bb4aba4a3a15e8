//! Check bodies shared by the per-module test targets and the acceptance runner.
//! Each function panics on the first violated expectation.

#![allow(dead_code)]

pub mod algebra;
pub mod gradients;
pub mod oracles;
pub mod rl;
