//! Shared fixtures for the solver benchmarks.

use socpd::generators::{attach_random_profit, generate_synthetic};
use socpd::Instance;

/// Synthetic share-of-choice instance labelled `n{n}_K{k}`.
pub fn synthetic(n: usize, k: usize) -> (String, Instance) {
    (format!("n{n}_K{k}"), generate_synthetic(n, k, 1))
}

pub fn profit(n: usize, k: usize) -> (String, Instance) {
    (format!("n{n}_K{k}"), attach_random_profit(generate_synthetic(n, k, 1), 1))
}
