#![allow(dead_code)]

pub mod lp;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socpd::generators::generate_synthetic;
use socpd::{Instance, LinearConstraint};

/// Synthetic instance with uneven weights and `rows` random side constraints.
/// Right-hand sides are nonnegative so the all-zeros design stays feasible.
pub fn random_instance(seed: u64, n: usize, k: usize, rows: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut inst = generate_synthetic(n, k, seed);
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    inst.lambda = raw.iter().map(|x| x / total).collect();
    let constraints = (0..rows)
        .map(|_| {
            let nnz = rng.gen_range(1..=n.min(4));
            let coeffs: Vec<(usize, f64)> = sample(&mut rng, n, nnz)
                .iter()
                .map(|i| (i, if rng.gen_bool(0.7) { 1.0 } else { -1.0 }))
                .collect();
            LinearConstraint::new(coeffs, f64::from(rng.gen_range(0..=2)))
        })
        .collect();
    inst.with_constraints(constraints)
}

pub fn random_design(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
