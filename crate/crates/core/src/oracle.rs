//! Exhaustive enumeration of the feasible design set.
//!
//! Designs are visited in Gray-code order so each step flips one attribute and
//! updates every utility in `O(K)`. Ties are broken towards the design with
//! the smallest code `sum_i a_i 2^i`, which makes results independent of the
//! visiting order and of the number of workers.

use std::thread;

use crate::choice::{log_logistic, logistic, Criterion};
use crate::error::{Error, Result};
use crate::instance::{DesignVector, Instance, FEASIBILITY_TOL};

pub const DEFAULT_ENUMERATION_CAP: usize = 24;

/// Steps between from-scratch recomputation of the running utilities.
const RESYNC_EVERY: u64 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    pub best_design: DesignVector,
    pub best_value: f64,
    /// Number of feasible designs scored.
    pub evaluated_count: u64,
    pub objective: Criterion,
}

pub fn enumerate(instance: &Instance, objective: Criterion, cap: usize) -> Result<EnumerationResult> {
    enumerate_with_workers(instance, objective, cap, 1)
}

/// Splits the Gray-code sequence into `workers` contiguous chunks.
pub fn enumerate_with_workers(
    instance: &Instance,
    objective: Criterion,
    cap: usize,
    workers: usize,
) -> Result<EnumerationResult> {
    instance.validate().into_result()?;
    let n = instance.n;
    if n > cap || n >= 63 {
        return Err(Error::TooLarge { n, cap });
    }
    if objective == Criterion::ExpectedProfit && instance.objective.margin(&vec![false; n]).is_none() {
        return Err(Error::Contract(
            "expected-profit enumeration needs an expected_profit objective".into(),
        ));
    }
    let total = 1u64 << n;
    let workers = workers.clamp(1, total as usize);
    let scorer = Scorer::new(instance, objective);

    let partials: Vec<Best> = if workers == 1 {
        vec![scorer.scan(0, total)]
    } else {
        let chunk = total.div_ceil(workers as u64);
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers as u64)
                .map(|w| {
                    let scorer = &scorer;
                    let start = w * chunk;
                    let end = ((w + 1) * chunk).min(total);
                    s.spawn(move || scorer.scan(start, end))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };

    let mut merged = Best::default();
    for p in partials {
        merged.evaluated += p.evaluated;
        if let Some((value, mask)) = p.best {
            merged.offer_exact(value, mask);
        }
    }
    let (value, mask) = merged
        .best
        .ok_or_else(|| Error::Infeasible("no design satisfies C a <= d".into()))?;
    let bits = mask_to_bits(mask, n);
    let best_value = match objective {
        Criterion::GeometricMean => value.exp(),
        _ => value,
    };
    Ok(EnumerationResult {
        best_design: DesignVector::new(bits),
        best_value,
        evaluated_count: merged.evaluated,
        objective,
    })
}

fn mask_to_bits(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

#[derive(Default)]
struct Best {
    /// Exactly recomputed score and design code.
    best: Option<(f64, u64)>,
    evaluated: u64,
}

impl Best {
    fn offer_exact(&mut self, value: f64, mask: u64) {
        match self.best {
            Some((v, m)) if value < v || (value == v && mask >= m) => {}
            _ => self.best = Some((value, mask)),
        }
    }
}

struct Scorer<'a> {
    instance: &'a Instance,
    objective: Criterion,
    /// Per attribute: the constraint rows it appears in.
    columns: Vec<Vec<(usize, f64)>>,
    margin_base: f64,
    margin: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(instance: &'a Instance, objective: Criterion) -> Self {
        let mut columns = vec![Vec::new(); instance.n];
        for (row, con) in instance.constraints.iter().enumerate() {
            for c in &con.coeffs {
                columns[c.index].push((row, c.value));
            }
        }
        let (margin_base, margin) = match objective {
            Criterion::ExpectedProfit => (
                instance.objective.r0.unwrap_or(0.0),
                instance.objective.r.clone().unwrap_or_else(|| vec![0.0; instance.n]),
            ),
            _ => (0.0, vec![0.0; instance.n]),
        };
        Scorer {
            instance,
            objective,
            columns,
            margin_base,
            margin,
        }
    }

    /// Score of a design given its utilities; geometric mean in log space.
    fn score(&self, u: &[f64], margin: f64) -> f64 {
        let lambda = &self.instance.lambda;
        match self.objective {
            Criterion::ShareOfChoice => lambda.iter().zip(u).map(|(l, &v)| l * logistic(v)).sum(),
            Criterion::ExpectedProfit => {
                if margin == 0.0 {
                    0.0
                } else {
                    margin * lambda.iter().zip(u).map(|(l, &v)| l * logistic(v)).sum::<f64>()
                }
            }
            Criterion::GeometricMean => lambda
                .iter()
                .zip(u)
                .filter(|(&l, _)| l != 0.0)
                .map(|(l, &v)| l * log_logistic(v))
                .sum(),
        }
    }

    fn exact_state(&self, mask: u64) -> (Vec<f64>, Vec<f64>, f64) {
        let inst = self.instance;
        let bits = mask_to_bits(mask, inst.n);
        let u = crate::choice::utilities(inst, &bits);
        let act = inst.constraints.iter().map(|c| c.activity(&bits)).collect();
        let margin = self.margin_base
            + self
                .margin
                .iter()
                .zip(&bits)
                .filter(|(_, &on)| on)
                .map(|(r, _)| r)
                .sum::<f64>();
        (u, act, margin)
    }

    fn exact_score(&self, mask: u64) -> f64 {
        let (u, _, margin) = self.exact_state(mask);
        self.score(&u, margin)
    }

    /// Visits Gray codes `g(i) = i ^ (i >> 1)` for `i` in `start..end`.
    fn scan(&self, start: u64, end: u64) -> Best {
        let mut best = Best::default();
        if start >= end {
            return best;
        }
        let inst = self.instance;
        let mut mask = start ^ (start >> 1);
        let (mut u, mut act, mut margin) = self.exact_state(mask);
        let rhs: Vec<f64> = inst.constraints.iter().map(|c| c.rhs).collect();
        let mut i = start;
        loop {
            if act.iter().zip(&rhs).all(|(a, r)| *a <= r + FEASIBILITY_TOL) {
                best.evaluated += 1;
                let v = self.score(&u, margin);
                let near = match best.best {
                    None => true,
                    Some((bv, _)) => v >= bv - 1e-9 * bv.abs().max(1.0),
                };
                if near {
                    best.offer_exact(self.exact_score(mask), mask);
                }
            }
            i += 1;
            if i == end {
                break;
            }
            let next = i ^ (i >> 1);
            if (i - start) % RESYNC_EVERY == 0 {
                mask = next;
                (u, act, margin) = self.exact_state(mask);
                continue;
            }
            let bit = (mask ^ next).trailing_zeros() as usize;
            let sign = if next >> bit & 1 == 1 { 1.0 } else { -1.0 };
            for (uk, row) in u.iter_mut().zip(&inst.beta) {
                *uk += sign * row[bit];
            }
            for &(r, c) in &self.columns[bit] {
                act[r] += sign * c;
            }
            margin += sign * self.margin[bit];
            mask = next;
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::share_of_choice;
    use crate::instance::LinearConstraint;

    #[test]
    fn single_attribute() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0]]);
        let r = enumerate(&inst, Criterion::ShareOfChoice, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(r.best_design.bits(), &[true]);
        assert!((r.best_value - 0.731_058_578).abs() < 1e-9);
        assert_eq!(r.evaluated_count, 2);
    }

    #[test]
    fn tie_break_prefers_low_code() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0, 1.0]])
            .with_constraints(vec![LinearConstraint::new([(0, 1.0), (1, 1.0)], 1.0)]);
        let r = enumerate(&inst, Criterion::ShareOfChoice, 24).unwrap();
        assert_eq!(r.best_design.bits(), &[true, false]);
        assert_eq!(r.best_value, logistic(1.0));
        assert_eq!(r.evaluated_count, 3);
    }

    #[test]
    fn flat_objective_returns_zeros() {
        let inst = Instance::new(vec![0.3, 0.7], vec![0.5, -1.0], vec![vec![0.0; 5], vec![0.0; 5]]);
        for crit in [Criterion::ShareOfChoice, Criterion::GeometricMean] {
            let r = enumerate(&inst, crit, 24).unwrap();
            assert_eq!(r.best_design, DesignVector::zeros(5));
        }
        let r = enumerate(&inst, Criterion::ShareOfChoice, 24).unwrap();
        assert_eq!(r.best_value, 0.3 * logistic(0.5) + 0.7 * logistic(-1.0));
    }

    #[test]
    fn refuses_large_and_infeasible() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0; 30]]);
        assert!(matches!(
            enumerate(&inst, Criterion::ShareOfChoice, 24),
            Err(Error::TooLarge { n: 30, cap: 24 })
        ));
        let infeasible = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0]])
            .with_constraints(vec![LinearConstraint::new([(0, 1.0)], -1.0)]);
        assert!(matches!(
            enumerate(&infeasible, Criterion::ShareOfChoice, 24),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn best_value_matches_direct_evaluation() {
        let inst = crate::generators::generate_synthetic(9, 4, 7);
        let r = enumerate(&inst, Criterion::ShareOfChoice, 24).unwrap();
        assert!((share_of_choice(&inst, &r.best_design).unwrap() - r.best_value).abs() <= 1e-12);
        let g = enumerate(&inst, Criterion::GeometricMean, 24).unwrap();
        let direct = crate::choice::geometric_mean_objective(&inst, &g.best_design).unwrap();
        assert!((direct - g.best_value).abs() <= 1e-12 * direct.max(1e-300));
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let inst = crate::generators::generate_synthetic(11, 5, 3);
        let one = enumerate_with_workers(&inst, Criterion::ShareOfChoice, 24, 1).unwrap();
        for w in [2, 3, 8] {
            let many = enumerate_with_workers(&inst, Criterion::ShareOfChoice, 24, w).unwrap();
            assert_eq!(one, many);
        }
    }
}
