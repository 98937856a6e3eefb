//! Instance factories: seeded synthetic markets and the MAX-3SAT reduction.
//!
//! Random streams use `ChaCha8Rng::seed_from_u64(seed)`. For
//! [`generate_synthetic`] the stream is consumed in this order:
//!
//! 1. three competing offerings, each `n` draws of `gen::<bool>()`;
//! 2. partworths row by row (`k` outer, `i` inner), each `-10 + 20 * gen::<f64>()`.
//!
//! [`attach_random_profit`] draws `r0` first, then `r_0 .. r_{n-1}`.

use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::choice::utilities;
use crate::error::{Error, Result};
use crate::instance::{DesignVector, Instance, ObjectiveSpec};

pub const PARTWORTH_RANGE: f64 = 10.0;

pub fn generate_synthetic(n: usize, num_types: usize, seed: u64) -> Instance {
    assert!(n >= 1 && num_types >= 1, "n and K must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offerings: Vec<Vec<bool>> = (0..3).map(|_| (0..n).map(|_| rng.gen::<bool>()).collect()).collect();
    let beta: Vec<Vec<f64>> = (0..num_types)
        .map(|_| {
            (0..n)
                .map(|_| -PARTWORTH_RANGE + 2.0 * PARTWORTH_RANGE * rng.gen::<f64>())
                .collect()
        })
        .collect();
    let beta0 = beta
        .iter()
        .map(|row| {
            let u: Vec<f64> = offerings
                .iter()
                .map(|a| row.iter().zip(a).filter(|(_, &on)| on).map(|(b, _)| b).sum())
                .collect();
            -log_sum_exp(&u)
        })
        .collect();
    let lambda = vec![1.0 / num_types as f64; num_types];
    Instance::new(lambda, beta0, beta)
}

/// Intercept that puts the no-purchase option on par with the offerings:
/// `-log(sum exp(u))` over competitor utilities.
pub fn competitive_intercept(competitor_utilities: &[f64]) -> f64 {
    -log_sum_exp(competitor_utilities)
}

fn log_sum_exp(u: &[f64]) -> f64 {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + u.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Replaces the objective with a random expected-profit objective,
/// `r0 ~ U[1, 10]` and `r_i ~ U[-1, 0]`.
pub fn attach_random_profit(instance: Instance, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = 1.0 + 9.0 * rng.gen::<f64>();
    let r = (0..instance.n).map(|_| -rng.gen::<f64>()).collect();
    instance.with_objective(ObjectiveSpec::expected_profit(r0, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literal {
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, negated: false }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, negated: true }
    }

    pub fn is_satisfied(&self, assignment: &[bool]) -> bool {
        assignment[self.var] != self.negated
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreeSatInstance {
    pub num_vars: usize,
    pub clauses: Vec<[Literal; 3]>,
}

impl ThreeSatInstance {
    pub fn new(num_vars: usize, clauses: Vec<[Literal; 3]>) -> Result<Self> {
        if num_vars == 0 || clauses.is_empty() {
            return Err(Error::Argument("3SAT instance needs at least one variable and one clause".into()));
        }
        for (k, c) in clauses.iter().enumerate() {
            if let Some(l) = c.iter().find(|l| l.var >= num_vars) {
                return Err(Error::Argument(format!(
                    "clause {k} uses variable {} but only {num_vars} exist",
                    l.var + 1
                )));
            }
        }
        Ok(ThreeSatInstance { num_vars, clauses })
    }

    pub fn satisfied_count(&self, assignment: &[bool]) -> usize {
        self.clauses
            .iter()
            .filter(|c| c.iter().any(|l| l.is_satisfied(assignment)))
            .count()
    }

    /// Parses DIMACS CNF restricted to three literals per clause.
    pub fn parse_dimacs(text: &str) -> Result<Self> {
        let fail = |line: usize, msg: String| Error::Parse {
            path: "<cnf>".into(),
            line,
            column: 1,
            message: msg,
        };
        let mut header: Option<(usize, usize)> = None;
        let mut clauses = Vec::new();
        let mut current: Vec<(i64, usize)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let ln = ln + 1;
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if line.starts_with('p') {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 4 || parts[1] != "cnf" {
                    return Err(fail(ln, "expected `p cnf <vars> <clauses>`".into()));
                }
                let nv = parts[2].parse().map_err(|_| fail(ln, "bad variable count".into()))?;
                let nc = parts[3].parse().map_err(|_| fail(ln, "bad clause count".into()))?;
                header = Some((nv, nc));
                continue;
            }
            let Some((nv, _)) = header else {
                return Err(fail(ln, "clause before the `p cnf` header".into()));
            };
            for tok in line.split_whitespace() {
                let lit: i64 = tok.parse().map_err(|_| fail(ln, format!("bad literal `{tok}`")))?;
                if lit == 0 {
                    if current.len() != 3 {
                        return Err(fail(ln, format!("clause has {} literals, expected 3", current.len())));
                    }
                    let c: Vec<Literal> = current
                        .drain(..)
                        .map(|(l, _)| Literal {
                            var: l.unsigned_abs() as usize - 1,
                            negated: l < 0,
                        })
                        .collect();
                    clauses.push([c[0], c[1], c[2]]);
                } else {
                    if lit.unsigned_abs() as usize > nv {
                        return Err(fail(ln, format!("literal {lit} exceeds declared {nv} variables")));
                    }
                    current.push((lit, ln));
                }
            }
        }
        let Some((nv, nc)) = header else {
            return Err(fail(1, "missing `p cnf` header".into()));
        };
        if !current.is_empty() {
            return Err(fail(current[0].1, "clause not terminated by 0".into()));
        }
        if clauses.len() != nc {
            return Err(fail(1, format!("header declares {nc} clauses, found {}", clauses.len())));
        }
        ThreeSatInstance::new(nv, clauses)
    }

    pub fn load_dimacs(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_dimacs(&text).map_err(|e| match e {
            Error::Parse {
                line, column, message, ..
            } => Error::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message,
            },
            other => other,
        })
    }

    /// Random instance whose clauses use three distinct variables.
    pub fn random(num_vars: usize, num_clauses: usize, seed: u64) -> Self {
        assert!(num_vars >= 3, "need at least three variables");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clauses = (0..num_clauses)
            .map(|_| {
                let vars = sample(&mut rng, num_vars, 3);
                let mut c = [Literal::pos(0); 3];
                for (slot, v) in c.iter_mut().zip(vars.iter()) {
                    *slot = Literal {
                        var: v,
                        negated: rng.gen::<bool>(),
                    };
                }
                c
            })
            .collect();
        ThreeSatInstance { num_vars, clauses }
    }
}

impl fmt::Display for ThreeSatInstance {
    /// DIMACS CNF text.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p cnf {} {}", self.num_vars, self.clauses.len())?;
        for c in &self.clauses {
            for l in c {
                let v = l.var as i64 + 1;
                write!(f, "{} ", if l.negated { -v } else { v })?;
            }
            writeln!(f, "0")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionConstants {
    pub p_l: f64,
    pub p_u: f64,
    pub q_l: f64,
    pub q_u: f64,
}

impl ReductionConstants {
    pub fn for_clauses(num_clauses: usize) -> Self {
        let p_l = 1.0 / (100.0 * num_clauses as f64);
        let q_l = (p_l / (1.0 - p_l)).ln();
        ReductionConstants {
            p_l,
            p_u: 1.0 - p_l,
            q_l,
            q_u: -q_l,
        }
    }

    /// Utility step contributed by one satisfied literal.
    pub fn step(&self) -> f64 {
        self.q_u - self.q_l
    }
}

/// Builds an instance where clause `k` is a customer type whose utility is
/// `Q_L` when the clause is unsatisfied and at least `Q_U` otherwise.
pub fn reduce_max3sat(sat: &ThreeSatInstance) -> Instance {
    let k = sat.clauses.len();
    let rc = ReductionConstants::for_clauses(k);
    let d = rc.step();
    let mut beta = vec![vec![0.0; sat.num_vars]; k];
    let mut beta0 = vec![0.0; k];
    for (row, (b0, clause)) in beta.iter_mut().zip(beta0.iter_mut().zip(&sat.clauses)) {
        let mut negated = 0;
        for l in clause {
            if l.negated {
                row[l.var] -= d;
                negated += 1;
            } else {
                row[l.var] += d;
            }
        }
        *b0 = rc.q_l + negated as f64 * d;
    }
    Instance::new(vec![1.0 / k as f64; k], beta0, beta)
}

/// Reads the truth assignment `x = a` off a design for a reduced instance and
/// counts the clauses it satisfies.
pub fn recover_assignment(instance: &Instance, design: &DesignVector) -> Result<(Vec<bool>, usize)> {
    let k = instance.num_types;
    let rc = ReductionConstants::for_clauses(k);
    let d = rc.step();
    let is_multiple = |v: f64, lo: i64, hi: i64| {
        let q = v / d;
        let r = q.round();
        (q - r).abs() <= 1e-9 && (lo as f64..=hi as f64).contains(&r)
    };
    let structured = instance.constraints.is_empty()
        && instance.lambda.iter().all(|&l| (l - 1.0 / k as f64).abs() <= 1e-12)
        && instance.beta.iter().zip(&instance.beta0).all(|(row, &b0)| {
            let literals: f64 = row.iter().map(|b| (b / d).round().abs()).sum();
            row.iter().all(|&b| is_multiple(b, -3, 3))
                && literals <= 3.0
                && is_multiple(b0 - rc.q_l, 0, 3)
        });
    if !structured {
        return Err(Error::Contract("instance does not come from the MAX-3SAT reduction".into()));
    }
    if design.len() != instance.n {
        return Err(Error::Dimension {
            what: "design length",
            expected: instance.n,
            got: design.len(),
        });
    }
    let u = utilities(instance, design.bits());
    let satisfied = u.iter().filter(|&&v| v >= rc.q_u - 1e-6).count();
    Ok((design.bits().to_vec(), satisfied))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthetic_shape_and_determinism() {
        let a = generate_synthetic(7, 4, 11);
        assert!(a.validate().is_ok());
        assert_eq!(a, generate_synthetic(7, 4, 11));
        assert_ne!(a, generate_synthetic(7, 4, 12));
        assert!(a.beta.iter().flatten().all(|b| (-10.0..=10.0).contains(b)));
        assert_abs_diff_eq!(a.lambda.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intercept_of_three_zero_offerings() {
        assert_abs_diff_eq!(competitive_intercept(&[0.0, 0.0, 0.0]), -(3.0f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(competitive_intercept(&[0.0, 0.0, 0.0]), -1.098_612_288_668_11, epsilon = 1e-12);
    }

    #[test]
    fn reduction_constants_single_clause() {
        let rc = ReductionConstants::for_clauses(1);
        assert_abs_diff_eq!(rc.p_l, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(rc.q_l, -4.595_119_850_134_59, epsilon = 1e-9);
        assert_abs_diff_eq!(rc.q_u, 4.595_119_850_134_59, epsilon = 1e-9);
    }

    #[test]
    fn worked_clause() {
        // (x1 v x4 v !x9) over nine variables.
        let sat = ThreeSatInstance::new(9, vec![[Literal::pos(0), Literal::pos(3), Literal::neg(8)]]).unwrap();
        let inst = reduce_max3sat(&sat);
        let rc = ReductionConstants::for_clauses(1);
        let mut a = vec![false; 9];
        a[0] = true;
        a[8] = true;
        assert_abs_diff_eq!(utilities(&inst, &a)[0], rc.q_u, epsilon = 1e-9);
        a[0] = false;
        assert_abs_diff_eq!(utilities(&inst, &a)[0], rc.q_l, epsilon = 1e-9);
        let (x, count) = recover_assignment(&inst, &DesignVector::new(a.clone())).unwrap();
        assert_eq!(x, a);
        assert_eq!(count, 0);
    }

    #[test]
    fn all_negated_clause_at_all_ones() {
        let sat = ThreeSatInstance::new(3, vec![[Literal::neg(0), Literal::neg(1), Literal::neg(2)]]).unwrap();
        let inst = reduce_max3sat(&sat);
        let rc = ReductionConstants::for_clauses(1);
        assert_abs_diff_eq!(utilities(&inst, &[true; 3])[0], rc.q_l, epsilon = 1e-9);
    }

    #[test]
    fn recover_rejects_other_instances() {
        let inst = generate_synthetic(4, 2, 1);
        assert!(matches!(
            recover_assignment(&inst, &DesignVector::zeros(4)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn dimacs_round_trip() {
        let text = "c example\np cnf 4 2\n1 -2 3 0\n-1 2\n 4 0\n";
        let sat = ThreeSatInstance::parse_dimacs(text).unwrap();
        assert_eq!(sat.num_vars, 4);
        assert_eq!(sat.clauses[1], [Literal::neg(0), Literal::pos(1), Literal::pos(3)]);
        assert_eq!(ThreeSatInstance::parse_dimacs(&sat.to_string()).unwrap(), sat);
        assert!(ThreeSatInstance::parse_dimacs("p cnf 3 1\n1 2 0\n").is_err());
        assert!(ThreeSatInstance::parse_dimacs("p cnf 3 1\n1 2 5 0\n").is_err());
        assert!(ThreeSatInstance::parse_dimacs("1 2 3 0\n").is_err());
    }

    #[test]
    fn random_clauses_use_distinct_variables() {
        let sat = ThreeSatInstance::random(6, 20, 5);
        for c in &sat.clauses {
            assert!(c[0].var != c[1].var && c[1].var != c[2].var && c[0].var != c[2].var);
        }
        assert_eq!(sat, ThreeSatInstance::random(6, 20, 5));
    }

    #[test]
    fn profit_attachment_ranges() {
        let inst = attach_random_profit(generate_synthetic(5, 2, 3), 9);
        let r0 = inst.objective.r0.unwrap();
        assert!((1.0..=10.0).contains(&r0));
        assert!(inst.objective.r.unwrap().iter().all(|r| (-1.0..=0.0).contains(r)));
    }
}
