//! Dense-ish linear programming over bounded continuous variables.
//!
//! Problems are stated as `max c·x` subject to sparse rows `a·x {<=,=,>=} b`
//! and per-variable bounds that may be infinite. The solver is a
//! bounded-variable simplex working on `A x - s = 0`, where each row gets a
//! logical variable `s` bounded according to its relation. Warm starts after
//! appending rows or moving bounds go through a dual simplex.

mod simplex;

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use simplex::Simplex;

/// Row feasibility promised for optimal solutions.
pub const ROW_TOL: f64 = 1e-7;
/// Bound feasibility promised for optimal solutions.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Row { coeffs, relation, rhs }
    }

    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row::new(coeffs, Relation::Le, rhs)
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row::new(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row::new(coeffs, Relation::Eq, rhs)
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }

    /// Bounds on the row activity implied by the relation.
    pub(crate) fn activity_bounds(&self) -> (f64, f64) {
        match self.relation {
            Relation::Le => (f64::NEG_INFINITY, self.rhs),
            Relation::Ge => (self.rhs, f64::INFINITY),
            Relation::Eq => (self.rhs, self.rhs),
        }
    }
}

/// `max objective·x` subject to `rows` and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    /// Optional variable names, used only by the text dump.
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, row: Row) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row violation and largest bound violation of `x`.
    pub fn violations(&self, x: &[f64]) -> (f64, f64) {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        (rows, bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.num_vars();
        if self.lower.len() != p || self.upper.len() != p {
            return Err(Error::Dimension {
                what: "variable bounds",
                expected: p,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        for j in 0..p {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !self.objective[j].is_finite() {
                return Err(Error::Argument(format!("objective coefficient {j} is not finite")));
            }
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Argument(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Argument(format!("row {i} has a non-finite right-hand side")));
            }
            for &(j, a) in &row.coeffs {
                if j >= p {
                    return Err(Error::Argument(format!("row {i} references variable {j} of {p}")));
                }
                if !a.is_finite() {
                    return Err(Error::Argument(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    fn var_name(&self, j: usize) -> String {
        self.names.get(j).cloned().unwrap_or_else(|| format!("x{j}"))
    }

    /// Writes the program in the CPLEX LP text layout.
    pub fn write_lp_text<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        let mut s = String::new();
        let term = |s: &mut String, first: bool, a: f64, name: &str| {
            let sign = if a < 0.0 { " -" } else if first { "" } else { " +" };
            let _ = write!(s, "{sign} {} {name}", a.abs());
        };
        s.push_str("Maximize\n obj:");
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, first, c, &self.var_name(j));
                first = false;
            }
        }
        if first {
            s.push_str(" 0");
        }
        s.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(s, " r{i}:");
            let mut first = true;
            for &(j, a) in &row.coeffs {
                term(&mut s, first, a, &self.var_name(j));
                first = false;
            }
            if first {
                s.push_str(" 0 x0");
            }
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(s, " {rel} {}", row.rhs);
        }
        s.push_str("Bounds\n");
        for j in 0..self.num_vars() {
            let (l, u) = (self.lower[j], self.upper[j]);
            let name = self.var_name(j);
            match (l.is_finite(), u.is_finite()) {
                (false, false) => {
                    let _ = writeln!(s, " {name} free");
                }
                (true, false) => {
                    let _ = writeln!(s, " {name} >= {l}");
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= {name} <= {u}");
                }
                (true, true) if l == u => {
                    let _ = writeln!(s, " {name} = {l}");
                }
                (true, true) => {
                    let _ = writeln!(s, " {l} <= {name} <= {u}");
                }
            }
        }
        s.push_str("End\n");
        out.write_all(s.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Basis snapshot: one status per structural variable followed by one per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub num_vars: usize,
    pub status: Vec<VarStatus>,
}

impl Basis {
    pub fn num_rows(&self) -> usize {
        self.status.len() - self.num_vars
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Row multipliers `y` such that `reduced_costs = c - Aᵀy`.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub basis: Option<Basis>,
    pub iterations: usize,
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let mut s = Simplex::new(lp)?;
    s.solve();
    Ok(s.solution())
}

/// Appends `new_rows` to `lp` and re-optimises from `basis`, which must
/// describe `lp` without the new rows (or any prefix of its rows).
pub fn resolve_with_added_rows(lp: &LinearProgram, new_rows: &[Row], basis: &Basis) -> Result<LpSolution> {
    let mut s = Simplex::new(lp)?;
    for row in new_rows {
        s.add_row(row)?;
    }
    s.load_basis(basis)?;
    s.solve();
    Ok(s.solution())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_lp(objective: &[f64]) -> LinearProgram {
        let mut lp = LinearProgram::new();
        for &c in objective {
            lp.add_var(c, 0.0, f64::INFINITY);
        }
        lp
    }

    #[test]
    fn single_variable() {
        let mut lp = box_lp(&[1.0]);
        lp.add_row(Row::le(vec![(0, 1.0)], 1.0));
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.values[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective_value - 1.0).abs() < 1e-12);
        assert!((sol.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_face() {
        let mut lp = box_lp(&[1.0, 1.0]);
        lp.add_row(Row::le(vec![(0, 1.0), (1, 1.0)], 1.0));
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_bounds() {
        let mut lp = box_lp(&[1.0]);
        lp.add_row(Row::le(vec![(0, 1.0)], -1.0));
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = box_lp(&[1.0, 0.0]);
        lp.add_row(Row::le(vec![(0, 1.0), (1, -1.0)], 1.0));
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let y = lp.add_var(-1.0, f64::NEG_INFINITY, 3.0);
        lp.add_row(Row::eq(vec![(x, 1.0), (y, -1.0)], 2.0));
        lp.add_row(Row::ge(vec![(y, 1.0)], -5.0));
        // x = y + 2, objective = 2 regardless of y.
        let sol = solve(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 2.0).abs() < 1e-9);
        let (rows, bounds) = lp.violations(&sol.values);
        assert!(rows <= ROW_TOL && bounds <= BOUND_TOL);
    }

    #[test]
    fn warm_restart_matches_cold() {
        let mut lp = box_lp(&[3.0, 2.0]);
        lp.upper = vec![4.0, 4.0];
        lp.add_row(Row::le(vec![(0, 1.0), (1, 1.0)], 5.0));
        let first = solve(&lp).unwrap();
        assert!((first.objective_value - 14.0).abs() < 1e-9);
        let cut = Row::le(vec![(0, 2.0), (1, 1.0)], 7.0);
        let warm = resolve_with_added_rows(&lp, &[cut.clone()], first.basis.as_ref().unwrap()).unwrap();
        let mut both = lp.clone();
        both.add_row(cut);
        let cold = solve(&both).unwrap();
        assert_eq!(warm.status, LpStatus::Optimal);
        assert!((warm.objective_value - cold.objective_value).abs() < 1e-9);
        assert!((cold.objective_value - 12.0).abs() < 1e-9);
    }

    #[test]
    fn lp_text_dump() {
        let mut lp = box_lp(&[1.0, -2.0]);
        lp.upper[1] = 3.0;
        lp.add_row(Row::ge(vec![(0, 1.0), (1, -1.0)], 0.5));
        let mut buf = Vec::new();
        lp.write_lp_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Maximize\n obj: 1 x0 - 2 x1\n"));
        assert!(text.contains(" r0: 1 x0 - 1 x1 >= 0.5\n"));
        assert!(text.contains(" 0 <= x1 <= 3\n"));
        assert!(text.ends_with("End\n"));
    }
}
