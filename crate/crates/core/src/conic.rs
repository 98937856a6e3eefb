//! Exponential-cone formulations of the share-of-choice (or profit) problem and
//! of the geometric-mean problem, written in the Conic Benchmark Format so an
//! external mixed-integer conic solver can cross-check the OA results.
//!
//! The exponential cone is `K_exp = cl{(r, s, t) : s > 0, r >= s·exp(t/s)}`.
//! CBF lists the same cone with the triple reversed, `(t, s, r)`; triples are
//! kept in `(r, s, t)` order here and permuted by the writer and parser.
//!
//! Variables are laid out in blocks, always in this order:
//! `a, u, x1, x0, y, w, θ1, θ0, φ, v1, v0` for the share/profit model and
//! `a, u, t, φ, v1, v0` for the geometric-mean model. Within a block the
//! index runs over customer types (and over attributes inside `y`, row major).
//! Variable bounds are emitted as rows; every variable is free in `VAR`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::choice::{logistic, softplus, utilities, xlogx};
use crate::error::{Error, Result};
use crate::instance::{Instance, ObjectiveKind};

/// `coeffs · x + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn new(coeffs: Vec<(usize, f64)>, constant: f64) -> Self {
        Affine { coeffs, constant }
    }

    pub fn var(j: usize) -> Self {
        Affine::new(vec![(j, 1.0)], 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Affine::new(Vec::new(), c)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `= 0`
    Zero,
    /// `>= 0`
    NonNegative,
    /// `<= 0`
    NonPositive,
}

impl Domain {
    fn cbf(self) -> &'static str {
        match self {
            Domain::Zero => "L=",
            Domain::NonNegative => "L+",
            Domain::NonPositive => "L-",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Linear(Domain, Affine),
    /// `(r, s, t) ∈ K_exp`.
    Exp([Affine; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Share of choice or expected profit with entropy and softplus cones.
    Micp,
    /// Geometric mean with softplus cones only.
    Gm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicModel {
    pub formulation: Formulation,
    pub var_names: Vec<String>,
    pub integer: Vec<usize>,
    /// Maximised.
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
}

/// Counts that survive a write/parse round trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConicSummary {
    pub num_vars: usize,
    pub num_int: usize,
    pub num_linear_rows: usize,
    pub num_exp_cones: usize,
    pub objective_nnz: usize,
    pub matrix_nnz: usize,
    pub constant_nnz: usize,
}

struct Builder {
    names: Vec<String>,
}

impl Builder {
    fn block(&mut self, prefix: &str, count: usize, name: impl Fn(usize) -> String) -> Vec<usize> {
        let start = self.names.len();
        self.names.extend((0..count).map(|i| format!("{prefix}{}", name(i))));
        (start..start + count).collect()
    }
}

fn utility_rows(instance: &Instance, a: &[usize], u: &[usize], out: &mut Vec<Constraint>) {
    for k in 0..instance.num_types {
        let mut coeffs = vec![(u[k], 1.0)];
        coeffs.extend(
            (0..instance.n)
                .filter(|&i| instance.beta[k][i] != 0.0)
                .map(|i| (a[i], -instance.beta[k][i])),
        );
        out.push(Constraint::Linear(Domain::Zero, Affine::new(coeffs, -instance.beta0[k])));
    }
}

fn design_rows(instance: &Instance, a: &[usize], out: &mut Vec<Constraint>) {
    for &j in a {
        out.push(Constraint::Linear(Domain::NonNegative, Affine::var(j)));
        out.push(Constraint::Linear(Domain::NonPositive, Affine::new(vec![(j, 1.0)], -1.0)));
    }
    for c in &instance.constraints {
        let coeffs = c.coeffs.iter().map(|c| (a[c.index], c.value)).collect();
        out.push(Constraint::Linear(Domain::NonPositive, Affine::new(coeffs, -c.rhs)));
    }
}

/// `φ >= softplus(u)` through `v1 + v0 <= 1`, `(v1, 1, u - φ)`, `(v0, 1, -φ)`.
fn softplus_rows(u: usize, phi: usize, v1: usize, v0: usize, out: &mut Vec<Constraint>) {
    out.push(Constraint::Linear(
        Domain::NonPositive,
        Affine::new(vec![(v1, 1.0), (v0, 1.0)], -1.0),
    ));
    out.push(Constraint::Exp([
        Affine::var(v1),
        Affine::constant(1.0),
        Affine::new(vec![(u, 1.0), (phi, -1.0)], 0.0),
    ]));
    out.push(Constraint::Exp([
        Affine::var(v0),
        Affine::constant(1.0),
        Affine::new(vec![(phi, -1.0)], 0.0),
    ]));
}

/// Mixed-integer exponential-cone model of share of choice, or of expected
/// profit when the instance carries that objective.
pub fn build_micp(instance: &Instance) -> Result<ConicModel> {
    instance.validate().into_result()?;
    let (n, kk) = (instance.n, instance.num_types);
    let mut b = Builder { names: Vec::new() };
    let a = b.block("a", n, |i| i.to_string());
    let u = b.block("u", kk, |k| k.to_string());
    let x1 = b.block("x1_", kk, |k| k.to_string());
    let x0 = b.block("x0_", kk, |k| k.to_string());
    let y = b.block("y", kk * n, |j| format!("{}_{}", j / n.max(1), j % n.max(1)));
    let w = b.block("w", kk, |k| k.to_string());
    let th1 = b.block("theta1_", kk, |k| k.to_string());
    let th0 = b.block("theta0_", kk, |k| k.to_string());
    let phi = b.block("phi", kk, |k| k.to_string());
    let v1 = b.block("v1_", kk, |k| k.to_string());
    let v0 = b.block("v0_", kk, |k| k.to_string());

    let mut cons = Vec::new();
    for k in 0..kk {
        cons.push(Constraint::Linear(
            Domain::Zero,
            Affine::new(vec![(x1[k], 1.0), (x0[k], 1.0)], -1.0),
        ));
        cons.push(Constraint::Linear(
            Domain::NonNegative,
            Affine::new(vec![(w[k], 1.0), (th1[k], 1.0), (th0[k], 1.0), (phi[k], -1.0)], 0.0),
        ));
        cons.push(Constraint::Exp([Affine::constant(1.0), Affine::var(x1[k]), Affine::var(th1[k])]));
        cons.push(Constraint::Exp([Affine::constant(1.0), Affine::var(x0[k]), Affine::var(th0[k])]));
        softplus_rows(u[k], phi[k], v1[k], v0[k], &mut cons);
    }
    utility_rows(instance, &a, &u, &mut cons);
    for k in 0..kk {
        let mut coeffs = vec![(w[k], 1.0), (x1[k], -instance.beta0[k])];
        coeffs.extend(
            (0..n)
                .filter(|&i| instance.beta[k][i] != 0.0)
                .map(|i| (y[k * n + i], -instance.beta[k][i])),
        );
        cons.push(Constraint::Linear(Domain::Zero, Affine::new(coeffs, 0.0)));
    }
    for k in 0..kk {
        for i in 0..n {
            let yk = y[k * n + i];
            cons.push(Constraint::Linear(Domain::NonPositive, Affine::new(vec![(yk, 1.0), (x1[k], -1.0)], 0.0)));
            cons.push(Constraint::Linear(Domain::NonPositive, Affine::new(vec![(yk, 1.0), (a[i], -1.0)], 0.0)));
            cons.push(Constraint::Linear(
                Domain::NonNegative,
                Affine::new(vec![(yk, 1.0), (a[i], -1.0), (x1[k], -1.0)], 1.0),
            ));
            cons.push(Constraint::Linear(Domain::NonNegative, Affine::var(yk)));
        }
    }
    for k in 0..kk {
        cons.push(Constraint::Linear(Domain::NonNegative, Affine::var(x1[k])));
        cons.push(Constraint::Linear(Domain::NonNegative, Affine::var(x0[k])));
    }
    design_rows(instance, &a, &mut cons);

    let mut objective = Vec::new();
    match instance.objective_kind() {
        ObjectiveKind::ShareOfChoice => {
            objective.extend((0..kk).filter(|&k| instance.lambda[k] != 0.0).map(|k| (x1[k], instance.lambda[k])));
        }
        ObjectiveKind::ExpectedProfit => {
            let r0 = instance.objective.r0.unwrap_or(0.0);
            let r = instance.objective.r.clone().unwrap_or_else(|| vec![0.0; n]);
            for k in 0..kk {
                let lam = instance.lambda[k];
                if lam == 0.0 {
                    continue;
                }
                if r0 != 0.0 {
                    objective.push((x1[k], lam * r0));
                }
                objective.extend((0..n).filter(|&i| r[i] != 0.0).map(|i| (y[k * n + i], lam * r[i])));
            }
        }
    }
    Ok(ConicModel {
        formulation: Formulation::Micp,
        var_names: b.names,
        integer: a,
        objective,
        constraints: cons,
    })
}

/// Mixed-integer exponential-cone model of the geometric-mean problem,
/// maximising `sum_k λ_k t_k` with `t_k + φ_k <= u_k`, `φ_k >= softplus(u_k)`.
pub fn build_gm_micp(instance: &Instance) -> Result<ConicModel> {
    instance.validate().into_result()?;
    let (n, kk) = (instance.n, instance.num_types);
    let mut b = Builder { names: Vec::new() };
    let a = b.block("a", n, |i| i.to_string());
    let u = b.block("u", kk, |k| k.to_string());
    let t = b.block("t", kk, |k| k.to_string());
    let phi = b.block("phi", kk, |k| k.to_string());
    let v1 = b.block("v1_", kk, |k| k.to_string());
    let v0 = b.block("v0_", kk, |k| k.to_string());

    let mut cons = Vec::new();
    utility_rows(instance, &a, &u, &mut cons);
    for k in 0..kk {
        cons.push(Constraint::Linear(
            Domain::NonPositive,
            Affine::new(vec![(t[k], 1.0), (phi[k], 1.0), (u[k], -1.0)], 0.0),
        ));
        softplus_rows(u[k], phi[k], v1[k], v0[k], &mut cons);
    }
    design_rows(instance, &a, &mut cons);
    let objective = (0..kk).map(|k| (t[k], instance.lambda[k])).collect();
    Ok(ConicModel {
        formulation: Formulation::Gm,
        var_names: b.names,
        integer: a,
        objective,
        constraints: cons,
    })
}

/// Whether `(r, s, t)` lies in `K_exp` up to `tol`.
pub fn exp_cone_violation(r: f64, s: f64, t: f64) -> f64 {
    if s > 0.0 {
        // r >= s·exp(t/s), compared in a scale that stays finite.
        (s * (t / s).exp() - r).max(-s).max(0.0).max(-r)
    } else {
        // s = 0 branch: r >= 0, t <= 0.
        (-s).max(-r).max(t).max(0.0)
    }
}

impl ConicModel {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn num_exp_cones(&self) -> usize {
        self.constraints.iter().filter(|c| matches!(c, Constraint::Exp(_))).count()
    }

    pub fn num_linear_rows(&self) -> usize {
        self.constraints.len() - self.num_exp_cones()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn summary(&self) -> ConicSummary {
        let mut matrix_nnz = 0;
        let mut constant_nnz = 0;
        for c in &self.constraints {
            let rows: Vec<&Affine> = match c {
                Constraint::Linear(_, r) => vec![r],
                Constraint::Exp(t) => t.iter().collect(),
            };
            for r in rows {
                matrix_nnz += r.coeffs.iter().filter(|c| c.1 != 0.0).count();
                constant_nnz += usize::from(r.constant != 0.0);
            }
        }
        ConicSummary {
            num_vars: self.num_vars(),
            num_int: self.integer.len(),
            num_linear_rows: self.num_linear_rows(),
            num_exp_cones: self.num_exp_cones(),
            objective_nnz: self.objective.iter().filter(|c| c.1 != 0.0).count(),
            matrix_nnz,
            constant_nnz,
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Largest violation of any row or cone at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| match c {
                Constraint::Linear(d, r) => {
                    let v = r.eval(x);
                    match d {
                        Domain::Zero => v.abs(),
                        Domain::NonNegative => (-v).max(0.0),
                        Domain::NonPositive => v.max(0.0),
                    }
                }
                Constraint::Exp([r, s, t]) => exp_cone_violation(r.eval(x), s.eval(x), t.eval(x)),
            })
            .fold(0.0, f64::max)
    }

    /// The point the model must admit for a binary design: `x1 = σ(u)`,
    /// `θ = -x log x`, `φ = softplus(u)`, `v1 = σ(u)`, `v0 = 1 - σ(u)`, and
    /// for the geometric-mean model `t = u - φ`.
    pub fn candidate_point(&self, instance: &Instance, a: &[bool]) -> Result<Vec<f64>> {
        if a.len() != instance.n {
            return Err(Error::Dimension {
                what: "design",
                expected: instance.n,
                got: a.len(),
            });
        }
        let kk = instance.num_types;
        let u = utilities(instance, a);
        let mut x = Vec::with_capacity(self.num_vars());
        x.extend(a.iter().map(|&b| f64::from(u8::from(b))));
        x.extend(&u);
        let s: Vec<f64> = u.iter().map(|&v| logistic(v)).collect();
        let sp: Vec<f64> = u.iter().map(|&v| softplus(v)).collect();
        match self.formulation {
            Formulation::Micp => {
                // 1 - σ(u) as σ(-u) keeps relative accuracy for large u.
                let x0: Vec<f64> = u.iter().map(|&v| logistic(-v)).collect();
                x.extend(&s);
                x.extend(&x0);
                for k in 0..kk {
                    x.extend(a.iter().map(|&b| if b { s[k] } else { 0.0 }));
                }
                x.extend((0..kk).map(|k| u[k] * s[k]));
                x.extend(s.iter().map(|&p| -xlogx(p)));
                x.extend(x0.iter().map(|&p| -xlogx(p)));
                x.extend(&sp);
                x.extend(&s);
                x.extend(&x0);
            }
            Formulation::Gm => {
                x.extend((0..kk).map(|k| u[k] - sp[k]));
                x.extend(&sp);
                x.extend(&s);
                x.extend(u.iter().map(|&v| logistic(-v)));
            }
        }
        debug_assert_eq!(x.len(), self.num_vars());
        Ok(x)
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip representation.
    format!("{v:?}")
}

/// Serialises `model` in CBF version 3.
pub fn to_cbf(model: &ConicModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# variables: {}", model.var_names.join(" "));
    let _ = writeln!(s, "# exponential cones are written as (t, s, r) for r >= s*exp(t/s)");
    s.push_str("VER\n3\n\n");
    s.push_str("OBJSENSE\nMAX\n\n");
    let _ = writeln!(s, "VAR\n{} 1\nF {}\n", model.num_vars(), model.num_vars());
    if !model.integer.is_empty() {
        let _ = writeln!(s, "INT\n{}", model.integer.len());
        for j in &model.integer {
            let _ = writeln!(s, "{j}");
        }
        s.push('\n');
    }

    // Flatten rows in CBF order and group consecutive cones of the same kind.
    let mut rows: Vec<&Affine> = Vec::new();
    let mut blocks: Vec<(&'static str, usize)> = Vec::new();
    for c in &model.constraints {
        let (name, triple): (&'static str, Vec<&Affine>) = match c {
            Constraint::Linear(d, r) => (d.cbf(), vec![r]),
            Constraint::Exp([r, sv, t]) => ("EXP", vec![t, sv, r]),
        };
        rows.extend(&triple);
        match blocks.last_mut() {
            Some((last, dim)) if *last == name && name != "EXP" => *dim += 1,
            _ => blocks.push((name, triple.len())),
        }
    }
    let _ = writeln!(s, "CON\n{} {}", rows.len(), blocks.len());
    for (name, dim) in &blocks {
        let _ = writeln!(s, "{name} {dim}");
    }
    s.push('\n');

    let obj: Vec<_> = model.objective.iter().filter(|c| c.1 != 0.0).collect();
    let _ = writeln!(s, "OBJACOORD\n{}", obj.len());
    for &&(j, c) in &obj {
        let _ = writeln!(s, "{j} {}", fmt_f64(c));
    }
    s.push('\n');

    let mut acoord = Vec::new();
    let mut bcoord = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        // Merge repeated columns so each (row, col) appears once.
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(j, a) in &r.coeffs {
            *merged.entry(j).or_insert(0.0) += a;
        }
        acoord.extend(merged.into_iter().filter(|e| e.1 != 0.0).map(|(j, a)| (i, j, a)));
        if r.constant != 0.0 {
            bcoord.push((i, r.constant));
        }
    }
    let _ = writeln!(s, "ACOORD\n{}", acoord.len());
    for (i, j, a) in &acoord {
        let _ = writeln!(s, "{i} {j} {}", fmt_f64(*a));
    }
    s.push('\n');
    let _ = writeln!(s, "BCOORD\n{}", bcoord.len());
    for (i, b) in &bcoord {
        let _ = writeln!(s, "{i} {}", fmt_f64(*b));
    }
    s
}

pub fn write_cbf(model: &ConicModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_cbf(model)).map_err(|e| Error::io(path, e))
}

/// Structure read back from a CBF file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbfFile {
    pub version: u32,
    pub maximize: bool,
    pub summary: ConicSummary,
    /// `(cone, dimension)` blocks of `CON`.
    pub blocks: Vec<(String, usize)>,
}

fn format_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format(format!("CBF line {line}: {}", msg.into()))
}

/// Parses the subset of CBF v3 that [`to_cbf`] writes.
pub fn parse_cbf_str(text: &str) -> Result<CbfFile> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let mut pos = 0;
    let mut next = |what: &str| -> Result<(usize, &str)> {
        let item = lines.get(pos).copied().ok_or_else(|| Error::Format(format!("CBF: missing {what}")))?;
        pos += 1;
        Ok(item)
    };
    fn num<T: std::str::FromStr>(line: usize, tok: Option<&str>) -> Result<T> {
        tok.and_then(|t| t.parse().ok()).ok_or_else(|| format_err(line, "expected a number"))
    }

    let mut out = CbfFile {
        version: 0,
        maximize: false,
        summary: ConicSummary {
            num_vars: 0,
            num_int: 0,
            num_linear_rows: 0,
            num_exp_cones: 0,
            objective_nnz: 0,
            matrix_nnz: 0,
            constant_nnz: 0,
        },
        blocks: Vec::new(),
    };
    let mut num_rows = 0usize;
    loop {
        let Ok((ln, key)) = next("section") else { break };
        match key {
            "VER" => {
                let (l, v) = next("version")?;
                out.version = num(l, Some(v))?;
            }
            "OBJSENSE" => {
                let (l, v) = next("objective sense")?;
                out.maximize = match v {
                    "MAX" => true,
                    "MIN" => false,
                    _ => return Err(format_err(l, format!("unknown sense {v}"))),
                };
            }
            "VAR" => {
                let (l, v) = next("VAR header")?;
                let mut it = v.split_whitespace();
                out.summary.num_vars = num(l, it.next())?;
                let nb: usize = num(l, it.next())?;
                let mut total = 0;
                for _ in 0..nb {
                    let (l, b) = next("VAR block")?;
                    let mut it = b.split_whitespace();
                    let cone = it.next().unwrap_or("");
                    if cone != "F" {
                        return Err(format_err(l, format!("unsupported variable domain {cone}")));
                    }
                    total += num::<usize>(l, it.next())?;
                }
                if total != out.summary.num_vars {
                    return Err(format_err(l, "VAR block sizes do not add up"));
                }
            }
            "INT" => {
                let (l, v) = next("INT count")?;
                out.summary.num_int = num(l, Some(v))?;
                for _ in 0..out.summary.num_int {
                    let (l, v) = next("INT index")?;
                    let j: usize = num(l, Some(v))?;
                    if j >= out.summary.num_vars {
                        return Err(format_err(l, "integer index out of range"));
                    }
                }
            }
            "CON" => {
                let (l, v) = next("CON header")?;
                let mut it = v.split_whitespace();
                num_rows = num(l, it.next())?;
                let nb: usize = num(l, it.next())?;
                let mut total = 0;
                for _ in 0..nb {
                    let (l, b) = next("CON block")?;
                    let mut it = b.split_whitespace();
                    let cone = it.next().unwrap_or("").to_string();
                    let dim: usize = num(l, it.next())?;
                    match cone.as_str() {
                        "L=" | "L+" | "L-" => out.summary.num_linear_rows += dim,
                        "EXP" if dim == 3 => out.summary.num_exp_cones += 1,
                        _ => return Err(format_err(l, format!("unsupported cone {cone} {dim}"))),
                    }
                    total += dim;
                    out.blocks.push((cone, dim));
                }
                if total != num_rows {
                    return Err(format_err(l, "CON block sizes do not add up"));
                }
            }
            "OBJACOORD" | "ACOORD" | "BCOORD" => {
                let (l, v) = next("entry count")?;
                let count: usize = num(l, Some(v))?;
                for _ in 0..count {
                    let (l, e) = next("entry")?;
                    let toks: Vec<&str> = e.split_whitespace().collect();
                    let (idx, val) = match (key, toks.as_slice()) {
                        ("ACOORD", [i, j, v]) => {
                            let i: usize = num(l, Some(i))?;
                            let j: usize = num(l, Some(j))?;
                            if i >= num_rows || j >= out.summary.num_vars {
                                return Err(format_err(l, "matrix entry out of range"));
                            }
                            (0, *v)
                        }
                        ("OBJACOORD", [j, v]) => {
                            let j: usize = num(l, Some(j))?;
                            if j >= out.summary.num_vars {
                                return Err(format_err(l, "objective entry out of range"));
                            }
                            (0, *v)
                        }
                        ("BCOORD", [i, v]) => {
                            let i: usize = num(l, Some(i))?;
                            if i >= num_rows {
                                return Err(format_err(l, "constant entry out of range"));
                            }
                            (0, *v)
                        }
                        _ => return Err(format_err(l, "malformed entry")),
                    };
                    let _: usize = idx;
                    let _: f64 = num(l, Some(val))?;
                }
                match key {
                    "OBJACOORD" => out.summary.objective_nnz = count,
                    "ACOORD" => out.summary.matrix_nnz = count,
                    _ => out.summary.constant_nnz = count,
                }
            }
            other => return Err(format_err(ln, format!("unsupported section {other}"))),
        }
    }
    if out.version != 3 {
        return Err(Error::Format(format!("CBF version {} is not supported", out.version)));
    }
    Ok(out)
}

pub fn parse_cbf(path: impl AsRef<Path>) -> Result<CbfFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cbf_str(&text)
}

/// Writes `model`, reads the file back and checks the counts agree.
pub fn export_checked(model: &ConicModel, path: impl AsRef<Path>) -> Result<CbfFile> {
    let path = path.as_ref();
    write_cbf(model, path)?;
    let parsed = parse_cbf(path)?;
    let expected = model.summary();
    if parsed.summary != expected || !parsed.maximize {
        return Err(Error::Integrity(format!(
            "CBF round trip mismatch: wrote {expected:?}, read {:?}",
            parsed.summary
        )));
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ObjectiveSpec;

    fn inst(k: usize, n: usize) -> Instance {
        let beta = (0..k).map(|kk| (0..n).map(|i| ((kk + 2 * i) % 5) as f64 - 2.0).collect()).collect();
        Instance::new(vec![1.0 / k as f64; k], (0..k).map(|kk| kk as f64 * 0.1 - 0.3).collect(), beta)
    }

    #[test]
    fn micp_counts() {
        let m = build_micp(&inst(1, 1)).unwrap();
        assert_eq!(m.num_vars(), 11);
        assert_eq!(m.num_exp_cones(), 4);
        assert_eq!(m.integer, vec![0]);
        let m = build_micp(&inst(2, 3)).unwrap();
        assert_eq!(m.num_exp_cones(), 8);
        let v_rows = m
            .constraints
            .iter()
            .filter(|c| matches!(c, Constraint::Linear(Domain::NonPositive, r) if r.coeffs.len() == 2 && r.constant == -1.0 && m.var_names[r.coeffs[0].0].starts_with("v1_")))
            .count();
        assert_eq!(v_rows, 2);
    }

    #[test]
    fn gm_counts_and_objective() {
        let i = inst(3, 2);
        let m = build_gm_micp(&i).unwrap();
        assert_eq!(m.num_exp_cones(), 6);
        let coeffs: Vec<f64> = m.objective.iter().map(|c| c.1).collect();
        assert_eq!(coeffs, i.lambda);
    }

    #[test]
    fn candidate_points_are_feasible() {
        let i = inst(3, 4);
        for model in [build_micp(&i).unwrap(), build_gm_micp(&i).unwrap()] {
            for code in 0..16u32 {
                let a: Vec<bool> = (0..4).map(|b| code >> b & 1 == 1).collect();
                let x = model.candidate_point(&i, &a).unwrap();
                assert!(model.max_violation(&x) <= 1e-8, "{:?} {a:?}: {}", model.formulation, model.max_violation(&x));
            }
        }
    }

    #[test]
    fn candidate_objective_matches_share() {
        let i = inst(2, 3);
        let m = build_micp(&i).unwrap();
        let a = [true, false, true];
        let x = m.candidate_point(&i, &a).unwrap();
        let share = crate::choice::share_from_utilities(&i.lambda, &utilities(&i, &a));
        assert!((m.objective_value(&x) - share).abs() < 1e-12);
        let g = build_gm_micp(&i).unwrap();
        let x = g.candidate_point(&i, &a).unwrap();
        let lg = crate::choice::log_gm_from_utilities(&i.lambda, &utilities(&i, &a));
        assert!((g.objective_value(&x) - lg).abs() < 1e-12);
    }

    #[test]
    fn profit_objective_uses_y() {
        let i = inst(2, 2).with_objective(ObjectiveSpec::expected_profit(5.0, vec![-1.0, 0.0]));
        let m = build_micp(&i).unwrap();
        let a = [true, true];
        let x = m.candidate_point(&i, &a).unwrap();
        let share = crate::choice::share_from_utilities(&i.lambda, &utilities(&i, &a));
        assert!((m.objective_value(&x) - 4.0 * share).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_micp(&inst(2, 3)).unwrap();
        let parsed = export_checked(&m, dir.path().join("m.cbf")).unwrap();
        assert_eq!(parsed.summary.num_exp_cones, 8);
        assert_eq!(parsed.summary.num_int, 3);
        let text = to_cbf(&m);
        assert!(text.contains("OBJSENSE\nMAX"));
        assert!(parse_cbf_str(&text.replace("VER\n3", "VER\n2")).is_err());
    }

    #[test]
    fn exp_cone_membership() {
        assert_eq!(exp_cone_violation(1.0, 1.0, 0.0), 0.0);
        assert!(exp_cone_violation(0.5, 1.0, 0.0) > 0.49);
        assert_eq!(exp_cone_violation(1.0, 0.0, -1.0), 0.0);
        assert!(exp_cone_violation(1.0, 0.0, 1.0) > 0.0);
    }
}
