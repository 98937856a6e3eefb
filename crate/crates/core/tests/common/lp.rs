use rand::Rng;
use socpd::lp::{LinearProgram, Relation, Row};

/// Random program around a hidden point, returned as a feasibility witness
/// unless the rows were deliberately shifted (about one case in ten).
pub fn random_lp_with_witness(rng: &mut impl Rng, max_vars: usize, max_rows: usize) -> (LinearProgram, Option<Vec<f64>>) {
    let p = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let x0: Vec<f64> = (0..p).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut lp = LinearProgram::new();
    let zero_objective = rng.gen_bool(0.05);
    for &v in &x0 {
        let c = if zero_objective { 0.0 } else { rng.gen_range(-5.0..5.0) };
        let kind = rng.gen_range(0..100);
        let (l, u) = match kind {
            0..=59 => (v - rng.gen_range(0.0..5.0), v + rng.gen_range(0.0..5.0)),
            60..=74 => (v - rng.gen_range(0.0..5.0), f64::INFINITY),
            75..=84 => (f64::NEG_INFINITY, v + rng.gen_range(0.0..5.0)),
            85..=89 => (f64::NEG_INFINITY, f64::INFINITY),
            90..=94 => (v, v),
            _ => (v.floor(), v.floor() + 1.0),
        };
        lp.add_var(c, l, u);
    }
    let break_it = rng.gen_bool(0.1);
    for _ in 0..m {
        let nnz = rng.gen_range(1..=p.min(8));
        let integer = rng.gen_bool(0.3);
        let mut coeffs = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let j = rng.gen_range(0..p);
            let a = if integer {
                rng.gen_range(-3..=3) as f64
            } else {
                rng.gen_range(-5.0..5.0)
            };
            coeffs.push((j, a));
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let gap = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..3.0) };
        let shift = if break_it { rng.gen_range(-4.0..1.0) } else { 0.0 };
        let (relation, rhs) = match rng.gen_range(0..10) {
            0..=6 => (Relation::Le, act + gap + shift),
            7..=8 => (Relation::Ge, act - gap - shift),
            _ => (Relation::Eq, act + shift),
        };
        lp.add_row(Row::new(coeffs, relation, rhs));
    }
    (lp, (!break_it).then_some(x0))
}

pub fn random_lp(rng: &mut impl Rng, max_vars: usize, max_rows: usize) -> LinearProgram {
    random_lp_with_witness(rng, max_vars, max_rows).0
}

fn sup_linear(coef: f64, lo: f64, hi: f64) -> f64 {
    if coef > 0.0 {
        coef * hi
    } else if coef < 0.0 {
        coef * lo
    } else {
        0.0
    }
}

/// Upper bound on `max c·x` implied by row multipliers `y`:
/// `sup_s yᵀs + sup_x (c - Aᵀy)ᵀx` over the row and variable boxes.
/// Reduced costs below `1e-9` in magnitude facing an infinite bound are
/// treated as zero; any other infinite term yields `None`.
pub fn lagrangian_bound(lp: &LinearProgram, y: &[f64]) -> Option<f64> {
    let mut total = 0.0;
    for (row, &yi) in lp.rows.iter().zip(y) {
        let (lo, hi) = match row.relation {
            Relation::Le => (f64::NEG_INFINITY, row.rhs),
            Relation::Ge => (row.rhs, f64::INFINITY),
            Relation::Eq => (row.rhs, row.rhs),
        };
        let t = sup_linear(yi, lo, hi);
        if !t.is_finite() {
            return None;
        }
        total += t;
    }
    let mut d = lp.objective.clone();
    for (row, &yi) in lp.rows.iter().zip(y) {
        for &(j, a) in &row.coeffs {
            d[j] -= yi * a;
        }
    }
    for j in 0..lp.num_vars() {
        let t = sup_linear(d[j], lp.lower[j], lp.upper[j]);
        if t.is_finite() {
            total += t;
        } else if d[j].abs() > 1e-9 {
            return None;
        }
    }
    Some(total)
}

/// Exact optimum of a bounded two-variable program by vertex enumeration.
pub fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    assert_eq!(lp.num_vars(), 2);
    let mut lines: Vec<([f64; 2], f64)> = Vec::new();
    for row in &lp.rows {
        let mut a = [0.0; 2];
        for &(j, c) in &row.coeffs {
            a[j] += c;
        }
        lines.push((a, row.rhs));
    }
    for j in 0..2 {
        let mut e = [0.0; 2];
        e[j] = 1.0;
        lines.push((e, lp.lower[j]));
        lines.push((e, lp.upper[j]));
    }
    let mut best: Option<f64> = None;
    for p in 0..lines.len() {
        for q in p + 1..lines.len() {
            let ([a, b], r) = lines[p];
            let ([c, d], s) = lines[q];
            let det = a * d - b * c;
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(r * d - b * s) / det, (a * s - r * c) / det];
            let (rows, bounds) = lp.violations(&x);
            if rows <= 1e-9 && bounds <= 1e-9 {
                let v = lp.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    }
    best
}
