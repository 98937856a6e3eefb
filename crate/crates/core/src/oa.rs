//! Outer-approximation branch and bound for share of choice and expected
//! profit.
//!
//! The master LP carries, per customer type `k`, purchase and no-purchase
//! probabilities `x1, x0`, the utility `u`, the product `w = u·x1` (through
//! the McCormick envelopes of `y_ki = a_i·x1`), and replaces the convex
//! constraint `F(w, x1, x0, u) = -w + x1 log x1 + x0 log x0 + softplus(u) <= 0`
//! by its gradient cuts. At binary `a` this forces `x1 = σ(u)`.
//!
//! For share of choice `y` appears only in `w`, and only upper bounds on `w`
//! can bind, so `y` is projected out: `w <= β0·x1 + sum_i h_i(x1, a_i)` with
//! `h_i` the concave piecewise-linear McCormick maximum of `β_i·y_i`. Its
//! linear pieces are added lazily. Expected profit prices `y` directly and
//! keeps the explicit columns.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bnb::{self, EngineParams, EngineResult, Master, Outcome};
use crate::choice::{f_value, logistic, share_from_utilities, softplus, utilities, Criterion, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::instance::{DesignVector, Instance, ObjectiveKind};
use crate::lp::{LinearProgram, Row};

/// Separation threshold on `F`.
pub const CUT_TOL: f64 = 1e-7;
/// Gap below which a finished search is reported as optimal.
pub const OPTIMAL_GAP: f64 = 1e-6;
/// Distance `|x1 - σ(u)|` tolerated at integral nodes before cutting further.
const PROBABILITY_TOL: f64 = 1e-10;

pub fn derive_utility_bounds(instance: &Instance) -> (Vec<f64>, Vec<f64>) {
    instance
        .beta
        .iter()
        .zip(&instance.beta0)
        .map(|(row, &b0)| {
            let lo = b0 + row.iter().map(|b| b.min(0.0)).sum::<f64>();
            let hi = b0 + row.iter().map(|b| b.max(0.0)).sum::<f64>();
            (lo, hi)
        })
        .unzip()
}

/// Gradient cut of `F` for type `k`: `coeffs · (w, x1, x0, u) <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    pub k: usize,
    /// `(w̄, x̄1, x̄0, ū)` after clamping the probabilities.
    pub anchor: [f64; 4],
    pub coeffs: [f64; 4],
    pub rhs: f64,
}

impl Cut {
    pub fn at(k: usize, w: f64, x1: f64, x0: f64, u: f64) -> Cut {
        let x1 = x1.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let x0 = x0.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let s = logistic(u);
        Cut {
            k,
            anchor: [w, x1, x0, u],
            coeffs: [-1.0, x1.ln() + 1.0, x0.ln() + 1.0, s],
            // ∇F·anchor − F(anchor), simplified so the logs cancel exactly.
            rhs: x1 + x0 + s * u - softplus(u),
        }
    }

    pub fn lhs(&self, point: [f64; 4]) -> f64 {
        self.coeffs.iter().zip(point).map(|(c, v)| c * v).sum()
    }

    /// Amount by which `point` violates the cut (negative when satisfied).
    pub fn violation(&self, point: [f64; 4]) -> f64 {
        self.lhs(point) - self.rhs
    }
}

/// Returns the gradient cut at the (clamped) candidate if `F > CUT_TOL`.
pub fn separate(k: usize, w: f64, x1: f64, x0: f64, u: f64) -> Option<Cut> {
    let f = f_value(w, x1.max(0.0), x0.max(0.0), u).ok()?;
    (f > CUT_TOL).then(|| Cut::at(k, w, x1, x0, u))
}

/// Tangent points whose slopes `σ'(t)` define the envelope rows
/// `x1 - s·u <= c(s)`; slope 0 is always added.
const ENVELOPE_TANGENTS: [f64; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

/// `max σ(u) - s·u` over `u ∈ [lo, hi]`, so `x1 <= σ(u)` implies
/// `x1 - s·u <= envelope_rhs(s, lo, hi)` on that range.
pub fn envelope_rhs(s: f64, lo: f64, hi: f64) -> f64 {
    let g = |u: f64| logistic(u) - s * u;
    let mut best = g(lo).max(g(hi));
    if s > 0.0 && s < 0.25 {
        // σ(1-σ) = s at σ = (1 + sqrt(1-4s))/2 on the concave side.
        let p = 0.5 * (1.0 + (1.0 - 4.0 * s).sqrt());
        let u = (p / (1.0 - p)).ln();
        if lo < u && u < hi {
            best = best.max(g(u));
        }
    }
    best + 1e-12 * (1.0 + best.abs())
}

/// Tolerance on the projected McCormick rows.
const MCCORMICK_TOL: f64 = 1e-9;

/// Column indices of the master LP.
#[derive(Debug, Clone)]
pub struct Layout {
    pub n: usize,
    pub x1: Vec<usize>,
    pub x0: Vec<usize>,
    pub u: Vec<usize>,
    pub w: Vec<usize>,
    /// `y[k][i]`, absent when `y_ki` appears in no row or objective, and
    /// always absent when `y` is projected out.
    pub y: Vec<Vec<Option<usize>>>,
    pub projected: bool,
}

impl Layout {
    fn point(&self, x: &[f64], k: usize) -> [f64; 4] {
        [x[self.w[k]], x[self.x1[k]], x[self.x0[k]], x[self.u[k]]]
    }

    fn cut_row(&self, cut: &Cut) -> Row {
        let k = cut.k;
        let cols = [self.w[k], self.x1[k], self.x0[k], self.u[k]];
        Row::le(cols.into_iter().zip(cut.coeffs).collect(), cut.rhs)
    }
}

/// Relaxation of the linearised bilinear program with gradient cuts.
#[derive(Debug, Clone)]
pub struct MasterModel<'a> {
    pub instance: &'a Instance,
    pub criterion: Criterion,
    pub layout: Layout,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    /// `(row, k, slope)` of the node-dependent envelope rows.
    pub envelope: Vec<(usize, usize, f64)>,
    lp: LinearProgram,
}

impl<'a> MasterModel<'a> {
    pub fn build(instance: &'a Instance, criterion: Criterion) -> Result<Self> {
        instance.validate().into_result()?;
        let (margin_base, margin) = match criterion {
            Criterion::ShareOfChoice => (1.0, vec![0.0; instance.n]),
            Criterion::ExpectedProfit => match (&instance.objective.r0, &instance.objective.r) {
                (Some(r0), Some(r)) => (*r0, r.clone()),
                _ => {
                    return Err(Error::Contract(
                        "expected-profit master needs an expected_profit objective".into(),
                    ))
                }
            },
            Criterion::GeometricMean => {
                return Err(Error::Argument("the geometric mean has its own master".into()));
            }
        };
        let (n, kk) = (instance.n, instance.num_types);
        let (u_min, u_max) = derive_utility_bounds(instance);
        let mut lp = LinearProgram::new();
        for i in 0..n {
            lp.add_var(0.0, 0.0, 1.0);
            lp.names.push(format!("a{i}"));
        }
        let projected = criterion == Criterion::ShareOfChoice;
        let mut layout = Layout {
            n,
            x1: Vec::with_capacity(kk),
            x0: Vec::with_capacity(kk),
            u: Vec::with_capacity(kk),
            w: Vec::with_capacity(kk),
            y: Vec::with_capacity(kk),
            projected,
        };
        for k in 0..kk {
            let lam = instance.lambda[k];
            layout.x1.push(lp.add_var(lam * margin_base, 0.0, 1.0));
            layout.x0.push(lp.add_var(0.0, 0.0, 1.0));
            layout.u.push(lp.add_var(0.0, u_min[k], u_max[k]));
            layout.w.push(lp.add_var(0.0, u_min[k].min(0.0), u_max[k].max(0.0)));
            for name in ["x1", "x0", "u", "w"] {
                lp.names.push(format!("{name}_{k}"));
            }
        }
        for k in 0..kk {
            let lam = instance.lambda[k];
            let row: Vec<Option<usize>> = (0..n)
                .map(|i| {
                    (!projected && (instance.beta[k][i] != 0.0 || margin[i] != 0.0)).then(|| {
                        lp.names.push(format!("y_{k}_{i}"));
                        lp.add_var(lam * margin[i], 0.0, 1.0)
                    })
                })
                .collect();
            layout.y.push(row);
        }
        for k in 0..kk {
            let (x1, x0, u, w) = (layout.x1[k], layout.x0[k], layout.u[k], layout.w[k]);
            lp.add_row(Row::eq(vec![(x1, 1.0), (x0, 1.0)], 1.0));
            let mut urow = vec![(u, 1.0)];
            urow.extend((0..n).filter(|&i| instance.beta[k][i] != 0.0).map(|i| (i, -instance.beta[k][i])));
            lp.add_row(Row::eq(urow, instance.beta0[k]));
            let mut wrow = vec![(w, 1.0), (x1, -instance.beta0[k])];
            for i in 0..n {
                if let Some(y) = layout.y[k][i] {
                    if instance.beta[k][i] != 0.0 {
                        wrow.push((y, -instance.beta[k][i]));
                    }
                    lp.add_row(Row::le(vec![(y, 1.0), (x1, -1.0)], 0.0));
                    lp.add_row(Row::le(vec![(y, 1.0), (i, -1.0)], 0.0));
                    lp.add_row(Row::ge(vec![(y, 1.0), (i, -1.0), (x1, -1.0)], -1.0));
                }
            }
            if !projected {
                lp.add_row(Row::eq(wrow, 0.0));
            }
        }
        for c in &instance.constraints {
            lp.add_row(Row::le(c.coeffs.iter().map(|c| (c.index, c.value)).collect(), c.rhs));
        }
        let mut envelope = Vec::new();
        for k in 0..kk {
            let slopes = std::iter::once(0.0).chain(ENVELOPE_TANGENTS.iter().map(|&t| logistic(t) * logistic(-t)));
            for s in slopes {
                let rhs = envelope_rhs(s, u_min[k], u_max[k]);
                let row = lp.add_row(Row::le(vec![(layout.x1[k], 1.0), (layout.u[k], -s)], rhs));
                envelope.push((row, k, s));
            }
        }
        let mut model = MasterModel {
            instance,
            criterion,
            layout,
            u_min,
            u_max,
            envelope,
            lp,
        };
        for cut in model.initial_cuts() {
            let row = model.layout.cut_row(&cut);
            model.lp.add_row(row);
        }
        if projected {
            // Every attribute on the `y <= x1` / `y >= 0` piece, then every
            // attribute on the piece through `a_i`.
            for k in 0..kk {
                for on_a in [false, true] {
                    let row = model.mccormick_row(k, &vec![on_a; n]);
                    model.lp.add_row(row);
                }
            }
        }
        Ok(model)
    }

    /// `w_k <= β0·x1 + sum_i piece_i` where `use_a[i]` selects the piece
    /// through `a_i` (`β_i·a_i` for `β_i > 0`, `β_i·(x1 + a_i - 1)` for
    /// `β_i < 0`) rather than the one free of it (`β_i·x1`, resp. `0`).
    fn mccormick_row(&self, k: usize, use_a: &[bool]) -> Row {
        let (beta0, beta) = (self.instance.beta0[k], &self.instance.beta[k]);
        let mut x1_coeff = -beta0;
        let mut rhs = 0.0;
        let mut coeffs = vec![(self.layout.w[k], 1.0)];
        for (i, &b) in beta.iter().enumerate() {
            match (b > 0.0, b < 0.0, use_a[i]) {
                (true, _, false) => x1_coeff -= b,
                (true, _, true) => coeffs.push((i, -b)),
                (_, true, true) => {
                    x1_coeff -= b;
                    coeffs.push((i, -b));
                    rhs -= b;
                }
                _ => {}
            }
        }
        coeffs.push((self.layout.x1[k], x1_coeff));
        Row::le(coeffs, rhs)
    }

    /// The most violated projected McCormick row of type `k` at `x`, when
    /// the violation matters for `F`.
    fn separate_mccormick(&self, x: &[f64], k: usize) -> Option<Row> {
        let x1 = x[self.layout.x1[k]].clamp(0.0, 1.0);
        let mut bound = self.instance.beta0[k] * x1;
        let mut use_a = vec![false; self.instance.n];
        for (i, &b) in self.instance.beta[k].iter().enumerate() {
            let a = x[i].clamp(0.0, 1.0);
            if b > 0.0 {
                use_a[i] = a < x1;
                bound += b * a.min(x1);
            } else if b < 0.0 {
                use_a[i] = x1 + a - 1.0 > 0.0;
                bound += b * (x1 + a - 1.0).max(0.0);
            }
        }
        let w = x[self.layout.w[k]];
        if w - bound <= MCCORMICK_TOL * (1.0 + w.abs()) {
            return None;
        }
        // If lowering w to the bound keeps F <= 0, the point already solves
        // the exact relaxation and the row would not change the LP value.
        let x0 = x[self.layout.x0[k]].clamp(0.0, 1.0);
        let f = f_value(bound, x1, x0, x[self.layout.u[k]]).unwrap_or(f64::INFINITY);
        (f > CUT_TOL).then(|| self.mccormick_row(k, &use_a))
    }

    /// Tangent cuts at `u ∈ {u_min, 0, u_max}` on the logit curve.
    pub fn initial_cuts(&self) -> Vec<Cut> {
        let mut cuts = Vec::new();
        for k in 0..self.instance.num_types {
            let mut anchors = vec![self.u_min[k]];
            if self.u_min[k] < 0.0 && 0.0 < self.u_max[k] {
                anchors.push(0.0);
            }
            if self.u_max[k] > self.u_min[k] {
                anchors.push(self.u_max[k]);
            }
            for u in anchors {
                let s = logistic(u);
                cuts.push(Cut::at(k, u * s, s, 1.0 - s, u));
            }
        }
        cuts
    }

    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    fn value(&self, a: &[bool]) -> f64 {
        let u = utilities(self.instance, a);
        let share = share_from_utilities(&self.instance.lambda, &u);
        match self.criterion {
            Criterion::ExpectedProfit => {
                let margin = self.instance.objective.margin(a).unwrap_or(0.0);
                if margin == 0.0 {
                    0.0
                } else {
                    margin * share
                }
            }
            _ => share,
        }
    }
}

impl Master for MasterModel<'_> {
    fn num_design(&self) -> usize {
        self.instance.n
    }

    fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    fn design_column(&self, i: usize) -> usize {
        i
    }

    fn separate(&self, x: &[f64], design: Option<&[bool]>) -> Vec<Row> {
        let mut rows = Vec::new();
        for k in 0..self.instance.num_types {
            let [w, x1, x0, u] = self.layout.point(x, k);
            let cut = if design.is_some() {
                // At binary a the feasible x1 is the single point σ(u), where F
                // is flat; anchor halfway to it so the cut bites quadratically.
                let s = logistic(u);
                if (x1 - s).abs() <= PROBABILITY_TOL {
                    continue;
                }
                let mid = 0.5 * (x1 + s);
                Some(Cut::at(k, u * mid, mid, 1.0 - mid, u))
            } else {
                separate(k, w, x1, x0, u)
            };
            if let Some(c) = cut {
                if c.violation([w, x1, x0, u]) > 0.0 {
                    rows.push(self.layout.cut_row(&c));
                }
            }
        }
        rows
    }

    fn evaluate(&self, a: &[bool]) -> Option<f64> {
        self.instance.is_feasible_bits(a).then(|| self.value(a))
    }

    fn lazy_rows(&self, x: &[f64]) -> Vec<Row> {
        if !self.layout.projected {
            return Vec::new();
        }
        (0..self.instance.num_types)
            .filter_map(|k| self.separate_mccormick(x, k))
            .collect()
    }

    fn node_rows(&self, fixed: &[i8]) -> Vec<(usize, f64, f64)> {
        let (lo, hi) = node_utility_bounds(self.instance, fixed);
        self.envelope
            .iter()
            .map(|&(row, k, s)| (row, f64::NEG_INFINITY, envelope_rhs(s, lo[k], hi[k])))
            .collect()
    }
}

/// Utility range of each type over completions of a partial design.
pub fn node_utility_bounds(instance: &Instance, fixed: &[i8]) -> (Vec<f64>, Vec<f64>) {
    instance
        .beta
        .iter()
        .zip(&instance.beta0)
        .map(|(row, &b0)| {
            let (mut lo, mut hi) = (b0, b0);
            for (&b, &f) in row.iter().zip(fixed) {
                match f {
                    1 => {
                        lo += b;
                        hi += b;
                    }
                    0 => {}
                    _ => {
                        lo += b.min(0.0);
                        hi += b.max(0.0);
                    }
                }
            }
            (lo, hi)
        })
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    None,
    Gm,
}

#[derive(Debug, Clone)]
pub struct SolveParams {
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub warm_start: WarmStart,
    pub root_kelley_rounds: usize,
    pub node_kelley_rounds: usize,
    pub integer_rounds: usize,
    pub threads: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            gap_tol: 1e-6,
            time_limit: None,
            node_limit: None,
            warm_start: WarmStart::None,
            root_kelley_rounds: 30,
            node_kelley_rounds: 0,
            integer_rounds: 200,
            threads: 1,
        }
    }
}

impl SolveParams {
    pub(crate) fn engine(&self) -> EngineParams {
        EngineParams {
            rel_gap: self.gap_tol,
            abs_gap: 0.0,
            time_limit: self.time_limit,
            node_limit: self.node_limit,
            root_rounds: self.root_kelley_rounds,
            node_rounds: self.node_kelley_rounds,
            integer_rounds: self.integer_rounds,
            threads: self.threads,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Optimal,
    GapReached,
    TimeLimit,
    NodeLimit,
    Infeasible,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Optimal => "optimal",
            TerminationReason::GapReached => "gap_reached",
            TerminationReason::TimeLimit => "time_limit",
            TerminationReason::NodeLimit => "node_limit",
            TerminationReason::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub objective: ObjectiveKind,
    pub termination: TerminationReason,
    pub design: Option<DesignVector>,
    pub objective_value: Option<f64>,
    pub best_bound: Option<f64>,
    /// `(UB - LB) / UB`.
    pub gap: Option<f64>,
    pub gap_percent: Option<f64>,
    pub root_bound: Option<f64>,
    pub nodes: u64,
    pub cuts: usize,
    pub lp_iterations: u64,
    pub wall_time_secs: f64,
}

pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if upper - lower <= 0.0 {
        0.0
    } else {
        (upper - lower) / upper.abs().max(1e-300)
    }
}

pub(crate) fn termination(result: &EngineResult, gap: Option<f64>, optimal_gap: f64) -> TerminationReason {
    match result.outcome {
        Outcome::TimeLimit => TerminationReason::TimeLimit,
        Outcome::NodeLimit => TerminationReason::NodeLimit,
        Outcome::Exhausted => match gap {
            None => TerminationReason::Infeasible,
            Some(g) if g <= optimal_gap => TerminationReason::Optimal,
            Some(_) => TerminationReason::GapReached,
        },
    }
}

fn run(instance: &Instance, criterion: Criterion, params: &SolveParams) -> Result<SolveReport> {
    let start = Instant::now();
    let master = MasterModel::build(instance, criterion)?;
    let mut engine = params.engine();
    engine.seeds.push(vec![false; instance.n]);
    if params.warm_start == WarmStart::Gm {
        let gm = crate::gm::solve_gm(instance, params)?;
        if let Some(d) = gm.design {
            engine.seeds.push(d.into_bits());
        }
    }
    let result = bnb::run(&master, &engine)?;
    let objective = match criterion {
        Criterion::ExpectedProfit => ObjectiveKind::ExpectedProfit,
        _ => ObjectiveKind::ShareOfChoice,
    };
    Ok(build_report("oa", objective, &result, start.elapsed()))
}

pub(crate) fn build_report(method: &str, objective: ObjectiveKind, result: &EngineResult, elapsed: Duration) -> SolveReport {
    let value = result.incumbent.as_ref().map(|x| x.1);
    let bound = value.map(|_| result.best_bound);
    let gap = value.map(|v| relative_gap(result.best_bound, v));
    SolveReport {
        method: method.to_string(),
        objective,
        termination: termination(result, gap, OPTIMAL_GAP),
        design: result.incumbent.as_ref().map(|x| DesignVector::new(x.0.clone())),
        objective_value: value,
        best_bound: bound,
        gap,
        gap_percent: gap.map(|g| 100.0 * g),
        root_bound: result.root_bound.is_finite().then_some(result.root_bound),
        nodes: result.nodes,
        cuts: result.cuts,
        lp_iterations: result.lp_iterations,
        wall_time_secs: elapsed.as_secs_f64(),
    }
}

/// Maximises the share of choice `sum_k λ_k σ(u_k(a))` over feasible designs.
pub fn solve(instance: &Instance, params: &SolveParams) -> Result<SolveReport> {
    run(instance, Criterion::ShareOfChoice, params)
}

/// Maximises `R(a) · share(a)`; the instance must carry a profit objective.
pub fn solve_profit(instance: &Instance, params: &SolveParams) -> Result<SolveReport> {
    if instance.objective_kind() != ObjectiveKind::ExpectedProfit {
        return Err(Error::Contract("solve_profit needs an expected_profit objective".into()));
    }
    run(instance, Criterion::ExpectedProfit, params)
}

/// Dispatches on the instance's objective kind.
pub fn solve_instance(instance: &Instance, params: &SolveParams) -> Result<SolveReport> {
    match instance.objective_kind() {
        ObjectiveKind::ShareOfChoice => solve(instance, params),
        ObjectiveKind::ExpectedProfit => solve_profit(instance, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::f_gradient;
    use crate::instance::ObjectiveSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn utility_bounds_by_sign() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0, -2.0]]);
        assert_eq!(derive_utility_bounds(&inst), (vec![-2.0], vec![1.0]));
        let flat = Instance::new(vec![1.0], vec![0.3], vec![vec![0.0, 0.0]]);
        assert_eq!(derive_utility_bounds(&flat), (vec![0.3], vec![0.3]));
        let l3 = -(3.0f64).ln();
        let inst = Instance::new(vec![1.0], vec![l3], vec![vec![5.0, 5.0]]);
        let (lo, hi) = derive_utility_bounds(&inst);
        assert_abs_diff_eq!(lo[0], l3, epsilon = 1e-15);
        assert_abs_diff_eq!(hi[0], 10.0 + l3, epsilon = 1e-14);
    }

    #[test]
    fn no_cut_at_logit_point() {
        for u in [-3.0, 0.0, 0.7, 12.0] {
            let s = logistic(u);
            assert!(separate(0, u * s, s, 1.0 - s, u).is_none());
        }
    }

    #[test]
    fn clamped_cut_near_boundary() {
        // F is negative here (-1 + log 2), so only the construction is exercised.
        assert!(separate(0, 1.0, 1.0 - 1e-12, 1e-12, 0.0).is_none());
        let cut = Cut::at(0, 1.0, 1.0 - 1e-12, 1e-12, 0.0);
        assert!(separate(0, 0.0, 1.0 - 1e-12, 1e-12, 0.0).is_some());
        let cap = PROB_CLAMP.ln().abs() + 1.0;
        assert!(cut.coeffs.iter().all(|c| c.is_finite() && c.abs() <= cap));
        assert_eq!(cut.anchor[2], PROB_CLAMP);
    }

    #[test]
    fn cut_at_skewed_point() {
        let f = 0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln() + 2f64.ln();
        assert_abs_diff_eq!(f, 0.36806, epsilon = 1e-5);
        let cut = separate(0, 0.0, 0.9, 0.1, 0.0).expect("violated");
        assert_abs_diff_eq!(cut.violation([0.0, 0.9, 0.1, 0.0]), f, epsilon = 1e-12);
        let g = f_gradient(0.0, 0.9, 0.1, 0.0).unwrap();
        assert_eq!(cut.coeffs, g);
    }

    #[test]
    fn single_attribute_solves() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0]]);
        let r = solve(&inst, &SolveParams::default()).unwrap();
        assert_eq!(r.termination, TerminationReason::Optimal);
        assert_eq!(r.design.unwrap().bits(), &[true]);
        assert_abs_diff_eq!(r.objective_value.unwrap(), 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert!(r.gap.unwrap() <= 1e-6);
    }

    #[test]
    fn flat_instance_returns_zeros() {
        let inst = Instance::new(vec![0.4, 0.6], vec![0.5, -0.5], vec![vec![0.0; 4], vec![0.0; 4]]);
        let r = solve(&inst, &SolveParams::default()).unwrap();
        assert_eq!(r.design.unwrap(), DesignVector::zeros(4));
        assert_abs_diff_eq!(
            r.objective_value.unwrap(),
            0.4 * logistic(0.5) + 0.6 * logistic(-0.5),
            epsilon = 1e-15
        );
    }

    #[test]
    fn profit_two_candidates() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0]])
            .with_objective(ObjectiveSpec::expected_profit(10.0, vec![-2.0]));
        let r = solve_profit(&inst, &SolveParams::default()).unwrap();
        assert_eq!(r.design.unwrap().bits(), &[true]);
        assert_abs_diff_eq!(r.objective_value.unwrap(), 8.0 * logistic(1.0), epsilon = 1e-12);
        assert!(matches!(solve_profit(&Instance::new(vec![1.0], vec![0.0], vec![vec![1.0]]), &SolveParams::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_margin_profit() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0, -1.0]])
            .with_objective(ObjectiveSpec::expected_profit(0.0, vec![0.0, 0.0]));
        let r = solve_profit(&inst, &SolveParams::default()).unwrap();
        assert_eq!(r.objective_value, Some(0.0));
        assert_eq!(r.termination, TerminationReason::Optimal);
    }

    #[test]
    fn infeasible_constraints() {
        let inst = Instance::new(vec![1.0], vec![0.0], vec![vec![1.0, 1.0]])
            .with_constraints(vec![crate::instance::LinearConstraint::new([(0, -1.0), (1, -1.0)], -3.0)]);
        let r = solve(&inst, &SolveParams::default()).unwrap();
        assert_eq!(r.termination, TerminationReason::Infeasible);
        assert!(r.design.is_none());
    }
}
