//! Geometric-mean surrogate: maximise `prod_k σ(u_k(a))^λ_k`.
//!
//! In log space the objective is `sum_k λ_k (u_k - softplus(u_k))`, which is
//! concave in `u`, so tangent cuts on `t_k >= softplus(u_k)` give an exact
//! outer approximation. The design it returns carries a worst-case
//! guarantee on the share of choice through `gamma`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bnb::{self, Master};
use crate::choice::{log_gm_from_utilities, logistic, share_from_utilities, softplus, utilities};
use crate::error::{Error, Result};
use crate::instance::{DesignVector, Instance};
use crate::lp::{LinearProgram, Row};
use crate::oa::{derive_utility_bounds, termination, SolveParams, TerminationReason};

/// Absolute gap on the log geometric mean.
pub const GM_GAP_TOL: f64 = 1e-8;
const GM_CUT_TOL: f64 = 1e-10;

/// Smallest and largest purchase probability any design can produce.
pub fn probability_bounds(instance: &Instance) -> (f64, f64) {
    let (lo, hi) = derive_utility_bounds(instance);
    let l = lo.iter().map(|&u| logistic(u)).fold(f64::INFINITY, f64::min);
    let u = hi.iter().map(|&u| logistic(u)).fold(f64::NEG_INFINITY, f64::max);
    (l, u)
}

/// `Γ = 1 / sum_k λ_k (U/L)^(1-λ_k)`: the GM optimum's share of choice is at
/// least `Γ` times the best share.
pub fn gamma(lambda: &[f64], l: f64, u: f64) -> Result<f64> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Domain(format!("lower probability bound must be positive, got {l}")));
    }
    if !(u >= l) || !u.is_finite() {
        return Err(Error::Domain(format!("upper bound {u} below lower bound {l}")));
    }
    if lambda.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::Domain("weights must lie in [0, 1]".into()));
    }
    let log_ratio = (u / l).ln();
    let terms: Vec<f64> = lambda
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x.ln() + (1.0 - x) * log_ratio)
        .collect();
    if terms.is_empty() {
        return Err(Error::Domain("weights are all zero".into()));
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    Ok((-lse).exp())
}

/// `Γ` for `K` equal weights at each ratio `U/L`.
pub fn gamma_curve(num_types: usize, ratios: &[f64]) -> Result<Vec<(f64, f64)>> {
    if num_types == 0 {
        return Err(Error::Domain("need at least one customer type".into()));
    }
    let lambda = vec![1.0 / num_types as f64; num_types];
    ratios
        .iter()
        .map(|&r| {
            if !(r >= 1.0) {
                return Err(Error::Domain(format!("ratio U/L must be at least 1, got {r}")));
            }
            Ok((r, gamma(&lambda, 1.0, r)?))
        })
        .collect()
}

/// Master LP over `(a, u, t)` with tangent cuts on `t >= softplus(u)`.
#[derive(Debug, Clone)]
pub struct GmMaster<'a> {
    pub instance: &'a Instance,
    pub u_cols: Vec<usize>,
    pub t_cols: Vec<usize>,
    lp: LinearProgram,
}

impl<'a> GmMaster<'a> {
    pub fn build(instance: &'a Instance) -> Result<Self> {
        instance.validate().into_result()?;
        let (n, kk) = (instance.n, instance.num_types);
        let (umin, umax) = derive_utility_bounds(instance);
        let mut lp = LinearProgram::new();
        for i in 0..n {
            lp.add_var(0.0, 0.0, 1.0);
            lp.names.push(format!("a{i}"));
        }
        let mut u_cols = Vec::with_capacity(kk);
        let mut t_cols = Vec::with_capacity(kk);
        for k in 0..kk {
            let lam = instance.lambda[k];
            u_cols.push(lp.add_var(lam, umin[k], umax[k]));
            t_cols.push(lp.add_var(-lam, softplus(umin[k]), softplus(umax[k])));
            lp.names.push(format!("u_{k}"));
            lp.names.push(format!("t_{k}"));
        }
        for k in 0..kk {
            let mut row = vec![(u_cols[k], 1.0)];
            row.extend((0..n).filter(|&i| instance.beta[k][i] != 0.0).map(|i| (i, -instance.beta[k][i])));
            lp.add_row(Row::eq(row, instance.beta0[k]));
        }
        for c in &instance.constraints {
            lp.add_row(Row::le(c.coeffs.iter().map(|c| (c.index, c.value)).collect(), c.rhs));
        }
        let mut master = GmMaster {
            instance,
            u_cols,
            t_cols,
            lp,
        };
        for k in 0..kk {
            let mut anchors = vec![umin[k]];
            if umin[k] < 0.0 && 0.0 < umax[k] {
                anchors.push(0.0);
            }
            if umax[k] > umin[k] {
                anchors.push(umax[k]);
            }
            for u in anchors {
                let row = master.tangent(k, u);
                master.lp.add_row(row);
            }
        }
        Ok(master)
    }

    /// Tangent of `softplus` at `u` as the row `σ(u) u_k - t_k <= σ(u) u - softplus(u)`.
    pub fn tangent(&self, k: usize, u: f64) -> Row {
        let s = logistic(u);
        Row::le(vec![(self.u_cols[k], s), (self.t_cols[k], -1.0)], s * u - softplus(u))
    }
}

impl Master for GmMaster<'_> {
    fn num_design(&self) -> usize {
        self.instance.n
    }

    fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    fn design_column(&self, i: usize) -> usize {
        i
    }

    fn separate(&self, x: &[f64], _design: Option<&[bool]>) -> Vec<Row> {
        (0..self.instance.num_types)
            .filter(|&k| self.instance.lambda[k] > 0.0)
            .filter_map(|k| {
                let (u, t) = (x[self.u_cols[k]], x[self.t_cols[k]]);
                (softplus(u) - t > GM_CUT_TOL).then(|| self.tangent(k, u))
            })
            .collect()
    }

    fn evaluate(&self, a: &[bool]) -> Option<f64> {
        self.instance
            .is_feasible_bits(a)
            .then(|| log_gm_from_utilities(&self.instance.lambda, &utilities(self.instance, a)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmReport {
    pub method: String,
    pub termination: TerminationReason,
    pub design: Option<DesignVector>,
    pub gm_value: Option<f64>,
    pub log_gm_value: Option<f64>,
    /// Upper bound on the log geometric mean.
    pub log_best_bound: Option<f64>,
    /// `1 - exp(-(log bound - log value))`, the relative gap on the GM.
    pub gap: Option<f64>,
    pub am_value_of_design: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "U")]
    pub u: f64,
    /// `min(am / Γ, U)`: no design has a larger share of choice.
    pub am_upper_bound: Option<f64>,
    /// `am / am_upper_bound`.
    pub certified_fraction: Option<f64>,
    pub nodes: u64,
    pub cuts: usize,
    pub lp_iterations: u64,
    pub wall_time_secs: f64,
}

/// Solves the geometric-mean problem and attaches the share-of-choice
/// certificate. A loose `gap_tol` (above `1e-6`) is applied as an absolute
/// gap on the log geometric mean; otherwise `GM_GAP_TOL` is used.
pub fn solve_gm(instance: &Instance, params: &SolveParams) -> Result<GmReport> {
    let start = Instant::now();
    let master = GmMaster::build(instance)?;
    let mut engine = params.engine();
    engine.rel_gap = 0.0;
    engine.abs_gap = if params.gap_tol > 1e-6 { params.gap_tol } else { GM_GAP_TOL };
    engine.seeds.push(vec![false; instance.n]);
    let result = bnb::run(&master, &engine)?;

    let log_value = result.incumbent.as_ref().map(|x| x.1);
    let log_gap = log_value.map(|v| (result.best_bound - v).max(0.0));
    let reason = termination(&result, log_gap, engine.abs_gap.min(GM_GAP_TOL));
    let (l, u) = probability_bounds(instance);
    let g = gamma(&instance.lambda, l, u).ok();
    let design = result.incumbent.as_ref().map(|x| x.0.clone());
    let am = design
        .as_ref()
        .map(|d| share_from_utilities(&instance.lambda, &utilities(instance, d)));
    // The guarantee holds for the exact GM optimum only.
    let certified = reason == TerminationReason::Optimal;
    let am_upper = match (am, g, certified) {
        (Some(am), Some(g), true) => Some((am / g).min(u)),
        _ => None,
    };
    Ok(GmReport {
        method: "gm".into(),
        termination: reason,
        design: design.map(DesignVector::new),
        gm_value: log_value.map(f64::exp),
        log_gm_value: log_value,
        log_best_bound: log_value.map(|_| result.best_bound),
        gap: log_gap.map(|g| -(-g).exp_m1()),
        am_value_of_design: am,
        gamma: g,
        l,
        u,
        am_upper_bound: am_upper,
        certified_fraction: am.zip(am_upper).map(|(a, b)| a / b),
        nodes: result.nodes,
        cuts: result.cuts,
        lp_iterations: result.lp_iterations,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gamma_values() {
        assert_abs_diff_eq!(gamma(&[0.5, 0.5], 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gamma(&[0.5, 0.5], 0.1, 0.9).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gamma(&[1.0], 0.01, 0.99).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(gamma(&[0.5, 0.5], 0.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_curve_rejects_small_ratio() {
        let c = gamma_curve(4, &[1.0, 16.0]).unwrap();
        assert_abs_diff_eq!(c[0].1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1].1, 16f64.powf(-0.75), epsilon = 1e-12);
        assert!(matches!(gamma_curve(4, &[0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn gm_single_type_matches_share() {
        let inst = Instance::new(vec![1.0], vec![-0.5], vec![vec![1.0, -0.3, 0.2]]);
        let r = solve_gm(&inst, &SolveParams::default()).unwrap();
        assert_eq!(r.termination, TerminationReason::Optimal);
        assert_eq!(r.design.as_ref().unwrap().bits(), &[true, false, true]);
        assert_abs_diff_eq!(r.gm_value.unwrap(), logistic(0.7), epsilon = 1e-12);
        assert_abs_diff_eq!(r.gm_value.unwrap(), r.am_value_of_design.unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn gm_balances_types() {
        // One type gains a lot from a0, the other loses a little.
        let inst = Instance::new(vec![0.5, 0.5], vec![0.0, 0.0], vec![vec![3.0], vec![-0.5]]);
        let r = solve_gm(&inst, &SolveParams::default()).unwrap();
        let on = 0.5 * (logistic(3.0).ln() + logistic(-0.5).ln());
        let off = 0.5f64.ln();
        assert_abs_diff_eq!(r.log_gm_value.unwrap(), on.max(off), epsilon = 1e-12);
        let am_up = r.am_upper_bound.unwrap();
        assert!(am_up >= r.am_value_of_design.unwrap() - 1e-12);
    }
}
