//! Bounded-variable primal and dual simplex.
//!
//! Every row `i` owns a logical variable `s_i = a_i·x` whose bounds encode the
//! relation, so the constraint matrix is `[A  -I]`. Only the square block of
//! `A` formed by rows with a nonbasic logical (tight rows `R`) and basic
//! structural columns (`J`) is ever inverted; its inverse `M` is `|J| x |R|`
//! and is updated in place when the basis changes. Appending rows leaves `M`
//! untouched because the new logicals enter the basis.

use super::{Basis, LinearProgram, LpSolution, LpStatus, Row, VarStatus, BOUND_TOL, ROW_TOL};
use crate::error::{Error, Result};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DUAL_PERTURBATION: f64 = 1e-7;
const NONE: usize = usize::MAX;

/// Reusable simplex workspace. Rows can be appended and bounds moved between
/// calls to [`Simplex::solve`]; the current basis is kept as a warm start.
#[derive(Debug, Clone)]
pub struct Simplex {
    p: usize,
    m: usize,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    kinv: Vec<f64>,
    cap: usize,
    kr: Vec<usize>,
    kj: Vec<usize>,
    rpos: Vec<usize>,
    jpos: Vec<usize>,
    updates: usize,
    feas_tol: f64,
    iterations: usize,
    iteration_limit: Option<usize>,
    last_status: LpStatus,
    /// Cost shifts (minimisation sense) active during dual simplex.
    shift: Option<Vec<f64>>,
}

struct Leaving {
    var: usize,
    target: VarStatus,
    pivot: f64,
}

impl Simplex {
    pub fn new(lp: &LinearProgram) -> Result<Self> {
        lp.validate()?;
        let p = lp.num_vars();
        let mut s = Simplex {
            p,
            m: 0,
            objective: lp.objective.clone(),
            lower: lp.lower.clone(),
            upper: lp.upper.clone(),
            cols: vec![Vec::new(); p],
            rows: Vec::new(),
            status: vec![VarStatus::AtLower; p],
            x: vec![0.0; p],
            kinv: Vec::new(),
            cap: 0,
            kr: Vec::new(),
            kj: Vec::new(),
            rpos: Vec::new(),
            jpos: vec![NONE; p],
            updates: 0,
            feas_tol: PRIMAL_TOL,
            iterations: 0,
            iteration_limit: None,
            last_status: LpStatus::IterationLimit,
            shift: None,
        };
        for j in 0..p {
            s.status[j] = s.default_nonbasic(j);
            s.x[j] = s.nonbasic_value(j);
        }
        for row in &lp.rows {
            s.push_row(row);
        }
        Ok(s)
    }

    pub fn num_vars(&self) -> usize {
        self.p
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn status(&self) -> LpStatus {
        self.last_status
    }

    pub fn set_iteration_limit(&mut self, limit: Option<usize>) {
        self.iteration_limit = limit;
    }

    /// Appends a row; its logical variable enters the basis.
    pub fn add_row(&mut self, row: &Row) -> Result<()> {
        if !row.rhs.is_finite() {
            return Err(Error::Argument("row right-hand side is not finite".into()));
        }
        for &(j, a) in &row.coeffs {
            if j >= self.p || !a.is_finite() {
                return Err(Error::Argument(format!("bad row coefficient ({j}, {a})")));
            }
        }
        self.push_row(row);
        Ok(())
    }

    fn push_row(&mut self, row: &Row) {
        let i = self.m;
        let entries: Vec<(usize, f64)> = row.coeffs.iter().copied().filter(|&(_, a)| a != 0.0).collect();
        for &(j, a) in &entries {
            self.cols[j].push((i, a));
        }
        let act = entries.iter().map(|&(j, a)| a * self.x[j]).sum();
        self.rows.push(entries);
        let (l, u) = row.activity_bounds();
        self.lower.push(l);
        self.upper.push(u);
        self.status.push(VarStatus::Basic);
        self.x.push(act);
        self.rpos.push(NONE);
        self.m += 1;
    }

    /// Drops every row `i` with `keep[i] == false`; the remaining rows keep
    /// their order and status. Removing a row whose logical is nonbasic
    /// leaves the basis short, which the next refactor repairs.
    pub fn remove_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.m, "keep mask must cover every row");
        let mut map = vec![NONE; self.m];
        let mut next = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = next;
                next += 1;
            }
        }
        if next == self.m {
            return;
        }
        let mut tight_removed = false;
        let rows = std::mem::take(&mut self.rows);
        for (i, row) in rows.into_iter().enumerate() {
            if map[i] != NONE {
                self.rows.push(row);
            } else if self.status[self.p + i] != VarStatus::Basic {
                tight_removed = true;
            }
        }
        for col in &mut self.cols {
            col.retain_mut(|(i, _)| {
                let to = map[*i];
                *i = to;
                to != NONE
            });
        }
        let mask: Vec<bool> = std::iter::repeat(true).take(self.p).chain(keep.iter().copied()).collect();
        compact(&mut self.lower, &mask);
        compact(&mut self.upper, &mask);
        compact(&mut self.status, &mask);
        compact(&mut self.x, &mask);
        if let Some(shift) = &mut self.shift {
            compact(shift, &mask);
        }
        self.m = next;
        if tight_removed {
            self.rpos = vec![NONE; self.m];
            self.rebuild_sets();
            self.refactor();
        } else {
            // Only basic logicals went, so the kernel is unchanged; renumber
            // its rows in place, since `kinv` follows the order of `kr`.
            self.rpos = vec![NONE; self.m];
            for (s, i) in self.kr.iter_mut().enumerate() {
                *i = map[*i];
                self.rpos[*i] = s;
            }
        }
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(j < self.p, "set_bounds on a logical variable");
        self.lower[j] = lower;
        self.upper[j] = upper;
        self.normalise_nonbasic(j);
    }

    /// Replaces the activity range `lower <= a_i x <= upper` of row `i`.
    pub fn set_row_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        let v = self.p + i;
        self.lower[v] = lower;
        self.upper[v] = upper;
        self.normalise_nonbasic(v);
    }

    pub fn basis(&self) -> Basis {
        Basis {
            num_vars: self.p,
            status: self.status.clone(),
        }
    }

    /// Installs a basis recorded on this program or on a prefix of its rows.
    pub fn load_basis(&mut self, basis: &Basis) -> Result<()> {
        if basis.num_vars != self.p || basis.num_rows() > self.m {
            return Err(Error::Dimension {
                what: "basis",
                expected: self.p + self.m,
                got: basis.status.len(),
            });
        }
        self.status[..basis.status.len()].copy_from_slice(&basis.status);
        for v in basis.status.len()..self.p + self.m {
            self.status[v] = VarStatus::Basic;
        }
        for v in 0..self.p + self.m {
            self.normalise_nonbasic(v);
        }
        self.rebuild_sets();
        self.refactor();
        Ok(())
    }

    /// Structural values, clamped into their bounds.
    pub fn values(&self) -> Vec<f64> {
        (0..self.p).map(|j| self.x[j].clamp(self.lower[j], self.upper[j])).collect()
    }

    pub fn objective_value(&self) -> f64 {
        self.values().iter().zip(&self.objective).map(|(v, c)| v * c).sum()
    }

    pub fn solution(&self) -> LpSolution {
        let values = self.values();
        let objective_value = values.iter().zip(&self.objective).map(|(v, c)| v * c).sum();
        let c = self.phase2_costs();
        let y_min = self.row_duals(&c);
        let mut duals = vec![0.0; self.m];
        for i in 0..self.m {
            let v = self.p + i;
            let y = -y_min[i];
            duals[i] = match self.status[v] {
                VarStatus::Basic => 0.0,
                _ if self.lower[v] == self.upper[v] => y,
                VarStatus::AtUpper => y.max(0.0),
                VarStatus::AtLower => y.min(0.0),
                VarStatus::Free => 0.0,
            };
        }
        let mut reduced_costs = self.objective.clone();
        for (j, d) in reduced_costs.iter_mut().enumerate() {
            for &(i, a) in &self.cols[j] {
                *d -= duals[i] * a;
            }
        }
        LpSolution {
            status: self.last_status,
            values,
            objective_value,
            duals,
            reduced_costs,
            basis: Some(self.basis()),
            iterations: self.iterations,
        }
    }

    pub fn solve(&mut self) -> LpStatus {
        self.iterations = 0;
        self.feas_tol = PRIMAL_TOL;
        let limit = self.iteration_limit.unwrap_or(50 * (self.m + self.p) + 10_000);
        // Adding rows and moving bounds keep the kernel inverse valid, so a
        // warm solve reuses it until the usual refactor schedule kicks in.
        if self.updates >= REFACTOR_EVERY {
            self.refactor();
        }
        for _attempt in 0..3 {
            self.compute_primal();
            if self.max_infeasibility() > self.feas_tol {
                self.flip_boxed_for_dual();
                if self.dual_feasible() {
                    match self.dual(limit) {
                        LpStatus::IterationLimit => return self.finish(LpStatus::IterationLimit),
                        LpStatus::Infeasible => {
                            log::trace!("dual simplex reports infeasibility; confirming with primal");
                        }
                        _ => {}
                    }
                }
            }
            match self.primal(limit) {
                LpStatus::Optimal => {
                    self.compute_primal();
                    if self.verify() {
                        return self.finish(LpStatus::Optimal);
                    }
                    self.refactor();
                    self.compute_primal();
                    if self.verify() {
                        return self.finish(LpStatus::Optimal);
                    }
                    log::debug!("optimal basis failed verification; continuing");
                    self.feas_tol = PRIMAL_TOL * 0.1;
                }
                other => return self.finish(other),
            }
        }
        self.finish(LpStatus::IterationLimit)
    }

    fn finish(&mut self, status: LpStatus) -> LpStatus {
        self.last_status = status;
        status
    }

    // ----- bookkeeping -------------------------------------------------

    fn default_nonbasic(&self, v: usize) -> VarStatus {
        if self.lower[v].is_finite() {
            VarStatus::AtLower
        } else if self.upper[v].is_finite() {
            VarStatus::AtUpper
        } else {
            VarStatus::Free
        }
    }

    fn nonbasic_value(&self, v: usize) -> f64 {
        match self.status[v] {
            VarStatus::AtLower => self.lower[v],
            VarStatus::AtUpper => self.upper[v],
            VarStatus::Free => 0.0,
            VarStatus::Basic => self.x[v],
        }
    }

    fn normalise_nonbasic(&mut self, v: usize) {
        let ok = match self.status[v] {
            VarStatus::Basic => return,
            VarStatus::AtLower => self.lower[v].is_finite(),
            VarStatus::AtUpper => self.upper[v].is_finite(),
            VarStatus::Free => !self.lower[v].is_finite() && !self.upper[v].is_finite(),
        };
        if !ok {
            self.status[v] = self.default_nonbasic(v);
        }
        self.x[v] = self.nonbasic_value(v);
    }

    fn rebuild_sets(&mut self) {
        self.kj.clear();
        self.kr.clear();
        for j in 0..self.p {
            if self.status[j] == VarStatus::Basic {
                self.jpos[j] = self.kj.len();
                self.kj.push(j);
            } else {
                self.jpos[j] = NONE;
            }
        }
        for i in 0..self.m {
            if self.status[self.p + i] != VarStatus::Basic {
                self.rpos[i] = self.kr.len();
                self.kr.push(i);
            } else {
                self.rpos[i] = NONE;
            }
        }
    }

    fn ensure_cap(&mut self, need: usize) {
        if need <= self.cap {
            return;
        }
        let new_cap = need.max(self.cap * 2).max(16).min(self.p.max(need));
        let mut fresh = vec![0.0; new_cap * new_cap];
        let r = self.kj.len();
        for pos in 0..r {
            let src = &self.kinv[pos * self.cap..pos * self.cap + r];
            fresh[pos * new_cap..pos * new_cap + r].copy_from_slice(src);
        }
        self.kinv = fresh;
        self.cap = new_cap;
    }

    #[inline]
    fn mk(&self, pos: usize, s: usize) -> f64 {
        self.kinv[pos * self.cap + s]
    }

    /// Rebuilds `M` from scratch, repairing singular bases by swapping in
    /// logical variables.
    fn refactor(&mut self) {
        for _ in 0..4 {
            let rr = self.kr.len();
            let rc = self.kj.len();
            let width = rc + rr;
            let mut aug = vec![0.0; rr * width];
            for (s, &t) in self.kr.iter().enumerate() {
                for &(j, a) in &self.rows[t] {
                    let pos = self.jpos[j];
                    if pos != NONE {
                        aug[s * width + pos] += a;
                    }
                }
                aug[s * width + rc + s] = 1.0;
            }
            let mut pivot_row = vec![NONE; rc];
            let mut used = vec![false; rr];
            let mut nz = Vec::with_capacity(width);
            for c in 0..rc {
                let mut best = NONE;
                let mut best_abs = SINGULAR_TOL;
                for r in 0..rr {
                    if !used[r] {
                        let v = aug[r * width + c].abs();
                        if v > best_abs {
                            best_abs = v;
                            best = r;
                        }
                    }
                }
                if best == NONE {
                    continue;
                }
                used[best] = true;
                pivot_row[c] = best;
                let inv = 1.0 / aug[best * width + c];
                nz.clear();
                for k in 0..width {
                    let v = &mut aug[best * width + k];
                    if *v != 0.0 {
                        *v *= inv;
                        nz.push(k);
                    }
                }
                for r in 0..rr {
                    if r == best {
                        continue;
                    }
                    let f = aug[r * width + c];
                    if f == 0.0 {
                        continue;
                    }
                    for &k in &nz {
                        aug[r * width + k] -= f * aug[best * width + k];
                    }
                    aug[r * width + c] = 0.0;
                }
            }
            let complete = rr == rc && pivot_row.iter().all(|&r| r != NONE);
            if complete {
                let cap = self.cap.max(rc).max(16).min(self.p.max(rc));
                if cap != self.cap {
                    self.cap = cap;
                    self.kinv = vec![0.0; cap * cap];
                }
                for c in 0..rc {
                    let r = pivot_row[c];
                    for s in 0..rr {
                        self.kinv[c * self.cap + s] = aug[r * width + rc + s];
                    }
                }
                self.updates = 0;
                return;
            }
            let mut dropped = 0;
            for c in 0..rc {
                if pivot_row[c] == NONE {
                    let j = self.kj[c];
                    self.status[j] = self.nearest_bound_status(j);
                    self.x[j] = self.nonbasic_value(j);
                    dropped += 1;
                }
            }
            let mut freed = 0;
            for s in 0..rr {
                if !used[s] {
                    self.status[self.p + self.kr[s]] = VarStatus::Basic;
                    freed += 1;
                }
            }
            log::debug!("basis repair: {dropped} structural(s) out, {freed} logical(s) in");
            self.rebuild_sets();
        }
        // Repeated repair failures only happen on pathological data; fall back
        // to the all-logical basis, which is always nonsingular.
        for j in 0..self.p {
            if self.status[j] == VarStatus::Basic {
                self.status[j] = self.nearest_bound_status(j);
                self.x[j] = self.nonbasic_value(j);
            }
        }
        for i in 0..self.m {
            self.status[self.p + i] = VarStatus::Basic;
        }
        self.rebuild_sets();
        self.updates = 0;
    }

    fn nearest_bound_status(&self, j: usize) -> VarStatus {
        let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if (v - l).abs() <= (u - v).abs() {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                }
            }
            (true, false) => VarStatus::AtLower,
            (false, true) => VarStatus::AtUpper,
            (false, false) => VarStatus::Free,
        }
    }

    // ----- linear algebra ---------------------------------------------

    fn compute_primal(&mut self) {
        let r = self.kr.len();
        let mut rhs = vec![0.0; r];
        for (s, &t) in self.kr.iter().enumerate() {
            let mut v = self.x[self.p + t];
            for &(j, a) in &self.rows[t] {
                if self.jpos[j] == NONE {
                    v -= a * self.x[j];
                }
            }
            rhs[s] = v;
        }
        for pos in 0..r {
            let row = &self.kinv[pos * self.cap..pos * self.cap + r];
            self.x[self.kj[pos]] = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
        for i in 0..self.m {
            if self.rpos[i] == NONE {
                self.x[self.p + i] = self.rows[i].iter().map(|&(j, a)| a * self.x[j]).sum();
            }
        }
    }

    fn violation(&self, v: usize) -> f64 {
        (self.lower[v] - self.x[v]).max(self.x[v] - self.upper[v]).max(0.0)
    }

    fn max_infeasibility(&self) -> f64 {
        let s = self.kj.iter().map(|&j| self.violation(j)).fold(0.0, f64::max);
        (0..self.m)
            .filter(|&i| self.rpos[i] == NONE)
            .map(|i| self.violation(self.p + i))
            .fold(s, f64::max)
    }

    fn phase2_costs(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.p + self.m];
        for j in 0..self.p {
            c[j] = -self.objective[j];
        }
        if let Some(shift) = &self.shift {
            for (c, s) in c.iter_mut().zip(shift) {
                *c += s;
            }
        }
        c
    }

    /// Pushes every nonbasic reduced cost further into its feasible side by a
    /// small, index-dependent amount so dual ratio tests rarely tie.
    fn perturb_costs(&mut self) {
        let mut shift = vec![0.0; self.p + self.m];
        for (v, s) in shift.iter_mut().enumerate() {
            let scale = if v < self.p { 1.0 + self.objective[v].abs() } else { 1.0 };
            // Weyl sequence in [0, 1): deterministic and well spread.
            let frac = ((v as f64 + 1.0) * 0.618_033_988_749_894_9).fract();
            let eps = DUAL_PERTURBATION * (1.0 + frac) * scale;
            *s = match self.status[v] {
                VarStatus::AtLower => eps,
                VarStatus::AtUpper => -eps,
                _ => 0.0,
            };
        }
        self.shift = Some(shift);
    }

    /// Phase-one costs on infeasible basic variables, or `None` if the basis
    /// is primal feasible.
    fn phase1_costs(&self) -> Option<Vec<f64>> {
        let tol = self.feas_tol;
        let mut c = vec![0.0; self.p + self.m];
        let mut any = false;
        let basics = self.kj.iter().copied().chain((0..self.m).filter(|&i| self.rpos[i] == NONE).map(|i| self.p + i));
        for v in basics {
            if self.x[v] < self.lower[v] - tol {
                c[v] = -1.0;
                any = true;
            } else if self.x[v] > self.upper[v] + tol {
                c[v] = 1.0;
                any = true;
            }
        }
        any.then_some(c)
    }

    /// Row multipliers for minimisation costs `c`: `yᵀB = c_B`.
    fn row_duals(&self, c: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.m];
        for i in 0..self.m {
            if self.rpos[i] == NONE {
                y[i] = -c[self.p + i];
            }
        }
        let r = self.kr.len();
        let mut yr = vec![0.0; r];
        for pos in 0..r {
            let j = self.kj[pos];
            let mut g = c[j];
            for &(i, a) in &self.cols[j] {
                if self.rpos[i] == NONE {
                    g -= y[i] * a;
                }
            }
            if g != 0.0 {
                let row = &self.kinv[pos * self.cap..pos * self.cap + r];
                for (acc, m) in yr.iter_mut().zip(row) {
                    *acc += g * m;
                }
            }
        }
        for (s, &t) in self.kr.iter().enumerate() {
            y[t] = yr[s];
        }
        y
    }

    fn reduced_cost(&self, v: usize, c: &[f64], y: &[f64]) -> f64 {
        if v < self.p {
            c[v] - self.cols[v].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
        } else {
            c[v] + y[v - self.p]
        }
    }

    /// `B⁻¹ a_q`, split into the part on basic structurals (by `J` position)
    /// and the part on basic logicals (by row, zero on tight rows).
    fn ftran(&self, q: usize) -> (Vec<f64>, Vec<f64>) {
        let r = self.kr.len();
        let mut zj = vec![0.0; r];
        if q < self.p {
            for &(i, a) in &self.cols[q] {
                let s = self.rpos[i];
                if s != NONE {
                    for (pos, z) in zj.iter_mut().enumerate() {
                        *z += self.mk(pos, s) * a;
                    }
                }
            }
        } else {
            let s = self.rpos[q - self.p];
            debug_assert!(s != NONE);
            for (pos, z) in zj.iter_mut().enumerate() {
                *z = -self.mk(pos, s);
            }
        }
        let mut zs = vec![0.0; self.m];
        for (pos, &z) in zj.iter().enumerate() {
            if z != 0.0 {
                for &(i, a) in &self.cols[self.kj[pos]] {
                    zs[i] += a * z;
                }
            }
        }
        if q < self.p {
            for &(i, a) in &self.cols[q] {
                zs[i] -= a;
            }
        }
        for &t in &self.kr {
            zs[t] = 0.0;
        }
        (zj, zs)
    }

    /// `A[i, J] M` for a row `i` outside the kernel.
    fn row_times_kernel(&self, i: usize) -> Vec<f64> {
        let r = self.kr.len();
        let mut rho = vec![0.0; r];
        for &(j, a) in &self.rows[i] {
            let pos = self.jpos[j];
            if pos != NONE {
                let row = &self.kinv[pos * self.cap..pos * self.cap + r];
                for (acc, m) in rho.iter_mut().zip(row) {
                    *acc += a * m;
                }
            }
        }
        rho
    }

    /// Entries `(e_bᵀ B⁻¹) a_v` of the tableau row of basic variable `b`,
    /// returned as a closure-free pair used by [`Self::tableau_entry`].
    fn tableau_row(&self, b: usize) -> (Vec<f64>, Option<usize>) {
        if b < self.p {
            let pos = self.jpos[b];
            let r = self.kr.len();
            (self.kinv[pos * self.cap..pos * self.cap + r].to_vec(), None)
        } else {
            let i = b - self.p;
            (self.row_times_kernel(i), Some(i))
        }
    }

    fn tableau_entry(&self, rho: &[f64], slack_row: Option<usize>, v: usize) -> f64 {
        if v < self.p {
            let mut a = 0.0;
            for &(i, c) in &self.cols[v] {
                let s = self.rpos[i];
                if s != NONE {
                    a += rho[s] * c;
                } else if Some(i) == slack_row {
                    a -= c;
                }
            }
            a
        } else {
            let s = self.rpos[v - self.p];
            -rho[s]
        }
    }

    /// Replaces basic `leave.var` by `q` and updates `M`.
    fn pivot(&mut self, q: usize, leave: &Leaving, zj: &[f64], zs: &[f64]) {
        let b = leave.var;
        let r = self.kr.len();
        let cap = self.cap;
        match (q < self.p, b < self.p) {
            (true, true) => {
                let pp = self.jpos[b];
                let piv = zj[pp];
                let inv = 1.0 / piv;
                for s in 0..r {
                    self.kinv[pp * cap + s] *= inv;
                }
                for pos in 0..r {
                    let f = zj[pos];
                    if pos == pp || f == 0.0 {
                        continue;
                    }
                    for s in 0..r {
                        self.kinv[pos * cap + s] -= f * self.kinv[pp * cap + s];
                    }
                }
                self.kj[pp] = q;
                self.jpos[q] = pp;
                self.jpos[b] = NONE;
            }
            (true, false) => {
                let i = b - self.p;
                let rho = self.row_times_kernel(i);
                let sigma = -zs[i];
                self.ensure_cap(r + 1);
                let cap = self.cap;
                for pos in 0..r {
                    let f = zj[pos] / sigma;
                    if f != 0.0 {
                        for s in 0..r {
                            self.kinv[pos * cap + s] += f * rho[s];
                        }
                    }
                    self.kinv[pos * cap + r] = -zj[pos] / sigma;
                }
                for s in 0..r {
                    self.kinv[r * cap + s] = -rho[s] / sigma;
                }
                self.kinv[r * cap + r] = 1.0 / sigma;
                self.jpos[q] = r;
                self.kj.push(q);
                self.rpos[i] = r;
                self.kr.push(i);
            }
            (false, true) => {
                let t = q - self.p;
                let ss = self.rpos[t];
                let pp = self.jpos[b];
                let piv = self.kinv[pp * cap + ss];
                for pos in 0..r {
                    if pos == pp {
                        continue;
                    }
                    let f = self.kinv[pos * cap + ss] / piv;
                    if f != 0.0 {
                        for s in 0..r {
                            self.kinv[pos * cap + s] -= f * self.kinv[pp * cap + s];
                        }
                    }
                }
                let last = r - 1;
                if pp != last {
                    for s in 0..r {
                        self.kinv[pp * cap + s] = self.kinv[last * cap + s];
                    }
                    let moved = self.kj[last];
                    self.kj[pp] = moved;
                    self.jpos[moved] = pp;
                }
                self.kj.pop();
                self.jpos[b] = NONE;
                if ss != last {
                    for pos in 0..last {
                        self.kinv[pos * cap + ss] = self.kinv[pos * cap + last];
                    }
                    let moved = self.kr[last];
                    self.kr[ss] = moved;
                    self.rpos[moved] = ss;
                }
                self.kr.pop();
                self.rpos[t] = NONE;
            }
            (false, false) => {
                let t = q - self.p;
                let i = b - self.p;
                let ss = self.rpos[t];
                let mut rho = self.row_times_kernel(i);
                let piv = rho[ss];
                rho[ss] -= 1.0;
                let col: Vec<f64> = (0..r).map(|pos| self.kinv[pos * cap + ss]).collect();
                for pos in 0..r {
                    let f = col[pos] / piv;
                    if f != 0.0 {
                        for s in 0..r {
                            self.kinv[pos * cap + s] -= f * rho[s];
                        }
                    }
                }
                self.kr[ss] = i;
                self.rpos[i] = ss;
                self.rpos[t] = NONE;
            }
        }
        self.status[q] = VarStatus::Basic;
        self.status[b] = leave.target;
        self.x[b] = self.nonbasic_value(b);
        self.updates += 1;
        if leave.pivot.abs() < 1e-7 {
            self.updates = REFACTOR_EVERY;
        }
    }

    // ----- algorithms --------------------------------------------------

    fn basic_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.kj
            .iter()
            .copied()
            .chain((0..self.m).filter(|&i| self.rpos[i] == NONE).map(|i| self.p + i))
    }

    fn primal(&mut self, limit: usize) -> LpStatus {
        let bland_after = 5 * (self.m + self.p);
        let mut local = 0usize;
        loop {
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            if self.updates >= REFACTOR_EVERY {
                self.refactor();
            }
            self.compute_primal();
            let phase1 = self.phase1_costs();
            let is_phase1 = phase1.is_some();
            let c = phase1.unwrap_or_else(|| self.phase2_costs());
            let y = self.row_duals(&c);
            let bland = local >= bland_after;

            let mut entering: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for v in 0..self.p + self.m {
                if self.status[v] == VarStatus::Basic || self.lower[v] == self.upper[v] {
                    continue;
                }
                let d = self.reduced_cost(v, &c, &y);
                let dir = match self.status[v] {
                    VarStatus::AtLower if d < -DUAL_TOL => 1.0,
                    VarStatus::AtUpper if d > DUAL_TOL => -1.0,
                    VarStatus::Free if d.abs() > DUAL_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((v, dir));
                    break;
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    entering = Some((v, dir));
                }
            }
            let Some((q, dir)) = entering else {
                if is_phase1 {
                    let infeas = self.max_infeasibility();
                    if infeas <= ROW_TOL && self.feas_tol < ROW_TOL {
                        self.feas_tol = ROW_TOL;
                        continue;
                    }
                    return LpStatus::Infeasible;
                }
                return LpStatus::Optimal;
            };

            let (zj, zs) = self.ftran(q);
            let leave = self.primal_ratio(dir, &zj, &zs, is_phase1, bland);
            let span = self.upper[q] - self.lower[q];
            self.iterations += 1;
            local += 1;
            match leave {
                Some((step, l)) if step < span => self.pivot(q, &l, &zj, &zs),
                _ if span.is_finite() => {
                    self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.x[q] = self.nonbasic_value(q);
                }
                None if is_phase1 => {
                    log::debug!("phase one found no blocking variable; refactoring");
                    self.refactor();
                }
                None => return LpStatus::Unbounded,
                Some((_, l)) => self.pivot(q, &l, &zj, &zs),
            }
        }
    }

    fn primal_ratio(&self, dir: f64, zj: &[f64], zs: &[f64], phase1: bool, bland: bool) -> Option<(f64, Leaving)> {
        let tol = self.feas_tol;
        let mut cands: Vec<(usize, f64, f64, VarStatus)> = Vec::new();
        for b in self.basic_vars() {
            let z = if b < self.p { zj[self.jpos[b]] } else { zs[b - self.p] };
            if z.abs() <= PIVOT_TOL {
                continue;
            }
            let rate = -dir * z;
            let (xb, lb, ub) = (self.x[b], self.lower[b], self.upper[b]);
            let (dist, target) = if rate > 0.0 {
                if phase1 && xb < lb - tol {
                    (lb - xb, VarStatus::AtLower)
                } else if phase1 && xb > ub + tol {
                    continue;
                } else if ub.is_finite() {
                    ((ub - xb).max(0.0), VarStatus::AtUpper)
                } else {
                    continue;
                }
            } else if phase1 && xb > ub + tol {
                (xb - ub, VarStatus::AtUpper)
            } else if phase1 && xb < lb - tol {
                continue;
            } else if lb.is_finite() {
                ((xb - lb).max(0.0), VarStatus::AtLower)
            } else {
                continue;
            };
            cands.push((b, dist, rate.abs(), target));
        }
        if cands.is_empty() {
            return None;
        }
        let chosen = if bland {
            let mut best = 0;
            for (k, c) in cands.iter().enumerate() {
                let (rb, rk) = (cands[best].1 / cands[best].2, c.1 / c.2);
                if rk < rb || (rk == rb && c.0 < cands[best].0) {
                    best = k;
                }
            }
            best
        } else {
            let theta_max = cands
                .iter()
                .map(|c| (c.1 + tol) / c.2)
                .fold(f64::INFINITY, f64::min);
            let mut best = NONE;
            for (k, c) in cands.iter().enumerate() {
                if c.1 / c.2 <= theta_max && (best == NONE || c.2 > cands[best].2) {
                    best = k;
                }
            }
            best
        };
        let (var, dist, rate, target) = cands[chosen];
        let pivot = if var < self.p { zj[self.jpos[var]] } else { zs[var - self.p] };
        let target = if self.lower[var] == self.upper[var] { VarStatus::AtLower } else { target };
        Some((dist / rate, Leaving { var, target, pivot }))
    }

    /// Moves boxed nonbasic variables to the bound their reduced cost favours.
    fn flip_boxed_for_dual(&mut self) {
        let c = self.phase2_costs();
        let y = self.row_duals(&c);
        for v in 0..self.p + self.m {
            if self.status[v] == VarStatus::Basic || !self.lower[v].is_finite() || !self.upper[v].is_finite() {
                continue;
            }
            let d = self.reduced_cost(v, &c, &y);
            let want = if d < -DUAL_TOL {
                VarStatus::AtUpper
            } else if d > DUAL_TOL {
                VarStatus::AtLower
            } else {
                continue;
            };
            if self.status[v] != want {
                self.status[v] = want;
                self.x[v] = self.nonbasic_value(v);
            }
        }
        self.compute_primal();
    }

    fn dual_feasible(&self) -> bool {
        let c = self.phase2_costs();
        let y = self.row_duals(&c);
        (0..self.p + self.m).all(|v| {
            if self.status[v] == VarStatus::Basic || self.lower[v] == self.upper[v] {
                return true;
            }
            let d = self.reduced_cost(v, &c, &y);
            match self.status[v] {
                VarStatus::AtLower => d >= -DUAL_TOL,
                VarStatus::AtUpper => d <= DUAL_TOL,
                VarStatus::Free => d.abs() <= DUAL_TOL,
                VarStatus::Basic => true,
            }
        })
    }

    fn dual(&mut self, limit: usize) -> LpStatus {
        self.perturb_costs();
        let status = self.dual_loop(limit);
        self.shift = None;
        status
    }

    fn dual_loop(&mut self, limit: usize) -> LpStatus {
        loop {
            if self.iterations >= limit {
                return LpStatus::IterationLimit;
            }
            if self.updates >= REFACTOR_EVERY {
                self.refactor();
            }
            self.compute_primal();
            let mut leaving: Option<(usize, f64, VarStatus)> = None;
            for b in self.basic_vars() {
                let (xb, lb, ub) = (self.x[b], self.lower[b], self.upper[b]);
                let (viol, target) = if xb < lb - self.feas_tol {
                    (lb - xb, VarStatus::AtLower)
                } else if xb > ub + self.feas_tol {
                    (xb - ub, VarStatus::AtUpper)
                } else {
                    continue;
                };
                if leaving.is_none_or(|(_, v, _)| viol > v) {
                    leaving = Some((b, viol, target));
                }
            }
            let Some((b, delta, target)) = leaving else {
                return LpStatus::Optimal;
            };
            let increase = target == VarStatus::AtLower;
            let c = self.phase2_costs();
            let y = self.row_duals(&c);
            let (rho, slack_row) = self.tableau_row(b);

            // (var, reduced-cost slack, |alpha|, span)
            let mut cands: Vec<(usize, f64, f64, f64)> = Vec::new();
            for v in 0..self.p + self.m {
                if self.status[v] == VarStatus::Basic || self.lower[v] == self.upper[v] {
                    continue;
                }
                let alpha = self.tableau_entry(&rho, slack_row, v);
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let move_dir = if increase { -alpha.signum() } else { alpha.signum() };
                let d = self.reduced_cost(v, &c, &y);
                let dd = match self.status[v] {
                    VarStatus::AtLower if move_dir > 0.0 => d.max(0.0),
                    VarStatus::AtUpper if move_dir < 0.0 => (-d).max(0.0),
                    VarStatus::Free => d.abs(),
                    _ => continue,
                };
                cands.push((v, dd, alpha.abs(), self.upper[v] - self.lower[v]));
            }
            if cands.is_empty() {
                return LpStatus::Infeasible;
            }
            // Bound-flipping ratio test: walk the breakpoints in order and flip
            // boxed candidates while the dual objective keeps improving.
            cands.sort_by(|x, y| (x.1 / x.2).total_cmp(&(y.1 / y.2)).then(x.0.cmp(&y.0)));
            let mut slope = delta;
            let mut first = 0;
            while first < cands.len() {
                let (_, _, a, span) = cands[first];
                let after = slope - a * span;
                if !span.is_finite() || after < 0.0 || first + 1 == cands.len() {
                    break;
                }
                slope = after;
                first += 1;
            }
            let rest = &cands[first..];
            let theta_max = rest
                .iter()
                .map(|c| (c.1 + DUAL_TOL) / c.2)
                .fold(f64::INFINITY, f64::min);
            let mut best = NONE;
            for (k, c) in rest.iter().enumerate() {
                if c.1 / c.2 <= theta_max && (best == NONE || c.2 > rest[best].2) {
                    best = k;
                }
            }
            let flips: Vec<usize> = cands[..first].iter().map(|c| c.0).collect();
            let best = first + best;
            let q = cands[best].0;
            let (zj, zs) = self.ftran(q);
            let pivot = if b < self.p { zj[self.jpos[b]] } else { zs[b - self.p] };
            self.iterations += 1;
            if pivot.abs() <= PIVOT_TOL {
                log::debug!("dual simplex pivot mismatch; refactoring");
                self.refactor();
                continue;
            }
            for v in flips {
                self.status[v] = match self.status[v] {
                    VarStatus::AtLower => VarStatus::AtUpper,
                    _ => VarStatus::AtLower,
                };
                self.x[v] = self.nonbasic_value(v);
            }
            let target = if self.lower[b] == self.upper[b] { VarStatus::AtLower } else { target };
            self.pivot(q, &Leaving { var: b, target, pivot }, &zj, &zs);
        }
    }

    fn verify(&mut self) -> bool {
        let values = self.values();
        for j in 0..self.p {
            if (values[j] - self.x[j]).abs() > ROW_TOL {
                return false;
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let act: f64 = row.iter().map(|&(j, a)| a * values[j]).sum();
            let v = self.p + i;
            if act < self.lower[v] - ROW_TOL || act > self.upper[v] + ROW_TOL {
                return false;
            }
        }
        debug_assert!(values
            .iter()
            .enumerate()
            .all(|(j, &v)| v >= self.lower[j] - BOUND_TOL && v <= self.upper[j] + BOUND_TOL));
        true
    }
}

fn compact<T>(v: &mut Vec<T>, mask: &[bool]) {
    let mut keep = mask.iter();
    v.retain(|_| *keep.next().expect("mask covers the vector"));
}
