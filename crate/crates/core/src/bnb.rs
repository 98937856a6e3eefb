//! Best-bound branch and bound over binary design variables.
//!
//! The engine is generic over a [`Master`]: an LP relaxation whose first `n`
//! design columns are the attributes, plus a separation oracle producing
//! globally valid rows. Cuts go into one pool shared by every node and every
//! worker. Each worker keeps the pool rows it has seen in its own LP and
//! drops those that stay slack for a while; dropped rows come back when a
//! later LP point violates them. Node bases name pool rows by pool index,
//! so they survive these changes.
//!
//! Branching uses pseudocosts: every child records how far its first LP
//! bound fell per unit the branched attribute moved, and the attribute with
//! the largest product of expected down and up losses is split.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::lp::{Basis, LinearProgram, LpStatus, Row, Simplex, VarStatus};

pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Node solves a pool row may stay slack before its worker drops it.
const PURGE_AGE: u32 = 8;
/// Purging starts once a worker's LP holds this many pool rows.
const PURGE_MIN_ROWS: usize = 200;
/// Relative violation at which a dropped pool row is reinstated.
const POOL_TOL: f64 = 1e-9;
const NONE: usize = usize::MAX;

pub trait Master: Sync {
    fn num_design(&self) -> usize;

    /// Relaxation with the design columns in `[0, 1]` and any seed cuts.
    fn lp(&self) -> &LinearProgram;

    fn design_column(&self, i: usize) -> usize;

    /// Rows violated by the LP point `x`. `design` is set when the design
    /// columns of `x` are integral.
    fn separate(&self, x: &[f64], design: Option<&[bool]>) -> Vec<Row>;

    /// Exact objective of a design, `None` if it violates `C a <= d`.
    fn evaluate(&self, a: &[bool]) -> Option<f64>;

    /// Rows of the base LP whose range depends on the fixings
    /// (`-1` free, `0`/`1` fixed), as `(row, lower, upper)`.
    fn node_rows(&self, _fixed: &[i8]) -> Vec<(usize, f64, f64)> {
        Vec::new()
    }

    /// Violated rows of an exact formulation kept out of the LP until
    /// needed. Separated to completion at every point, unlike `separate`.
    fn lazy_rows(&self, _x: &[f64]) -> Vec<Row> {
        Vec::new()
    }
}

/// Cap on lazy-row rounds per node; each round adds at least one new row.
const LAZY_ROUNDS: usize = 200;

#[derive(Debug, Clone)]
pub struct EngineParams {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub root_rounds: usize,
    /// Separation rounds at fractional points below the root.
    pub node_rounds: usize,
    pub integer_rounds: usize,
    pub threads: usize,
    /// Designs evaluated before the search starts.
    pub seeds: Vec<Vec<bool>>,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            rel_gap: 1e-6,
            abs_gap: 0.0,
            time_limit: None,
            node_limit: None,
            root_rounds: 30,
            node_rounds: 0,
            integer_rounds: 200,
            threads: 1,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Exhausted,
    TimeLimit,
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct EngineResult {
    pub incumbent: Option<(Vec<bool>, f64)>,
    /// Upper bound on the optimum; `-inf` when no feasible design exists.
    pub best_bound: f64,
    pub root_bound: f64,
    pub nodes: u64,
    pub cuts: usize,
    pub lp_iterations: u64,
    pub outcome: Outcome,
    pub elapsed: Duration,
}

/// Strict "better design" order: larger value, then smaller code
/// `sum_i a_i 2^i`.
pub fn better(a: &[bool], va: f64, b: &[bool], vb: f64) -> bool {
    if va != vb {
        return va > vb;
    }
    for i in (0..a.len()).rev() {
        if a[i] != b[i] {
            return !a[i];
        }
    }
    false
}

struct Node {
    id: u64,
    parent: u64,
    depth: u32,
    bound: f64,
    /// -1 free, 0 or 1 fixed.
    fixed: Vec<i8>,
    basis: Option<Arc<Snapshot>>,
    /// Branching that created the node: attribute, direction, and how far
    /// the parent LP value moved.
    origin: Option<(usize, usize, f64)>,
}

/// A basis with pool rows named by pool index.
struct Snapshot {
    /// Structural and base-row statuses.
    base: Vec<VarStatus>,
    /// Nonbasic logicals of pool rows.
    tight: Vec<(usize, VarStatus)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(self.id.cmp(&other.id))
    }
}

struct Shared {
    queue: BinaryHeap<Node>,
    incumbent: Option<(Vec<bool>, f64)>,
    pool: Vec<Row>,
    closed_bound: f64,
    root_bound: f64,
    active: usize,
    nodes: u64,
    next_id: u64,
    lp_iterations: u64,
    stop: Option<Outcome>,
    /// Per attribute and direction (down, up): summed bound loss per unit
    /// change, and observation count.
    pseudo: Vec<[(f64, u32); 2]>,
}

impl Shared {
    fn record(&mut self, (i, dir, moved): (usize, usize, f64), loss: f64) {
        if moved > INTEGRALITY_TOL {
            let p = &mut self.pseudo[i][dir];
            p.0 += loss.max(0.0) / moved;
            p.1 += 1;
        }
    }

    /// Product score of branching on each candidate `(i, value)`; unseen
    /// directions take the mean over observed ones.
    fn pick(&self, candidates: &[(usize, f64)]) -> usize {
        let mut mean = [0.0; 2];
        for (dir, m) in mean.iter_mut().enumerate() {
            let (sum, cnt) = self
                .pseudo
                .iter()
                .filter(|p| p[dir].1 > 0)
                .fold((0.0, 0), |(s, c), p| (s + p[dir].0 / f64::from(p[dir].1), c + 1));
            *m = if cnt > 0 { sum / f64::from(cnt) } else { 1.0 };
        }
        let cost = |i: usize, dir: usize| {
            let (s, c) = self.pseudo[i][dir];
            if c > 0 {
                s / f64::from(c)
            } else {
                mean[dir]
            }
        };
        let mut best = candidates[0].0;
        let mut best_score = f64::NEG_INFINITY;
        for &(i, v) in candidates {
            let score = (cost(i, 0) * v).max(1e-9) * (cost(i, 1) * (1.0 - v)).max(1e-9);
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    fn offer(&mut self, a: Vec<bool>, v: f64) -> bool {
        let replace = match &self.incumbent {
            None => true,
            Some((b, vb)) => better(&a, v, b, *vb),
        };
        if replace {
            log::debug!(target: "socpd::bnb", "incumbent {v:.12}");
            self.incumbent = Some((a, v));
        }
        replace
    }
}

enum Processed {
    Pruned(f64),
    Infeasible,
    Leaf(f64),
    Branched(Node, Node),
    Requeue(Node),
}

struct Ctx<'a, M: Master> {
    master: &'a M,
    params: &'a EngineParams,
    shared: &'a Mutex<Shared>,
    cv: &'a Condvar,
    start: Instant,
}

impl<M: Master> Ctx<'_, M> {
    fn prunable(&self, bound: f64, incumbent: Option<f64>) -> bool {
        incumbent.is_some_and(|v| bound <= v + (self.params.rel_gap * v.abs()).max(self.params.abs_gap))
    }

    fn incumbent_value(&self) -> Option<f64> {
        self.shared.lock().unwrap().incumbent.as_ref().map(|x| x.1)
    }

    fn offer(&self, a: Vec<bool>, v: f64) {
        self.shared.lock().unwrap().offer(a, v);
    }

    fn timed_out(&self) -> bool {
        self.params.time_limit.is_some_and(|t| self.start.elapsed() >= t)
    }
}

struct Worker {
    lp: Simplex,
    base_rows: usize,
    synced: usize,
    /// Pool index of each LP row past the base rows, and its slack age.
    rows: Vec<usize>,
    age: Vec<u32>,
    /// LP row of each pool row, `NONE` when dropped.
    pos: Vec<usize>,
    last_node: u64,
}

impl Worker {
    fn append(&mut self, id: usize, row: &Row) {
        self.lp.add_row(row).expect("cut rows reference valid columns");
        self.pos.resize(self.pos.len().max(id + 1), NONE);
        self.pos[id] = self.base_rows + self.rows.len();
        self.rows.push(id);
        self.age.push(0);
    }

    /// Publishes `fresh` and adds every pool row this worker has not seen.
    fn sync<M: Master>(&mut self, ctx: &Ctx<M>, fresh: Vec<Row>) {
        let (start, rows): (usize, Vec<Row>) = {
            let mut sh = ctx.shared.lock().unwrap();
            sh.pool.extend(fresh);
            (self.synced, sh.pool[self.synced..].to_vec())
        };
        self.synced += rows.len();
        for (off, r) in rows.iter().enumerate() {
            self.append(start + off, r);
        }
    }

    /// Reinstates dropped pool rows violated at `x`; returns how many.
    fn reinstate<M: Master>(&mut self, ctx: &Ctx<M>, x: &[f64]) -> usize {
        if self.rows.len() == self.synced {
            return 0;
        }
        let back: Vec<(usize, Row)> = {
            let sh = ctx.shared.lock().unwrap();
            (0..self.synced)
                .filter(|&id| self.pos[id] == NONE)
                .filter_map(|id| {
                    let row = &sh.pool[id];
                    let act: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
                    let (l, u) = row.activity_bounds();
                    let tol = POOL_TOL * (1.0 + row.rhs.abs());
                    (act > u + tol || act < l - tol).then(|| (id, row.clone()))
                })
                .collect()
        };
        for (id, row) in &back {
            self.append(*id, row);
        }
        back.len()
    }

    fn snapshot(&self) -> Snapshot {
        let basis = self.lp.basis();
        let split = basis.num_vars + self.base_rows;
        Snapshot {
            base: basis.status[..split].to_vec(),
            tight: self
                .rows
                .iter()
                .enumerate()
                .filter_map(|(r, &id)| {
                    let st = basis.status[split + r];
                    (st != VarStatus::Basic).then_some((id, st))
                })
                .collect(),
        }
    }

    fn restore<M: Master>(&mut self, ctx: &Ctx<M>, snap: &Snapshot) {
        // Rows that were tight in the snapshot must be present, otherwise
        // the basis comes back short and the repair discards much of it.
        let missing: Vec<usize> = snap
            .tight
            .iter()
            .map(|t| t.0)
            .filter(|&id| self.pos.get(id).is_none_or(|&r| r == NONE))
            .collect();
        if !missing.is_empty() {
            let rows: Vec<Row> = {
                let sh = ctx.shared.lock().unwrap();
                missing.iter().map(|&id| sh.pool[id].clone()).collect()
            };
            for (&id, row) in missing.iter().zip(&rows) {
                self.append(id, row);
            }
        }
        let mut status = snap.base.clone();
        status.resize(snap.base.len() + self.rows.len(), VarStatus::Basic);
        for &(id, st) in &snap.tight {
            if let Some(&r) = self.pos.get(id).filter(|&&r| r != NONE) {
                status[snap.base.len() + r - self.base_rows] = st;
            }
        }
        let basis = Basis {
            num_vars: self.lp.num_vars(),
            status,
        };
        self.lp.load_basis(&basis).expect("snapshot fits the worker LP");
    }

    /// Ages pool rows by the current basis and drops the stale ones.
    fn purge(&mut self) {
        let basis = self.lp.basis();
        let split = basis.num_vars + self.base_rows;
        let mut stale = 0;
        for (r, age) in self.age.iter_mut().enumerate() {
            if basis.status[split + r] == VarStatus::Basic {
                *age += 1;
                stale += usize::from(*age > PURGE_AGE);
            } else {
                *age = 0;
            }
        }
        if self.rows.len() < PURGE_MIN_ROWS || stale * 4 < self.rows.len() {
            return;
        }
        let mut keep = vec![true; self.lp.num_rows()];
        let (mut rows, mut age) = (Vec::new(), Vec::new());
        for (r, (&id, &a)) in self.rows.iter().zip(&self.age).enumerate() {
            if a > PURGE_AGE {
                keep[self.base_rows + r] = false;
                self.pos[id] = NONE;
            } else {
                self.pos[id] = self.base_rows + rows.len();
                rows.push(id);
                age.push(a);
            }
        }
        self.rows = rows;
        self.age = age;
        self.lp.remove_rows(&keep);
    }

    fn process<M: Master>(&mut self, ctx: &Ctx<M>, node: Node) -> Processed {
        let master = ctx.master;
        let n = master.num_design();
        if node.fixed.iter().all(|&f| f >= 0) {
            let a: Vec<bool> = node.fixed.iter().map(|&f| f == 1).collect();
            return match master.evaluate(&a) {
                Some(v) => {
                    ctx.offer(a, v);
                    Processed::Leaf(v)
                }
                None => Processed::Infeasible,
            };
        }
        self.sync(ctx, Vec::new());
        for i in 0..n {
            let (l, u) = match node.fixed[i] {
                0 => (0.0, 0.0),
                1 => (1.0, 1.0),
                _ => (0.0, 1.0),
            };
            self.lp.set_bounds(master.design_column(i), l, u);
        }
        for (row, l, u) in master.node_rows(&node.fixed) {
            self.lp.set_row_bounds(row, l, u);
        }
        if node.parent != self.last_node {
            if let Some(b) = &node.basis {
                self.restore(ctx, b);
            }
        }
        self.last_node = node.id;

        let mut kelley = 0;
        let mut int_rounds = 0;
        let mut last_int_bound = f64::INFINITY;
        let mut heuristic_done = false;
        let mut lazy_rounds = 0;
        let mut origin = node.origin;
        loop {
            if ctx.timed_out() {
                return Processed::Requeue(node);
            }
            let status = self.lp.solve();
            ctx.shared.lock().unwrap().lp_iterations += self.lp.iterations() as u64;
            match status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return Processed::Infeasible,
                other => {
                    log::warn!(target: "socpd::bnb", "node {} LP ended with {other:?}; branching blind", node.id);
                    let i = node.fixed.iter().position(|&f| f < 0).expect("free variable");
                    return self.branch(ctx, &node, i, node.bound, 0.0);
                }
            }
            let bound = self.lp.objective_value().min(node.bound);
            if let Some(o) = origin.take() {
                ctx.shared.lock().unwrap().record(o, node.bound - bound);
            }
            if ctx.prunable(bound, ctx.incumbent_value()) {
                return Processed::Pruned(bound);
            }
            let x = self.lp.values();
            if self.reinstate(ctx, &x) > 0 {
                continue;
            }
            if lazy_rounds < LAZY_ROUNDS {
                let rows = master.lazy_rows(&x);
                if !rows.is_empty() {
                    lazy_rounds += 1;
                    self.sync(ctx, rows);
                    continue;
                }
            }
            let rounds = if node.depth == 0 { ctx.params.root_rounds } else { ctx.params.node_rounds };
            if kelley < rounds {
                let cuts = master.separate(&x, None);
                if !cuts.is_empty() {
                    kelley += 1;
                    self.sync(ctx, cuts);
                    continue;
                }
            }
            if !heuristic_done {
                heuristic_done = true;
                if node.depth == 0 {
                    ctx.shared.lock().unwrap().root_bound = bound;
                }
                heuristic(ctx, &x, node.depth == 0);
                if ctx.prunable(bound, ctx.incumbent_value()) {
                    return Processed::Pruned(bound);
                }
            }
            let vals: Vec<f64> = (0..n).map(|i| x[master.design_column(i)]).collect();
            let integral = vals.iter().all(|v| v.min(1.0 - v).abs() <= INTEGRALITY_TOL);
            if integral {
                let a: Vec<bool> = vals.iter().map(|&v| v > 0.5).collect();
                if let Some(v) = master.evaluate(&a) {
                    ctx.offer(a.clone(), v);
                }
                if ctx.prunable(bound, ctx.incumbent_value()) {
                    return Processed::Pruned(bound);
                }
                let progressing = bound < last_int_bound - 1e-13 * bound.abs().max(1.0);
                if int_rounds < ctx.params.integer_rounds && progressing {
                    let cuts = master.separate(&x, Some(&a));
                    if !cuts.is_empty() {
                        int_rounds += 1;
                        last_int_bound = bound;
                        self.sync(ctx, cuts);
                        continue;
                    }
                }
                let i = node.fixed.iter().position(|&f| f < 0).expect("free variable");
                log::trace!(target: "socpd::bnb", "node {} integral but open after {int_rounds} rounds", node.id);
                return self.branch(ctx, &node, i, bound, vals[i]);
            }
            let candidates: Vec<(usize, f64)> = vals
                .iter()
                .enumerate()
                .filter(|&(i, v)| node.fixed[i] < 0 && v.min(1.0 - v) > INTEGRALITY_TOL)
                .map(|(i, &v)| (i, v))
                .collect();
            let best = ctx.shared.lock().unwrap().pick(&candidates);
            return self.branch(ctx, &node, best, bound, vals[best]);
        }
    }

    fn branch<M: Master>(&self, ctx: &Ctx<M>, node: &Node, i: usize, bound: f64, value: f64) -> Processed {
        let basis = Arc::new(self.snapshot());
        let (id0, id1) = {
            let mut sh = ctx.shared.lock().unwrap();
            sh.next_id += 2;
            (sh.next_id - 2, sh.next_id - 1)
        };
        let child = |id: u64, bit: i8| {
            let mut fixed = node.fixed.clone();
            fixed[i] = bit;
            let moved = if bit == 1 { 1.0 - value } else { value };
            Node {
                id,
                parent: node.id,
                depth: node.depth + 1,
                bound,
                fixed,
                basis: Some(basis.clone()),
                origin: Some((i, bit as usize, moved)),
            }
        };
        log::debug!(target: "socpd::bnb", "node {} depth {} bound {bound:.12} branch a{i}={value:.6}", node.id, node.depth);
        // The child in the rounding direction gets the newer id and is popped first.
        if value >= 0.5 {
            Processed::Branched(child(id0, 0), child(id1, 1))
        } else {
            Processed::Branched(child(id0, 1), child(id1, 0))
        }
    }
}

/// First-improvement 1-flip search from `a`; `None` if `a` is infeasible.
fn local_search<M: Master>(master: &M, mut a: Vec<bool>) -> Option<(Vec<bool>, f64)> {
    let mut v = master.evaluate(&a)?;
    for _pass in 0..50 {
        let mut improved = false;
        for i in 0..a.len() {
            a[i] = !a[i];
            match master.evaluate(&a) {
                Some(w) if w > v => {
                    v = w;
                    improved = true;
                }
                _ => a[i] = !a[i],
            }
        }
        if !improved {
            break;
        }
    }
    Some((a, v))
}

/// Rounds the LP point and improves it by local search; at the root the
/// incumbent is polished too.
fn heuristic<M: Master>(ctx: &Ctx<M>, x: &[f64], root: bool) {
    let master = ctx.master;
    let n = master.num_design();
    let mut starts = vec![(0..n).map(|i| x[master.design_column(i)] >= 0.5).collect::<Vec<bool>>()];
    if root {
        if let Some((a, _)) = ctx.shared.lock().unwrap().incumbent.clone() {
            starts.push(a);
        }
    }
    for a in starts {
        if let Some((a, v)) = local_search(master, a) {
            if ctx.incumbent_value().is_none_or(|best| v >= best) {
                ctx.offer(a, v);
            }
        }
    }
}

fn worker_loop<M: Master>(ctx: &Ctx<M>) {
    let mut worker = Worker {
        lp: Simplex::new(ctx.master.lp()).expect("master LP is well formed"),
        base_rows: ctx.master.lp().num_rows(),
        synced: 0,
        rows: Vec::new(),
        age: Vec::new(),
        pos: Vec::new(),
        last_node: u64::MAX,
    };
    loop {
        let node = {
            let mut sh = ctx.shared.lock().unwrap();
            loop {
                if sh.stop.is_none() {
                    if ctx.timed_out() {
                        sh.stop = Some(Outcome::TimeLimit);
                    } else if ctx.params.node_limit.is_some_and(|l| sh.nodes >= l) && !sh.queue.is_empty() {
                        sh.stop = Some(Outcome::NodeLimit);
                    }
                }
                if sh.stop.is_some() {
                    ctx.cv.notify_all();
                    return;
                }
                match sh.queue.pop() {
                    Some(node) => {
                        let inc = sh.incumbent.as_ref().map(|x| x.1);
                        if ctx.prunable(node.bound, inc) {
                            sh.closed_bound = sh.closed_bound.max(node.bound);
                            continue;
                        }
                        sh.active += 1;
                        sh.nodes += 1;
                        break node;
                    }
                    None if sh.active == 0 => {
                        ctx.cv.notify_all();
                        return;
                    }
                    None => sh = ctx.cv.wait(sh).unwrap(),
                }
            }
        };
        let out = worker.process(ctx, node);
        worker.purge();
        let mut sh = ctx.shared.lock().unwrap();
        sh.active -= 1;
        match out {
            Processed::Pruned(b) => sh.closed_bound = sh.closed_bound.max(b),
            Processed::Leaf(v) => sh.closed_bound = sh.closed_bound.max(v),
            Processed::Infeasible => {}
            Processed::Branched(a, b) => {
                sh.queue.push(a);
                sh.queue.push(b);
            }
            Processed::Requeue(node) => {
                sh.queue.push(node);
                sh.stop.get_or_insert(Outcome::TimeLimit);
            }
        }
        ctx.cv.notify_all();
    }
}

pub fn run<M: Master>(master: &M, params: &EngineParams) -> Result<EngineResult> {
    let start = Instant::now();
    let n = master.num_design();
    let mut shared = Shared {
        queue: BinaryHeap::new(),
        incumbent: None,
        pool: Vec::new(),
        closed_bound: f64::NEG_INFINITY,
        root_bound: f64::INFINITY,
        active: 0,
        nodes: 0,
        next_id: 1,
        lp_iterations: 0,
        stop: None,
        pseudo: vec![[(0.0, 0); 2]; n],
    };
    for seed in &params.seeds {
        if seed.len() == n {
            if let Some(v) = master.evaluate(seed) {
                shared.offer(seed.clone(), v);
            }
        }
    }
    shared.queue.push(Node {
        id: 0,
        parent: u64::MAX - 1,
        depth: 0,
        bound: f64::INFINITY,
        fixed: vec![-1; n],
        basis: None,
        origin: None,
    });
    let shared = Mutex::new(shared);
    let cv = Condvar::new();
    let ctx = Ctx {
        master,
        params,
        shared: &shared,
        cv: &cv,
        start,
    };
    let threads = params.threads.max(1);
    if threads == 1 {
        worker_loop(&ctx);
    } else {
        thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| worker_loop(&ctx));
            }
        });
    }
    let sh = shared.into_inner().unwrap();
    let open = sh.queue.iter().map(|nd| nd.bound).fold(f64::NEG_INFINITY, f64::max);
    let inc = sh.incumbent.as_ref().map_or(f64::NEG_INFINITY, |x| x.1);
    let best_bound = sh.closed_bound.max(open).max(inc);
    Ok(EngineResult {
        incumbent: sh.incumbent,
        best_bound,
        root_bound: sh.root_bound,
        nodes: sh.nodes,
        cuts: sh.pool.len(),
        lp_iterations: sh.lp_iterations,
        outcome: sh.stop.unwrap_or(Outcome::Exhausted),
        elapsed: start.elapsed(),
    })
}
