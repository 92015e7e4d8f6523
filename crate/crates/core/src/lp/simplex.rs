//! Revised primal simplex for bounded variables.
//!
//! Every row gets a logical variable so that `A x + s = b` with `s` boxed by
//! the row relation; the all-logical basis is the starting point. The basis
//! inverse is kept as a dense matrix and updated in product form, exploiting
//! the sparsity of the entering column and pivot row. Phase 1 minimizes the
//! sum of bound violations of the basic variables (composite method), so no
//! artificial columns are needed.

use super::{lagrangian_bound, Certificate, LpError, LpModel, LpSolution, LpStatus, Relation};

const NONBASIC: usize = usize::MAX;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;
const UNIT: [f64; 1] = [1.0];

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Pivots between reinversions of the basis.
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_threshold: usize,
    /// Pivot cap is `iteration_factor * (rows + cols)`.
    pub iteration_factor: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { primal_tol: 1e-9, dual_tol: 1e-9, refactor_interval: 100, stall_threshold: 200, iteration_factor: 50 }
    }
}

pub fn solve_lp(model: &LpModel) -> Result<LpSolution, LpError> {
    solve_lp_with(model, &SimplexOptions::default())
}

pub fn solve_lp_with(model: &LpModel, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    model.check()?;
    let mut simplex = Simplex::new(model, opts.clone());
    let outcome = simplex.run()?;
    let n = simplex.n;
    let iterations = simplex.iterations;
    Ok(match outcome {
        Outcome::Optimal => {
            let values = simplex.x[..n].to_vec();
            let objective = model.objective_value(&values);
            let row_duals = simplex.y.clone();
            let bound = lagrangian_bound(model, &row_duals, opts.dual_tol);
            LpSolution {
                status: LpStatus::Optimal,
                values,
                objective,
                certificate: Certificate::Dual { row_duals, bound },
                iterations,
            }
        }
        Outcome::Infeasible => {
            let ray = simplex.y.clone();
            let gap = super::farkas_gap(model, &ray, opts.dual_tol);
            LpSolution {
                status: LpStatus::Infeasible,
                values: simplex.x[..n].to_vec(),
                objective: f64::INFINITY,
                certificate: Certificate::Farkas { ray, gap },
                iterations,
            }
        }
        Outcome::Unbounded(direction) => LpSolution {
            status: LpStatus::Unbounded,
            values: simplex.x[..n].to_vec(),
            objective: f64::NEG_INFINITY,
            certificate: Certificate::Ray { direction },
            iterations,
        },
    })
}

enum Outcome {
    Optimal,
    Infeasible,
    Unbounded(Vec<f64>),
}

enum PhaseEnd {
    Done,
    Infeasible,
    Unbounded(Vec<f64>),
}

enum Ratio {
    Unbounded,
    Flip,
    Pivot { row: usize, step: f64 },
}

struct Simplex {
    m: usize,
    n: usize,
    opts: SimplexOptions,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    unit_rows: Vec<usize>,
    b: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<usize>,
    binv: Vec<f64>,
    y: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl Simplex {
    fn new(model: &LpModel, opts: SimplexOptions) -> Self {
        let n = model.num_vars();
        let m = model.num_rows();

        let mut counts = vec![0usize; n + 1];
        for row in &model.constraints {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    counts[j + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let mut fill = counts;
        let nnz = col_start[n];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0.0f64; nnz];
        for (i, row) in model.constraints.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    col_row[fill[j]] = i;
                    col_val[fill[j]] = a;
                    fill[j] += 1;
                }
            }
        }
        // merge duplicate entries in a column
        let (col_start, col_row, col_val) = merge_duplicates(n, &col_start, &col_row, &col_val);

        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        for (v, &c) in model.variables.iter().zip(&model.objective) {
            lower.push(v.lower);
            upper.push(v.upper);
            cost.push(c);
        }
        for row in &model.constraints {
            let (l, u) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(l);
            upper.push(u);
            cost.push(0.0);
        }
        let b: Vec<f64> = model.constraints.iter().map(|r| r.rhs).collect();

        let mut x = vec![0.0; n + m];
        for j in 0..n {
            x[j] = resting_value(lower[j], upper[j], 0.0);
        }
        let head: Vec<usize> = (n..n + m).collect();
        let mut pos = vec![NONBASIC; n + m];
        for (i, &j) in head.iter().enumerate() {
            pos[j] = i;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let max_iterations = opts.iteration_factor * (m + n).max(1);
        let mut s = Simplex {
            m,
            n,
            opts,
            col_start,
            col_row,
            col_val,
            unit_rows: (0..m).collect(),
            b,
            lower,
            upper,
            cost,
            x,
            head,
            pos,
            binv,
            y: vec![0.0; m],
            since_refactor: 0,
            iterations: 0,
            max_iterations,
        };
        s.recompute_basic_values();
        s
    }

    fn run(&mut self) -> Result<Outcome, LpError> {
        // A few rounds guard against feasibility lost to round-off during
        // phase 2; each round reinverts before re-checking.
        for _ in 0..4 {
            match self.phase(true)? {
                PhaseEnd::Infeasible => {
                    self.refactor();
                    if self.total_infeasibility() > self.opts.primal_tol {
                        self.compute_phase1_duals();
                        return Ok(Outcome::Infeasible);
                    }
                }
                PhaseEnd::Done => {}
                PhaseEnd::Unbounded(_) => return Err(LpError::NumericalFailure("phase 1 reported unbounded".into())),
            }
            match self.phase(false)? {
                PhaseEnd::Unbounded(ray) => return Ok(Outcome::Unbounded(ray)),
                PhaseEnd::Infeasible => unreachable!("phase 2 never reports infeasible"),
                PhaseEnd::Done => {
                    self.refactor();
                    self.compute_phase2_duals();
                    if self.total_infeasibility() > self.opts.primal_tol {
                        continue;
                    }
                    if self.price(false, false).is_some() {
                        continue;
                    }
                    return Ok(Outcome::Optimal);
                }
            }
        }
        Err(LpError::NumericalFailure("could not stabilize an optimal basis".into()))
    }

    fn phase(&mut self, phase1: bool) -> Result<PhaseEnd, LpError> {
        let mut stall = 0usize;
        let mut bland = false;
        if !phase1 {
            self.compute_phase2_duals();
        }
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::NumericalFailure(format!("iteration limit of {} reached", self.max_iterations)));
            }
            if self.since_refactor >= self.opts.refactor_interval {
                self.refactor();
                if !phase1 {
                    self.compute_phase2_duals();
                }
            }
            if phase1 {
                if self.total_infeasibility() <= self.opts.primal_tol {
                    return Ok(PhaseEnd::Done);
                }
                self.compute_phase1_duals();
            }
            let Some((q, dir, d_q)) = self.price(phase1, bland) else {
                return Ok(if phase1 { PhaseEnd::Infeasible } else { PhaseEnd::Done });
            };
            let alpha = self.ftran(q);
            let ratio = self.ratio_test(q, dir, &alpha, bland);
            let step = match ratio {
                Ratio::Unbounded => {
                    if phase1 {
                        return Ok(PhaseEnd::Unbounded(Vec::new()));
                    }
                    let mut ray = vec![0.0; self.n];
                    if q < self.n {
                        ray[q] = dir;
                    }
                    for (i, &a) in alpha.iter().enumerate() {
                        let j = self.head[i];
                        if j < self.n {
                            ray[j] = -dir * a;
                        }
                    }
                    return Ok(PhaseEnd::Unbounded(ray));
                }
                Ratio::Flip => {
                    let step = self.upper[q] - self.lower[q];
                    self.shift(q, dir, step, &alpha);
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                    step
                }
                Ratio::Pivot { row, step } => {
                    self.shift(q, dir, step, &alpha);
                    let leaving = self.head[row];
                    self.x[leaving] = self.leaving_value(leaving, -dir * alpha[row]);
                    if !phase1 {
                        let f = d_q / alpha[row];
                        let m = self.m;
                        for (yj, &r) in self.y.iter_mut().zip(&self.binv[row * m..(row + 1) * m]) {
                            *yj += f * r;
                        }
                    }
                    self.pivot(row, &alpha);
                    self.pos[leaving] = NONBASIC;
                    self.head[row] = q;
                    self.pos[q] = row;
                    self.since_refactor += 1;
                    step
                }
            };
            self.iterations += 1;
            if step <= 1e-12 {
                stall += 1;
                if stall >= self.opts.stall_threshold {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (rows, vals): (&[usize], &[f64]) = if j < self.n {
            let r = self.col_start[j]..self.col_start[j + 1];
            (&self.col_row[r.clone()], &self.col_val[r])
        } else {
            let i = j - self.n;
            (&self.unit_rows[i..i + 1], &UNIT[..])
        };
        rows.iter().copied().zip(vals.iter().copied())
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        if j >= self.n {
            let c = j - self.n;
            for (i, a) in alpha.iter_mut().enumerate() {
                *a = self.binv[i * m + c];
            }
            return alpha;
        }
        let r = self.col_start[j]..self.col_start[j + 1];
        for k in r {
            let c = self.col_row[k];
            let v = self.col_val[k];
            for (i, a) in alpha.iter_mut().enumerate() {
                let bv = self.binv[i * m + c];
                if bv != 0.0 {
                    *a += bv * v;
                }
            }
        }
        alpha
    }

    fn pivot(&mut self, row: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[row];
        let mut pivot_row: Vec<(usize, f64)> = Vec::new();
        for c in 0..m {
            let v = self.binv[row * m + c];
            if v != 0.0 {
                let nv = v / piv;
                self.binv[row * m + c] = nv;
                pivot_row.push((c, nv));
            }
        }
        for (i, &a) in alpha.iter().enumerate() {
            if i == row || a == 0.0 {
                continue;
            }
            let base = i * m;
            for &(c, v) in &pivot_row {
                let e = &mut self.binv[base + c];
                *e -= a * v;
                if e.abs() < DROP_TOL {
                    *e = 0.0;
                }
            }
        }
    }

    fn shift(&mut self, q: usize, dir: f64, step: f64, alpha: &[f64]) {
        if step == 0.0 {
            return;
        }
        self.x[q] += dir * step;
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let j = self.head[i];
                self.x[j] -= dir * a * step;
            }
        }
    }

    fn leaving_value(&self, j: usize, delta: f64) -> f64 {
        let (l, u, x) = (self.lower[j], self.upper[j], self.x[j]);
        if l == u {
            return l;
        }
        if delta < 0.0 {
            if x > u {
                u
            } else if l.is_finite() {
                l
            } else {
                x
            }
        } else if x < l {
            l
        } else if u.is_finite() {
            u
        } else {
            x
        }
    }

    /// Infeasibility of a basic variable: negative when below lower.
    fn violation(&self, j: usize) -> f64 {
        let x = self.x[j];
        if x < self.lower[j] - self.opts.primal_tol {
            x - self.lower[j]
        } else if x > self.upper[j] + self.opts.primal_tol {
            x - self.upper[j]
        } else {
            0.0
        }
    }

    fn total_infeasibility(&self) -> f64 {
        self.head.iter().map(|&j| self.violation(j).abs()).sum()
    }

    fn compute_phase1_duals(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let v = self.violation(self.head[i]);
            if v == 0.0 {
                continue;
            }
            let c = v.signum();
            for (yj, &bv) in self.y.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                *yj += c * bv;
            }
        }
    }

    fn compute_phase2_duals(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let c = self.cost[self.head[i]];
            if c == 0.0 {
                continue;
            }
            for (yj, &bv) in self.y.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                *yj += c * bv;
            }
        }
    }

    fn reduced_cost(&self, j: usize, phase1: bool) -> f64 {
        let c = if phase1 { 0.0 } else { self.cost[j] };
        c - self.column(j).map(|(i, a)| self.y[i] * a).sum::<f64>()
    }

    /// Entering variable, its direction (+1 increase, -1 decrease) and its
    /// reduced cost.
    fn price(&self, phase1: bool, bland: bool) -> Option<(usize, f64, f64)> {
        let tol = self.opts.dual_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            if self.pos[j] != NONBASIC || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j, phase1);
            let dir = if d < -tol && self.x[j] < self.upper[j] {
                1.0
            } else if d > tol && self.x[j] > self.lower[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir, d));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir, d));
            }
        }
        best
    }

    /// Harris two-pass ratio test; Bland mode uses the textbook minimum
    /// ratio with lowest-index tie breaking.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> Ratio {
        let tol = self.opts.primal_tol;
        let flip = self.upper[q] - self.lower[q];
        // (row, distance to blocking bound, |delta|)
        let mut cands: Vec<(usize, f64, f64)> = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.head[i];
            let delta = -dir * a;
            let (x, l, u) = (self.x[j], self.lower[j], self.upper[j]);
            let target = if delta < 0.0 {
                if x < l - tol {
                    continue;
                } else if x > u + tol {
                    u
                } else {
                    l
                }
            } else if x > u + tol {
                continue;
            } else if x < l - tol {
                l
            } else {
                u
            };
            if !target.is_finite() {
                continue;
            }
            let dist = if delta < 0.0 { x - target } else { target - x };
            cands.push((i, dist, delta.abs()));
        }
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for &(i, dist, mag) in &cands {
                let r = dist.max(0.0) / mag;
                match best {
                    None => best = Some((i, r)),
                    Some((bi, br)) => {
                        if r < br - 1e-12 || (r <= br + 1e-12 && self.head[i] < self.head[bi]) {
                            best = Some((i, r));
                        }
                    }
                }
            }
            return match best {
                Some((_, r)) if flip <= r => Ratio::Flip,
                Some((row, step)) => Ratio::Pivot { row, step },
                None if flip.is_finite() => Ratio::Flip,
                None => Ratio::Unbounded,
            };
        }
        let bound = cands.iter().map(|&(_, dist, mag)| (dist + tol) / mag).fold(f64::INFINITY, f64::min);
        if flip.is_finite() && flip <= bound {
            return Ratio::Flip;
        }
        if cands.is_empty() {
            return Ratio::Unbounded;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for &(i, dist, mag) in &cands {
            let r = dist / mag;
            if r <= bound {
                let better = match best {
                    None => true,
                    Some((_, _, bm)) => mag > bm,
                };
                if better {
                    best = Some((i, r, mag));
                }
            }
        }
        let (row, r, _) = best.expect("Harris pass 2 keeps the minimizer of pass 1");
        Ratio::Pivot { row, step: r.max(0.0) }
    }

    fn recompute_basic_values(&mut self) {
        let m = self.m;
        let mut rhs = self.b.clone();
        for j in 0..self.n + m {
            if self.pos[j] != NONBASIC {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            for (i, a) in self.column(j).collect::<Vec<_>>() {
                rhs[i] -= a * xj;
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            let j = self.head[i];
            self.x[j] = v;
        }
    }

    /// Rebuild the basis inverse from the unit matrix by pivoting the
    /// structural basic columns back in. Columns that turn out dependent are
    /// replaced by logicals.
    fn refactor(&mut self) {
        let m = self.m;
        let n = self.n;
        let target = self.head.clone();
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        let mut row_free = vec![true; m];
        let mut new_head: Vec<usize> = (n..n + m).collect();
        for &j in &target {
            if j >= n {
                row_free[j - n] = false;
            }
        }
        let mut structurals: Vec<usize> = target.iter().copied().filter(|&j| j < n).collect();
        structurals.sort_by_key(|&j| (self.col_start[j + 1] - self.col_start[j], j));
        let mut dropped = Vec::new();
        for j in structurals {
            let alpha = self.ftran(j);
            let mut best: Option<(usize, f64)> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if row_free[i] && a.abs() > best.map_or(PIVOT_TOL, |(_, v)| v) {
                    best = Some((i, a.abs()));
                }
            }
            match best {
                Some((row, _)) => {
                    self.pivot(row, &alpha);
                    new_head[row] = j;
                    row_free[row] = false;
                }
                None => dropped.push(j),
            }
        }
        for p in self.pos.iter_mut() {
            *p = NONBASIC;
        }
        for (i, &j) in new_head.iter().enumerate() {
            self.pos[j] = i;
        }
        for j in dropped {
            self.x[j] = resting_value(self.lower[j], self.upper[j], self.x[j]);
        }
        // logicals that were nonbasic but are not re-admitted stay at bounds
        self.head = new_head;
        self.recompute_basic_values();
        self.since_refactor = 0;
    }
}

fn resting_value(l: f64, u: f64, x: f64) -> f64 {
    match (l.is_finite(), u.is_finite()) {
        (true, true) => {
            if (x - l).abs() <= (u - x).abs() {
                l
            } else {
                u
            }
        }
        (true, false) => l,
        (false, true) => u,
        (false, false) => 0.0,
    }
}

fn merge_duplicates(n: usize, start: &[usize], rows: &[usize], vals: &[f64]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut out_start = vec![0usize; n + 1];
    let mut out_rows = Vec::with_capacity(rows.len());
    let mut out_vals = Vec::with_capacity(vals.len());
    for j in 0..n {
        let mut entries: Vec<(usize, f64)> = (start[j]..start[j + 1]).map(|k| (rows[k], vals[k])).collect();
        entries.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < entries.len() {
            let r = entries[k].0;
            let mut v = 0.0;
            while k < entries.len() && entries[k].0 == r {
                v += entries[k].1;
                k += 1;
            }
            if v != 0.0 {
                out_rows.push(r);
                out_vals.push(v);
            }
        }
        out_start[j + 1] = out_rows.len();
    }
    (out_start, out_rows, out_vals)
}
