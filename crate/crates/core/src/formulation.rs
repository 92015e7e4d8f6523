//! The compact LP relaxation of the slicing problem.
//!
//! One flow variable per (link, service, segment) replaces the per-path
//! variables of the mixed-integer model. Column families, in order:
//!
//! | family | index            | count              | bounds   |
//! |--------|------------------|--------------------|----------|
//! | x      | (k, s, v)        | \|V\| Σ ℓ_k         | [0, 1]   |
//! | y      | v                | \|V\|               | [0, 1]   |
//! | z      | (k, s, link)     | \|L\| Σ (ℓ_k + 1)   | [0, 1]   |
//! | θ      | (k, s)           | Σ (ℓ_k + 1)         | [0, ∞)   |
//!
//! Row families, in order: assignment (Σℓ_k), coupling (\|V\|Σℓ_k), node
//! capacity (\|V\|), link capacity (\|L\|), flow conservation
//! (\|I\|Σ(ℓ_k+1)), segment delay (Σ(ℓ_k+1)) and end-to-end delay (\|K\|).
//!
//! Segment `s` of service `k` runs from the host of function `s` to the host
//! of function `s + 1`; segment 0 starts at the source and segment ℓ_k ends
//! at the destination.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LpModel, Relation};
use crate::model::Problem;

/// Placement variable: function `position` (1-based) of `service` on cloud
/// `cloud`. Ordering is lexicographic in (service, position, cloud).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct XVar {
    pub service: usize,
    pub position: usize,
    pub cloud: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    X(XVar),
    Y(usize),
    Z { service: usize, segment: usize, arc: usize },
    Theta { service: usize, segment: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarIndex {
    clouds: usize,
    arcs: usize,
    chain_lens: Vec<usize>,
    x_offset: Vec<usize>,
    seg_offset: Vec<usize>,
    segments: usize,
    y_base: usize,
    z_base: usize,
    theta_base: usize,
    cols: usize,
}

impl VarIndex {
    pub fn new(problem: &Problem) -> Self {
        let clouds = problem.cloud_count();
        let arcs = problem.topology.arcs.len();
        let chain_lens: Vec<usize> = problem.services.iter().map(|s| s.chain_len()).collect();
        let mut x_offset = Vec::with_capacity(chain_lens.len());
        let mut seg_offset = Vec::with_capacity(chain_lens.len());
        let (mut xs, mut segs) = (0, 0);
        for &len in &chain_lens {
            x_offset.push(xs);
            seg_offset.push(segs);
            xs += len * clouds;
            segs += len + 1;
        }
        let y_base = xs;
        let z_base = y_base + clouds;
        let theta_base = z_base + segs * arcs;
        VarIndex {
            clouds,
            arcs,
            chain_lens,
            x_offset,
            seg_offset,
            segments: segs,
            y_base,
            z_base,
            theta_base,
            cols: theta_base + segs,
        }
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn num_x(&self) -> usize {
        self.y_base
    }

    pub fn x(&self, var: XVar) -> usize {
        debug_assert!(var.position >= 1 && var.position <= self.chain_lens[var.service]);
        debug_assert!(var.cloud < self.clouds);
        self.x_offset[var.service] + (var.position - 1) * self.clouds + var.cloud
    }

    pub fn y(&self, cloud: usize) -> usize {
        self.y_base + cloud
    }

    pub fn z(&self, service: usize, segment: usize, arc: usize) -> usize {
        self.z_base + (self.seg_offset[service] + segment) * self.arcs + arc
    }

    /// The contiguous block of z columns for one segment, indexed by arc.
    pub fn z_block(&self, service: usize, segment: usize) -> std::ops::Range<usize> {
        let start = self.z(service, segment, 0);
        start..start + self.arcs
    }

    pub fn theta(&self, service: usize, segment: usize) -> usize {
        self.theta_base + self.seg_offset[service] + segment
    }

    /// All placement variables in (service, position, cloud) order; the
    /// column of the i-th item is `i`.
    pub fn x_vars(&self) -> impl Iterator<Item = XVar> + '_ {
        self.chain_lens.iter().enumerate().flat_map(move |(service, &len)| {
            (1..=len).flat_map(move |position| (0..self.clouds).map(move |cloud| XVar { service, position, cloud }))
        })
    }

    pub fn contains(&self, var: XVar) -> bool {
        var.service < self.chain_lens.len()
            && var.position >= 1
            && var.position <= self.chain_lens[var.service]
            && var.cloud < self.clouds
    }

    pub fn decode(&self, col: usize) -> Option<Column> {
        if col < self.y_base {
            let service = self.x_offset.partition_point(|&o| o <= col) - 1;
            let rel = col - self.x_offset[service];
            return Some(Column::X(XVar { service, position: rel / self.clouds + 1, cloud: rel % self.clouds }));
        }
        if col < self.z_base {
            return Some(Column::Y(col - self.y_base));
        }
        let seg_of = |g: usize| {
            let service = self.seg_offset.partition_point(|&o| o <= g) - 1;
            (service, g - self.seg_offset[service])
        };
        if col < self.theta_base {
            let rel = col - self.z_base;
            let (service, segment) = seg_of(rel / self.arcs);
            return Some(Column::Z { service, segment, arc: rel % self.arcs });
        }
        if col < self.cols {
            let (service, segment) = seg_of(col - self.theta_base);
            return Some(Column::Theta { service, segment });
        }
        None
    }
}

/// Closed-form `(rows, cols)` of the relaxation.
pub fn relaxation_shape(problem: &Problem) -> (usize, usize) {
    let v = problem.cloud_count();
    let l = problem.topology.arcs.len();
    let i = problem.topology.node_count();
    let k = problem.services.len();
    let positions = problem.total_positions();
    let segments = positions + k;
    let rows = positions + v * positions + v + l + i * segments + segments + k;
    let cols = v * positions + v + l * segments + segments;
    (rows, cols)
}

/// Builds the compact relaxation with the power-plus-delay objective.
pub fn build_relaxation(problem: &Problem) -> (LpModel, VarIndex) {
    let idx = VarIndex::new(problem);
    let topo = &problem.topology;
    let mut m = LpModel::new();
    let cloud = |v: usize| problem.cloud_name(v);
    let svc = |k: usize| problem.services[k].id.as_str();

    for var in idx.x_vars() {
        let col = m.add_var(format!("x({},{},{})", cloud(var.cloud), var.position, svc(var.service)), 0.0, 1.0);
        debug_assert_eq!(col, idx.x(var));
    }
    for v in 0..problem.cloud_count() {
        m.add_var(format!("y({})", cloud(v)), 0.0, 1.0);
    }
    for (k, s) in problem.services.iter().enumerate() {
        for seg in 0..s.segment_count() {
            for arc in &topo.arcs {
                m.add_var(format!("z({}>{},{},{})", topo.names[arc.from], topo.names[arc.to], s.id, seg), 0.0, 1.0);
            }
            debug_assert_eq!(m.num_vars(), idx.z(k, seg, 0) + topo.arcs.len());
        }
    }
    for s in &problem.services {
        for seg in 0..s.segment_count() {
            m.add_var(format!("theta({},{})", s.id, seg), 0.0, f64::INFINITY);
        }
    }
    debug_assert_eq!(m.num_vars(), idx.num_cols());

    let clouds = problem.cloud_count();
    // assignment
    for (k, s) in problem.services.iter().enumerate() {
        for position in 1..=s.chain_len() {
            let row = (0..clouds).map(|cloud| (idx.x(XVar { service: k, position, cloud }), 1.0)).collect();
            m.add_constraint(format!("assign({},{})", s.id, position), row, Relation::Eq, 1.0);
        }
    }
    // coupling x <= y
    for var in idx.x_vars() {
        m.add_constraint(
            format!("couple({},{},{})", cloud(var.cloud), var.position, svc(var.service)),
            vec![(idx.x(var), 1.0), (idx.y(var.cloud), -1.0)],
            Relation::Le,
            0.0,
        );
    }
    // node capacity
    for v in 0..clouds {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (k, s) in problem.services.iter().enumerate() {
            for position in 1..=s.chain_len() {
                row.push((idx.x(XVar { service: k, position, cloud: v }), s.rates[position]));
            }
        }
        row.push((idx.y(v), -problem.topology.cloud_capacity[v]));
        m.add_constraint(format!("nodecap({})", cloud(v)), row, Relation::Le, 0.0);
    }
    // link capacity
    for (a, arc) in topo.arcs.iter().enumerate() {
        let mut row = Vec::new();
        for (k, s) in problem.services.iter().enumerate() {
            for seg in 0..s.segment_count() {
                row.push((idx.z(k, seg, a), s.rates[seg]));
            }
        }
        m.add_constraint(
            format!("linkcap({}>{})", topo.names[arc.from], topo.names[arc.to]),
            row,
            Relation::Le,
            arc.capacity,
        );
    }
    // flow conservation: inflow - outflow - (x_{i,s+1} - x_{i,s}) = anchor
    for (k, s) in problem.services.iter().enumerate() {
        let len = s.chain_len();
        for seg in 0..=len {
            for node in 0..topo.node_count() {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for &a in &topo.in_arcs[node] {
                    row.push((idx.z(k, seg, a), 1.0));
                }
                for &a in &topo.out_arcs[node] {
                    row.push((idx.z(k, seg, a), -1.0));
                }
                if let Some(v) = topo.cloud_of[node] {
                    if seg + 1 <= len {
                        row.push((idx.x(XVar { service: k, position: seg + 1, cloud: v }), -1.0));
                    }
                    if seg >= 1 {
                        row.push((idx.x(XVar { service: k, position: seg, cloud: v }), 1.0));
                    }
                }
                let mut rhs = 0.0;
                if node == s.source && seg == 0 {
                    rhs -= 1.0;
                }
                if node == s.destination && seg == len {
                    rhs += 1.0;
                }
                m.add_constraint(format!("flow({},{},{})", s.id, seg, topo.names[node]), row, Relation::Eq, rhs);
            }
        }
    }
    // segment delay: theta >= sum d z
    for (k, s) in problem.services.iter().enumerate() {
        for seg in 0..s.segment_count() {
            let mut row = vec![(idx.theta(k, seg), 1.0)];
            for (a, arc) in topo.arcs.iter().enumerate() {
                if arc.delay != 0.0 {
                    row.push((idx.z(k, seg, a), -arc.delay));
                }
            }
            m.add_constraint(format!("segdelay({},{})", s.id, seg), row, Relation::Ge, 0.0);
        }
    }
    // end-to-end delay
    for (k, s) in problem.services.iter().enumerate() {
        let mut row = Vec::new();
        for position in 1..=s.chain_len() {
            for v in 0..clouds {
                row.push((idx.x(XVar { service: k, position, cloud: v }), s.nfv_delay[v][position - 1]));
            }
        }
        for seg in 0..s.segment_count() {
            row.push((idx.theta(k, seg), 1.0));
        }
        m.add_constraint(format!("e2e({})", s.id), row, Relation::Le, s.budget);
    }

    // objective: sum y + sigma * sum_k (theta_L + theta_N)
    for v in 0..clouds {
        m.set_cost(idx.y(v), 1.0);
    }
    for (k, s) in problem.services.iter().enumerate() {
        for seg in 0..s.segment_count() {
            m.set_cost(idx.theta(k, seg), problem.sigma);
        }
        for position in 1..=s.chain_len() {
            for v in 0..clouds {
                let col = idx.x(XVar { service: k, position, cloud: v });
                m.set_cost(col, problem.sigma * s.nfv_delay[v][position - 1]);
            }
        }
    }
    (m, idx)
}

#[derive(Debug, Error, PartialEq)]
pub enum FormulationError {
    #[error("{0:?} is already fixed to the opposite value")]
    ConflictingFixing(XVar),
    #[error("{0:?} is not a placement variable of this model")]
    UnknownVariable(XVar),
}

/// Equality fixings `x = 0` or `x = 1` on placement variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixingSet {
    fixed: BTreeMap<XVar, bool>,
}

impl FixingSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `var = value`; fixing an already fixed variable to the other
    /// value is an error.
    pub fn fix(&mut self, var: XVar, value: bool) -> Result<(), FormulationError> {
        match self.fixed.insert(var, value) {
            Some(prev) if prev != value => {
                self.fixed.insert(var, prev);
                Err(FormulationError::ConflictingFixing(var))
            }
            _ => Ok(()),
        }
    }

    /// Replaces whatever fixing `var` had.
    pub fn replace(&mut self, var: XVar, value: bool) {
        self.fixed.insert(var, value);
    }

    pub fn get(&self, var: XVar) -> Option<bool> {
        self.fixed.get(&var).copied()
    }

    pub fn contains(&self, var: XVar) -> bool {
        self.fixed.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (XVar, bool)> + '_ {
        self.fixed.iter().map(|(&v, &b)| (v, b))
    }
}

pub fn apply_fixings(model: &LpModel, index: &VarIndex, fixings: &FixingSet) -> Result<LpModel, FormulationError> {
    let mut out = model.clone();
    for (var, value) in fixings.iter() {
        if !index.contains(var) {
            return Err(FormulationError::UnknownVariable(var));
        }
        let b = if value { 1.0 } else { 0.0 };
        out.set_bounds(index.x(var), b, b);
    }
    Ok(out)
}

/// Fixes every `y` column to the given activation pattern.
pub fn fix_activation(model: &LpModel, index: &VarIndex, active: &[bool]) -> LpModel {
    let mut out = model.clone();
    for (v, &on) in active.iter().enumerate() {
        let b = if on { 1.0 } else { 0.0 };
        out.set_bounds(index.y(v), b, b);
    }
    out
}

/// Replaces the objective by `Σ_k ω_k Σ_s θ(k, s)`.
///
/// Panics if a weight is below 1.
pub fn set_refinement_objective(model: &LpModel, index: &VarIndex, weights: &[f64]) -> LpModel {
    assert_eq!(weights.len(), index.chain_lens.len(), "one weight per service");
    assert!(weights.iter().all(|&w| w >= 1.0), "refinement weights must be >= 1");
    let mut out = model.clone();
    out.objective.iter_mut().for_each(|c| *c = 0.0);
    for (k, &w) in weights.iter().enumerate() {
        for seg in 0..=index.chain_lens[k] {
            out.objective[index.theta(k, seg)] = w;
        }
    }
    out
}
