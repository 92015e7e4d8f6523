//! Iterative LP refinement of the routing under a fixed placement.
//!
//! Each iteration solves the relaxation with every placement and activation
//! variable fixed, weighting segment delays by per-service weights `ω`. The
//! arc flows are decomposed into paths, and each service's true delay is the
//! sum over segments of the slowest used path plus its NFV delays. Services
//! over budget have their weight multiplied by `ρ`.

mod decompose;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decompose::{decompose_flow, Decomposition, DecompositionFailure, Path};

use crate::formulation::{apply_fixings, build_relaxation, fix_activation, set_refinement_objective, VarIndex};
use crate::lp::{solve_lp, LpError, LpModel, LpStatus};
use crate::model::Problem;
use crate::placement::PlacementSolution;

const CAPACITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub rho: f64,
    pub iter_max: usize,
    /// Paths below this fraction are dropped when capacities allow; 0 disables.
    pub prune_threshold: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig { rho: 2.0, iter_max: 5, prune_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRouting {
    pub paths: Vec<Path>,
    /// Segment delay variable from the LP.
    pub theta: f64,
    pub cycles_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingSolution {
    /// `segments[k][s]` for `s` in `0..=ℓ_k`.
    pub segments: Vec<Vec<SegmentRouting>>,
    /// Recomputed end-to-end delay per service.
    pub delays: Vec<f64>,
    pub weights: Vec<f64>,
    pub iterations_used: usize,
}

impl RoutingSolution {
    pub fn violated(&self, problem: &Problem) -> Vec<usize> {
        (0..self.delays.len()).filter(|&k| self.delays[k] > problem.services[k].budget).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RoutingOutcome {
    Feasible(RoutingSolution),
    Failed(RoutingSolution),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingResult {
    pub outcome: RoutingOutcome,
    pub lp_solve_count: usize,
    pub pivots: usize,
}

impl RoutingResult {
    pub fn solution(&self) -> &RoutingSolution {
        match &self.outcome {
            RoutingOutcome::Feasible(s) | RoutingOutcome::Failed(s) => s,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self.outcome, RoutingOutcome::Feasible(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("the placement admits no capacity-feasible routing")]
    FixedPlacementInfeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("segment {segment} of service {service}: {source}")]
    Decomposition { service: usize, segment: usize, source: DecompositionFailure },
    #[error("invalid refinement config: {0}")]
    InvalidConfig(String),
}

/// Sum over segments of the slowest path, plus the NFV delays at the hosts.
pub fn recompute_delay(problem: &Problem, placement: &PlacementSolution, k: usize, segments: &[Vec<Path>]) -> f64 {
    let topo = &problem.topology;
    let link: f64 = segments.iter().map(|paths| paths.iter().map(|p| p.delay(topo)).fold(0.0, f64::max)).sum();
    let nfv: f64 = placement.assign[k].iter().enumerate().map(|(i, &v)| problem.services[k].nfv_delay[v][i]).sum();
    link + nfv
}

/// Aggregated `Σ λ_s(k) · fraction` per arc.
pub fn link_loads(problem: &Problem, segments: &[Vec<SegmentRouting>]) -> Vec<f64> {
    let mut load = vec![0.0; problem.topology.arcs.len()];
    for (k, segs) in segments.iter().enumerate() {
        for (s, seg) in segs.iter().enumerate() {
            let rate = problem.services[k].rates[s];
            for p in &seg.paths {
                for &a in &p.arcs {
                    load[a] += rate * p.fraction;
                }
            }
        }
    }
    load
}

fn within_capacity(problem: &Problem, load: &[f64]) -> bool {
    load.iter().zip(&problem.topology.arcs).all(|(l, a)| *l <= a.capacity + CAPACITY_SLACK)
}

/// Drops paths below `threshold` segment by segment in `(k, s)` order,
/// keeping each pruning only if link capacities still hold.
fn prune(problem: &Problem, segments: &mut [Vec<SegmentRouting>], threshold: f64) {
    for k in 0..segments.len() {
        for s in 0..segments[k].len() {
            let paths = &segments[k][s].paths;
            if !paths.iter().any(|p| p.fraction < threshold) {
                continue;
            }
            let mut kept: Vec<Path> = paths.iter().filter(|p| p.fraction >= threshold).cloned().collect();
            let total: f64 = kept.iter().map(|p| p.fraction).sum();
            if kept.is_empty() || total <= 0.0 {
                continue;
            }
            for p in &mut kept {
                p.fraction /= total;
            }
            let old = std::mem::replace(&mut segments[k][s].paths, kept);
            if !within_capacity(problem, &link_loads(problem, segments)) {
                segments[k][s].paths = old;
            }
        }
    }
}

pub fn refine_routing(
    problem: &Problem,
    placement: &PlacementSolution,
    config: &RefinementConfig,
) -> Result<RoutingResult, RoutingError> {
    let (base, index) = build_relaxation(problem);
    refine_routing_with(problem, &base, &index, placement, config)
}

pub fn refine_routing_with(
    problem: &Problem,
    base: &LpModel,
    index: &VarIndex,
    placement: &PlacementSolution,
    config: &RefinementConfig,
) -> Result<RoutingResult, RoutingError> {
    if !(config.rho > 1.0) || config.iter_max == 0 || !(config.prune_threshold >= 0.0) {
        return Err(RoutingError::InvalidConfig(format!("{config:?}")));
    }
    let clouds = problem.cloud_count();
    let fixed = apply_fixings(base, index, &placement.fixings(clouds)).expect("placement matches the index");
    let fixed = fix_activation(&fixed, index, &placement.activation_mask(clouds));
    let topo = &problem.topology;

    let mut weights = vec![1.0; problem.services.len()];
    let mut pivots = 0;
    let mut last = None;
    for iter in 1..=config.iter_max {
        let sol = solve_lp(&set_refinement_objective(&fixed, index, &weights))?;
        pivots += sol.iterations;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible if iter == 1 => return Err(RoutingError::FixedPlacementInfeasible),
            status => {
                return Err(
                    LpError::NumericalFailure(format!("refinement LP turned {status:?} at iteration {iter}")).into()
                )
            }
        }
        let mut segments = Vec::with_capacity(problem.services.len());
        for (k, svc) in problem.services.iter().enumerate() {
            let mut segs = Vec::with_capacity(svc.segment_count());
            for s in 0..svc.segment_count() {
                let (from, to) = placement.segment_ends(problem, k, s);
                let d = decompose_flow(topo, &sol.values[index.z_block(k, s)], from, to)
                    .map_err(|source| RoutingError::Decomposition { service: k, segment: s, source })?;
                segs.push(SegmentRouting {
                    paths: d.paths,
                    theta: sol.values[index.theta(k, s)],
                    cycles_dropped: d.cycles.len(),
                });
            }
            segments.push(segs);
        }
        if config.prune_threshold > 0.0 {
            prune(problem, &mut segments, config.prune_threshold);
        }
        let delays: Vec<f64> = (0..problem.services.len())
            .map(|k| {
                let paths: Vec<Vec<Path>> = segments[k].iter().map(|s| s.paths.clone()).collect();
                recompute_delay(problem, placement, k, &paths)
            })
            .collect();
        let solution = RoutingSolution { segments, delays, weights: weights.clone(), iterations_used: iter };
        let violated = solution.violated(problem);
        if violated.is_empty() {
            return Ok(RoutingResult { outcome: RoutingOutcome::Feasible(solution), lp_solve_count: iter, pivots });
        }
        for k in violated {
            weights[k] *= config.rho;
        }
        last = Some(solution);
    }
    Ok(RoutingResult {
        outcome: RoutingOutcome::Failed(last.expect("iter_max >= 1")),
        lp_solve_count: config.iter_max,
        pivots,
    })
}
