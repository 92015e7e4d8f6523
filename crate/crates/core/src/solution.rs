//! Solution documents and the end-to-end solve pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::build_relaxation;
use crate::model::{Instance, ModelError, Problem};
use crate::oracle::{exact_solve_counted, OracleLimits, OracleOutcome};
use crate::placement::{
    baseline_round_with, round_placement_with, solve_budget, Direction, PlacementResult, PlacementSolution, TrailStatus,
};
use crate::routing::{refine_routing_with, RefinementConfig, RoutingError, RoutingOutcome, RoutingSolution};

pub const SOLUTION_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lprr,
    LprBaseline,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lprr, Method::LprBaseline, Method::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lprr => "lprr",
            Method::LprBaseline => "lpr_baseline",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown method {0:?}; expected lprr, lpr_baseline or oracle")]
pub struct UnknownMethod(String);

impl FromStr for Method {
    type Err = UnknownMethod;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    /// Proven: no solution exists.
    Infeasible,
    /// The heuristic gave up.
    Failed,
    LimitExceeded,
    /// Numerical trouble or an internal error.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub service: String,
    pub position: usize,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDoc {
    pub nodes: Vec<String>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDoc {
    pub service: String,
    pub segment: usize,
    pub paths: Vec<PathDoc>,
    /// Slowest path delay of the segment.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDelayDoc {
    pub service: String,
    pub delay: f64,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDoc {
    pub segments: Vec<SegmentDoc>,
    pub services: Vec<ServiceDelayDoc>,
    pub weights: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailDoc {
    pub var: AssignmentDoc,
    pub direction: Direction,
    pub status: TrailStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub placement_lp_solves: usize,
    pub placement_lp_budget: usize,
    pub routing_lp_solves: usize,
    pub routing_lp_budget: usize,
    /// Simplex pivots, or search nodes for the oracle.
    pub work: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trail: Vec<TrailDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl SolveStats {
    pub fn within_budgets(&self) -> bool {
        self.placement_lp_solves <= self.placement_lp_budget && self.routing_lp_solves <= self.routing_lp_budget
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub format: u32,
    pub method: Method,
    pub status: SolveStatus,
    pub activated: Vec<String>,
    pub assign: Vec<AssignmentDoc>,
    pub routing: Option<RoutingDoc>,
    /// `Σ y + σ Σ_k θ̄(k)` when a routing is present.
    pub objective: Option<f64>,
    pub stats: SolveStats,
}

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("solution JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported solution format {0}")]
    Format(u32),
}

impl SolutionDoc {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SolutionError> {
        let doc: SolutionDoc = serde_json::from_str(text)?;
        if doc.format != SOLUTION_FORMAT {
            return Err(SolutionError::Format(doc.format));
        }
        Ok(doc)
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

fn assign_docs(problem: &Problem, p: &PlacementSolution) -> Vec<AssignmentDoc> {
    let mut out = Vec::new();
    for (k, hosts) in p.assign.iter().enumerate() {
        for (i, &v) in hosts.iter().enumerate() {
            out.push(AssignmentDoc {
                service: problem.services[k].id.clone(),
                position: i + 1,
                node: problem.cloud_name(v).to_string(),
            });
        }
    }
    out
}

fn routing_doc(problem: &Problem, r: &RoutingSolution) -> RoutingDoc {
    let topo = &problem.topology;
    let mut segments = Vec::new();
    for (k, segs) in r.segments.iter().enumerate() {
        for (s, seg) in segs.iter().enumerate() {
            let paths = seg
                .paths
                .iter()
                .map(|p| PathDoc {
                    nodes: p.nodes.iter().map(|&n| topo.names[n].clone()).collect(),
                    fraction: p.fraction,
                })
                .collect();
            let delay = seg.paths.iter().map(|p| p.delay(topo)).fold(0.0, f64::max);
            segments.push(SegmentDoc { service: problem.services[k].id.clone(), segment: s, paths, delay });
        }
    }
    let services = problem
        .services
        .iter()
        .zip(&r.delays)
        .map(|(s, &d)| ServiceDelayDoc { service: s.id.clone(), delay: d, budget: s.budget })
        .collect();
    RoutingDoc { segments, services, weights: r.weights.clone(), iterations: r.iterations_used }
}

fn objective(problem: &Problem, p: &PlacementSolution, r: &RoutingSolution) -> f64 {
    p.activated.len() as f64 + problem.sigma * r.delays.iter().sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub refinement: RefinementConfig,
    pub oracle_limits: OracleLimits,
}

/// Runs one method end to end. Only an invalid instance is an error; solver
/// trouble is reported through the document status.
pub fn solve_instance(instance: &Instance, method: Method, options: &SolveOptions) -> Result<SolutionDoc, ModelError> {
    let problem = Problem::new(instance)?;
    Ok(solve_problem(&problem, method, options))
}

pub fn solve_problem(problem: &Problem, method: Method, options: &SolveOptions) -> SolutionDoc {
    let mut doc = SolutionDoc {
        format: SOLUTION_FORMAT,
        method,
        status: SolveStatus::Error,
        activated: Vec::new(),
        assign: Vec::new(),
        routing: None,
        objective: None,
        stats: SolveStats {
            placement_lp_budget: solve_budget(problem),
            routing_lp_budget: options.refinement.iter_max,
            ..Default::default()
        },
    };
    let set_placement = |doc: &mut SolutionDoc, p: &PlacementSolution| {
        doc.activated = p.activated.iter().map(|&v| problem.cloud_name(v).to_string()).collect();
        doc.assign = assign_docs(problem, p);
    };
    if method == Method::Oracle {
        doc.stats.placement_lp_budget = 0;
        doc.stats.routing_lp_budget = 0;
        let outcome = exact_solve_counted(problem, &options.oracle_limits).map(|(o, work)| {
            doc.stats.work = work;
            o
        });
        match outcome {
            Err(e) => doc.stats.message = Some(e.to_string()),
            Ok(OracleOutcome::Optimal { objective, placement, routing }) => {
                set_placement(&mut doc, &placement);
                doc.routing = Some(routing_doc(problem, &routing));
                doc.objective = Some(objective);
                doc.status = SolveStatus::Feasible;
            }
            Ok(OracleOutcome::Infeasible) => doc.status = SolveStatus::Infeasible,
            Ok(OracleOutcome::LimitExceeded { reason, .. }) => {
                doc.status = SolveStatus::LimitExceeded;
                doc.stats.message = Some(reason);
            }
        }
        return doc;
    }

    let (base, index) = build_relaxation(problem);
    let placed: PlacementResult = match method {
        Method::Lprr => round_placement_with(problem, &base, &index),
        _ => baseline_round_with(problem, &base, &index),
    };
    doc.stats.placement_lp_solves = placed.lp_solve_count;
    doc.stats.work = placed.pivots as u64;
    doc.stats.trail = placed
        .trail
        .iter()
        .map(|t| TrailDoc {
            var: AssignmentDoc {
                service: problem.services[t.var.service].id.clone(),
                position: t.var.position,
                node: problem.cloud_name(t.var.cloud).to_string(),
            },
            direction: t.direction,
            status: t.status,
        })
        .collect();
    let placement = match &placed.outcome {
        crate::placement::PlacementOutcome::Feasible(p) => p.clone(),
        crate::placement::PlacementOutcome::Failed(reason) => {
            doc.status = if placed.is_numerical_failure() { SolveStatus::Error } else { SolveStatus::Failed };
            doc.stats.message = Some(format!("placement: {reason:?}"));
            return doc;
        }
    };
    set_placement(&mut doc, &placement);
    match refine_routing_with(problem, &base, &index, &placement, &options.refinement) {
        Ok(r) => {
            doc.stats.routing_lp_solves = r.lp_solve_count;
            doc.stats.work += r.pivots as u64;
            let sol = r.solution();
            doc.routing = Some(routing_doc(problem, sol));
            doc.objective = Some(objective(problem, &placement, sol));
            doc.status = match r.outcome {
                RoutingOutcome::Feasible(_) => SolveStatus::Feasible,
                RoutingOutcome::Failed(_) => {
                    doc.stats.message = Some("routing: delay budgets still violated".into());
                    SolveStatus::Failed
                }
            };
        }
        Err(e) => {
            doc.stats.routing_lp_solves = 1;
            doc.status = match e {
                RoutingError::FixedPlacementInfeasible => SolveStatus::Failed,
                RoutingError::InvalidConfig(_) => {
                    doc.stats.routing_lp_solves = 0;
                    SolveStatus::Error
                }
                _ => SolveStatus::Error,
            };
            doc.stats.message = Some(format!("routing: {e}"));
        }
    }
    doc
}
