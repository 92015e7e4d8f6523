//! Iterative LP rounding of the placement variables, plus one-shot rounding.

use serde::{Deserialize, Serialize};

use crate::formulation::{apply_fixings, build_relaxation, FixingSet, VarIndex, XVar};
use crate::lp::{solve_lp, LpError, LpModel, LpSolution, LpStatus};
use crate::model::Problem;

/// Values within this distance of 0 or 1 count as integral.
pub const INT_TOL: f64 = 1e-6;
const TIE_TOL: f64 = 1e-9;

/// A binary placement. `assign[k][s - 1]` is the cloud index hosting
/// function `s` of service `k`; `activated` is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementSolution {
    pub assign: Vec<Vec<usize>>,
    pub activated: Vec<usize>,
}

impl PlacementSolution {
    /// Builds the solution from an assignment; activation is derived.
    pub fn from_assign(assign: Vec<Vec<usize>>) -> Self {
        let mut activated: Vec<usize> = assign.iter().flatten().copied().collect();
        activated.sort_unstable();
        activated.dedup();
        PlacementSolution { assign, activated }
    }

    pub fn activation_mask(&self, clouds: usize) -> Vec<bool> {
        let mut mask = vec![false; clouds];
        for &v in &self.activated {
            mask[v] = true;
        }
        mask
    }

    /// Fixings that pin every placement variable to this solution.
    pub fn fixings(&self, clouds: usize) -> FixingSet {
        let mut fs = FixingSet::new();
        for (service, hosts) in self.assign.iter().enumerate() {
            for (i, &host) in hosts.iter().enumerate() {
                for cloud in 0..clouds {
                    fs.replace(XVar { service, position: i + 1, cloud }, cloud == host);
                }
            }
        }
        fs
    }

    /// Endpoint nodes of segment `seg` of service `k`.
    pub fn segment_ends(&self, problem: &Problem, k: usize, seg: usize) -> (usize, usize) {
        let svc = &problem.services[k];
        let clouds = &problem.topology.clouds;
        let from = if seg == 0 { svc.source } else { clouds[self.assign[k][seg - 1]] };
        let to = if seg == svc.chain_len() { svc.destination } else { clouds[self.assign[k][seg]] };
        (from, to)
    }

    /// Per-cloud load `Σ λ_s(k)` over the functions it hosts.
    pub fn loads(&self, problem: &Problem) -> Vec<f64> {
        let mut load = vec![0.0; problem.cloud_count()];
        for (k, hosts) in self.assign.iter().enumerate() {
            for (i, &v) in hosts.iter().enumerate() {
                load[v] += problem.services[k].rates[i + 1];
            }
        }
        load
    }

    fn fits(&self, problem: &Problem) -> bool {
        self.loads(problem).iter().zip(&problem.topology.cloud_capacity).all(|(l, mu)| *l <= mu + 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrailStatus {
    Optimal,
    Infeasible,
    /// The fixing was recorded without a solve of its own.
    NotSolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub var: XVar,
    pub direction: Direction,
    pub status: TrailStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    /// The unfixed relaxation is infeasible.
    RelaxationInfeasible,
    /// The solve following a flip to zero was infeasible.
    InfeasibleAfterFlip,
    /// The final point is fractional or violates node capacities.
    NotPlacementFeasible,
    Numerical(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlacementOutcome {
    Feasible(PlacementSolution),
    Failed(FailReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub outcome: PlacementOutcome,
    pub lp_solve_count: usize,
    pub trail: Vec<TrailEntry>,
    /// Total simplex pivots over all solves.
    pub pivots: usize,
}

impl PlacementResult {
    pub fn solution(&self) -> Option<&PlacementSolution> {
        match &self.outcome {
            PlacementOutcome::Feasible(p) => Some(p),
            PlacementOutcome::Failed(_) => None,
        }
    }

    pub fn is_numerical_failure(&self) -> bool {
        matches!(self.outcome, PlacementOutcome::Failed(FailReason::Numerical(_)))
    }
}

/// `1 + |V| Σ ℓ_k`.
pub fn solve_budget(problem: &Problem) -> usize {
    1 + problem.cloud_count() * problem.total_positions()
}

/// The unfixed variable with the largest strictly fractional value. Ties
/// within 1e-9 go to the smallest `(service, position, cloud)`.
pub fn select_candidate(x_values: &[(XVar, f64)], fixings: &FixingSet) -> Option<XVar> {
    let mut best: Option<(XVar, f64)> = None;
    for &(var, val) in x_values {
        if fixings.contains(var) || val <= INT_TOL || val >= 1.0 - INT_TOL {
            continue;
        }
        best = match best {
            None => Some((var, val)),
            Some((bv, bval)) => {
                if val > bval + TIE_TOL || ((val - bval).abs() <= TIE_TOL && var < bv) {
                    Some((var, val))
                } else {
                    Some((bv, bval))
                }
            }
        };
    }
    best.map(|(v, _)| v)
}

struct Solver<'a> {
    base: &'a LpModel,
    index: &'a VarIndex,
    count: usize,
    pivots: usize,
}

impl Solver<'_> {
    fn solve(&mut self, fixings: &FixingSet) -> Result<LpSolution, LpError> {
        let model = apply_fixings(self.base, self.index, fixings).expect("fixings come from the index");
        self.count += 1;
        let sol = solve_lp(&model)?;
        self.pivots += sol.iterations;
        if sol.status == LpStatus::Unbounded {
            return Err(LpError::NumericalFailure("placement relaxation reported unbounded".into()));
        }
        Ok(sol)
    }
}

fn x_values(index: &VarIndex, values: &[f64]) -> Vec<(XVar, f64)> {
    index.x_vars().map(|v| (v, values[index.x(v)])).collect()
}

/// Thresholds at 0.5; `None` unless every `(k, s)` has exactly one host and
/// every value is within `INT_TOL` of binary.
fn extract(problem: &Problem, xs: &[(XVar, f64)]) -> Option<PlacementSolution> {
    let mut assign: Vec<Vec<Option<usize>>> = problem.services.iter().map(|s| vec![None; s.chain_len()]).collect();
    for &(var, val) in xs {
        if val > INT_TOL && val < 1.0 - INT_TOL {
            return None;
        }
        if val >= 0.5 {
            let slot = &mut assign[var.service][var.position - 1];
            if slot.is_some() {
                return None;
            }
            *slot = Some(var.cloud);
        }
    }
    let assign =
        assign.into_iter().map(|row| row.into_iter().collect::<Option<Vec<_>>>()).collect::<Option<Vec<_>>>()?;
    Some(PlacementSolution::from_assign(assign))
}

/// Iterative LP rounding: fix the largest fractional placement variable to
/// one, re-solve, and flip it to zero when that makes the LP infeasible.
pub fn round_placement(problem: &Problem) -> PlacementResult {
    let (base, index) = build_relaxation(problem);
    round_placement_with(problem, &base, &index)
}

pub fn round_placement_with(problem: &Problem, base: &LpModel, index: &VarIndex) -> PlacementResult {
    let mut solver = Solver { base, index, count: 0, pivots: 0 };
    let mut trail = Vec::new();
    let mut fixings = FixingSet::new();
    let outcome = (|| {
        let first = solver.solve(&fixings).map_err(|e| FailReason::Numerical(e.to_string()))?;
        if first.status != LpStatus::Optimal {
            return Err(FailReason::RelaxationInfeasible);
        }
        let mut xs = x_values(index, &first.values);
        let mut just_flipped = false;
        loop {
            for &(var, val) in &xs {
                if val >= 1.0 - INT_TOL && !fixings.contains(var) {
                    fixings.replace(var, true);
                }
            }
            let Some(cand) = select_candidate(&xs, &fixings) else { break };
            fixings.replace(cand, true);
            let sol = solver.solve(&fixings).map_err(|e| FailReason::Numerical(e.to_string()))?;
            if sol.status == LpStatus::Optimal {
                trail.push(TrailEntry { var: cand, direction: Direction::Up, status: TrailStatus::Optimal });
                xs = x_values(index, &sol.values);
                just_flipped = false;
                continue;
            }
            trail.push(TrailEntry { var: cand, direction: Direction::Up, status: TrailStatus::Infeasible });
            if just_flipped {
                return Err(FailReason::InfeasibleAfterFlip);
            }
            fixings.replace(cand, false);
            trail.push(TrailEntry { var: cand, direction: Direction::Down, status: TrailStatus::NotSolved });
            let pos = xs.iter().position(|(v, _)| *v == cand).expect("candidate is a placement variable");
            xs[pos].1 = 0.0;
            just_flipped = true;
        }
        match extract(problem, &xs) {
            Some(p) if p.fits(problem) => Ok(p),
            _ => Err(FailReason::NotPlacementFeasible),
        }
    })();
    PlacementResult {
        outcome: match outcome {
            Ok(p) => PlacementOutcome::Feasible(p),
            Err(r) => PlacementOutcome::Failed(r),
        },
        lp_solve_count: solver.count,
        trail,
        pivots: solver.pivots,
    }
}

/// One LP solve, then each function goes to its largest-valued cloud.
pub fn baseline_round(problem: &Problem) -> PlacementResult {
    let (base, index) = build_relaxation(problem);
    baseline_round_with(problem, &base, &index)
}

pub fn baseline_round_with(problem: &Problem, base: &LpModel, index: &VarIndex) -> PlacementResult {
    let mut solver = Solver { base, index, count: 0, pivots: 0 };
    let outcome = match solver.solve(&FixingSet::new()) {
        Err(e) => PlacementOutcome::Failed(FailReason::Numerical(e.to_string())),
        Ok(sol) if sol.status != LpStatus::Optimal => PlacementOutcome::Failed(FailReason::RelaxationInfeasible),
        Ok(sol) => {
            let clouds = problem.cloud_count();
            let assign: Vec<Vec<usize>> = problem
                .services
                .iter()
                .enumerate()
                .map(|(service, s)| {
                    (1..=s.chain_len())
                        .map(|position| {
                            let mut best = 0;
                            let val = |cloud| sol.values[index.x(XVar { service, position, cloud })];
                            for cloud in 1..clouds {
                                if val(cloud) > val(best) + TIE_TOL {
                                    best = cloud;
                                }
                            }
                            best
                        })
                        .collect()
                })
                .collect();
            let p = PlacementSolution::from_assign(assign);
            if p.fits(problem) {
                PlacementOutcome::Feasible(p)
            } else {
                PlacementOutcome::Failed(FailReason::NotPlacementFeasible)
            }
        }
    };
    PlacementResult { outcome, lp_solve_count: solver.count, trail: Vec::new(), pivots: solver.pivots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::t1;
    use crate::model::{generate_instance, GeneratorParams};

    fn xv(service: usize, position: usize, cloud: usize) -> XVar {
        XVar { service, position, cloud }
    }

    #[test]
    fn candidate_is_argmax() {
        let xs = [(xv(0, 1, 0), 0.6), (xv(0, 1, 1), 0.4)];
        assert_eq!(select_candidate(&xs, &FixingSet::new()), Some(xv(0, 1, 0)));
    }

    #[test]
    fn integral_values_give_no_candidate() {
        let xs = [(xv(0, 1, 0), 1.0), (xv(0, 1, 1), 0.0)];
        assert_eq!(select_candidate(&xs, &FixingSet::new()), None);
        let near = [(xv(0, 1, 0), 1.0 - 1e-7), (xv(0, 1, 1), 1e-7)];
        assert_eq!(select_candidate(&near, &FixingSet::new()), None);
    }

    #[test]
    fn ties_go_to_the_earlier_variable() {
        let xs = [(xv(0, 1, 1), 0.5), (xv(0, 1, 0), 0.5)];
        assert_eq!(select_candidate(&xs, &FixingSet::new()), Some(xv(0, 1, 0)));
    }

    #[test]
    fn fixed_variables_are_skipped() {
        let xs = [(xv(0, 1, 0), 0.6), (xv(0, 1, 1), 0.4)];
        let mut fs = FixingSet::new();
        fs.fix(xv(0, 1, 0), true).unwrap();
        assert_eq!(select_candidate(&xs, &fs), Some(xv(0, 1, 1)));
    }

    #[test]
    fn t1_rounds_to_a_in_one_solve() {
        let problem = Problem::new(&t1()).unwrap();
        let r = round_placement(&problem);
        let p = r.solution().expect("feasible");
        assert_eq!(p.assign, vec![vec![0]]);
        assert_eq!(p.activated, vec![0]);
        assert_eq!(r.lp_solve_count, 1);
        assert!(r.trail.is_empty());
        assert_eq!(baseline_round(&problem).outcome, r.outcome);
    }

    #[test]
    fn infeasible_relaxation_fails() {
        let mut inst = t1();
        inst.network.cloud_nodes.iter_mut().for_each(|c| c.capacity = 0.4);
        let problem = Problem::new(&inst).unwrap();
        let r = round_placement(&problem);
        assert_eq!(r.outcome, PlacementOutcome::Failed(FailReason::RelaxationInfeasible));
        assert_eq!(r.lp_solve_count, 1);
    }

    #[test]
    fn split_only_relaxation_fails_after_flip() {
        // each cloud holds half the rate: the LP splits 0.5/0.5, no binary fit
        let mut inst = t1();
        inst.network.cloud_nodes.iter_mut().for_each(|c| c.capacity = 0.5);
        let problem = Problem::new(&inst).unwrap();
        let r = round_placement(&problem);
        assert_eq!(r.outcome, PlacementOutcome::Failed(FailReason::InfeasibleAfterFlip));
        assert_eq!(r.lp_solve_count, 3);
        let dirs: Vec<_> = r.trail.iter().map(|t| (t.var.cloud, t.direction, t.status)).collect();
        assert_eq!(
            dirs,
            [
                (0, Direction::Up, TrailStatus::Infeasible),
                (0, Direction::Down, TrailStatus::NotSolved),
                (1, Direction::Up, TrailStatus::Infeasible),
            ]
        );
        assert_eq!(baseline_round(&problem).outcome, PlacementOutcome::Failed(FailReason::NotPlacementFeasible));
    }

    #[test]
    fn generated_runs_respect_budget_and_are_deterministic() {
        for seed in 0..6 {
            let p = GeneratorParams { seed, service_count: 2, ..Default::default() };
            let problem = Problem::new(&generate_instance(&p).unwrap()).unwrap();
            let r = round_placement(&problem);
            assert!(r.lp_solve_count <= solve_budget(&problem));
            assert_eq!(r, round_placement(&problem));
            let b = baseline_round(&problem);
            assert_eq!(b.lp_solve_count, 1);
            if let Some(sol) = r.solution() {
                assert!(sol.fits(&problem));
            }
        }
    }
}
