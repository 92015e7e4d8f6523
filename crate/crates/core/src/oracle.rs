//! Exhaustive solver for tiny instances.
//!
//! Placements are enumerated in lexicographic order of their flattened
//! `(k, s)` host sequence. For each placement that fits node capacities, a
//! depth-first branch and bound picks, per segment, a set of at most `P`
//! simple paths; the segment delay is the slowest chosen path. A small LP over
//! path fractions decides link-capacity feasibility at every node of the tree.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{solve_lp, LpModel, LpStatus, Relation};
use crate::model::{Problem, Topology};
use crate::placement::PlacementSolution;
use crate::routing::{Path, RoutingSolution, SegmentRouting};

const TIE_TOL: f64 = 1e-9;
const CAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleLimits {
    pub max_placements: u64,
    pub max_paths: usize,
    pub time_limit_secs: f64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_placements: 100_000, max_paths: 200, time_limit_secs: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleOutcome {
    Optimal { objective: f64, placement: PlacementSolution, routing: RoutingSolution },
    Infeasible,
    LimitExceeded { reason: String, placements_examined: u64, best_objective: Option<f64> },
}

impl OracleOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { objective, .. } => Some(*objective),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("limits must be positive")]
    InvalidLimits,
}

/// Simple paths `from -> to`, depth first with neighbours in node order.
/// Returns `None` when more than `cap` exist.
pub fn simple_paths(topo: &Topology, from: usize, to: usize, cap: usize) -> Option<Vec<Path>> {
    if from == to {
        return Some(vec![Path { nodes: vec![from], arcs: Vec::new(), fraction: 1.0 }]);
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; topo.node_count()];
    let mut arcs = Vec::new();
    fn dfs(
        topo: &Topology,
        at: usize,
        to: usize,
        cap: usize,
        on_path: &mut [bool],
        arcs: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) -> bool {
        if at == to {
            out.push(arcs.clone());
            return out.len() <= cap;
        }
        on_path[at] = true;
        for &a in &topo.out_arcs[at] {
            let next = topo.arcs[a].to;
            if on_path[next] {
                continue;
            }
            arcs.push(a);
            let ok = dfs(topo, next, to, cap, on_path, arcs, out);
            arcs.pop();
            if !ok {
                return false;
            }
        }
        on_path[at] = false;
        true
    }
    let mut raw = Vec::new();
    if !dfs(topo, from, to, cap, &mut on_path, &mut arcs, &mut raw) {
        return None;
    }
    for arcs in raw {
        let nodes = std::iter::once(from).chain(arcs.iter().map(|&a| topo.arcs[a].to)).collect();
        out.push(Path { nodes, arcs, fraction: 1.0 });
    }
    Some(out)
}

/// A candidate path set for one segment.
struct Choice {
    paths: Vec<usize>,
    max_delay: f64,
}

struct Segment {
    service: usize,
    rate: f64,
    paths: Vec<Path>,
    choices: Vec<Choice>,
}

enum Stop {
    Time,
}

struct Search<'a> {
    problem: &'a Problem,
    segments: Vec<Segment>,
    /// Minimum achievable delay of segments `i..`, per service.
    suffix_min: Vec<Vec<f64>>,
    budget_left: Vec<f64>,
    chosen: Vec<usize>,
    best_cost: f64,
    best: Option<(Vec<usize>, Vec<Vec<f64>>)>,
    deadline: Instant,
    /// Search nodes plus capacity-LP pivots.
    work: u64,
}

impl Search<'_> {
    /// Fractions per chosen path if the current partial choice fits link
    /// capacities.
    fn capacity_feasible(&mut self, depth: usize) -> Option<Vec<Vec<f64>>> {
        let topo = &self.problem.topology;
        let picks: Vec<&Choice> = (0..depth).map(|i| &self.segments[i].choices[self.chosen[i]]).collect();
        if picks.iter().all(|c| c.paths.len() == 1) {
            let mut load = vec![0.0; topo.arcs.len()];
            for (i, c) in picks.iter().enumerate() {
                for &a in &self.segments[i].paths[c.paths[0]].arcs {
                    load[a] += self.segments[i].rate;
                }
            }
            let ok = load.iter().zip(&topo.arcs).all(|(l, a)| *l <= a.capacity + CAP_TOL);
            return ok.then(|| picks.iter().map(|_| vec![1.0]).collect());
        }
        let mut lp = LpModel::new();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); topo.arcs.len()];
        let mut cols = Vec::new();
        for (i, c) in picks.iter().enumerate() {
            let seg = &self.segments[i];
            let vars: Vec<usize> = c.paths.iter().map(|&p| lp.add_var(format!("f{i}_{p}"), 0.0, 1.0)).collect();
            for (&p, &v) in c.paths.iter().zip(&vars) {
                for &a in &seg.paths[p].arcs {
                    rows[a].push((v, seg.rate));
                }
            }
            lp.add_constraint(format!("sum{i}"), vars.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
            cols.push(vars);
        }
        for (a, row) in rows.into_iter().enumerate() {
            if !row.is_empty() {
                lp.add_constraint(format!("cap{a}"), row, Relation::Le, topo.arcs[a].capacity);
            }
        }
        let sol = solve_lp(&lp).ok()?;
        self.work += sol.iterations as u64;
        (sol.status == LpStatus::Optimal)
            .then(|| cols.iter().map(|vs| vs.iter().map(|&v| sol.values[v].clamp(0.0, 1.0)).collect()).collect())
    }

    fn descend(&mut self, depth: usize, cost: f64) -> Result<(), Stop> {
        if Instant::now() > self.deadline {
            return Err(Stop::Time);
        }
        self.work += 1;
        if depth == self.segments.len() {
            if cost < self.best_cost - TIE_TOL {
                if let Some(fr) = self.capacity_feasible(depth) {
                    self.best_cost = cost;
                    self.best = Some((self.chosen.clone(), fr));
                }
            }
            return Ok(());
        }
        let service = self.segments[depth].service;
        let rest: f64 = self.suffix_min[depth + 1].iter().sum();
        for c in 0..self.segments[depth].choices.len() {
            let d = self.segments[depth].choices[c].max_delay;
            if cost + d + rest >= self.best_cost - TIE_TOL {
                break;
            }
            if d + self.suffix_min[depth + 1][service] > self.budget_left[service] + TIE_TOL {
                break;
            }
            self.chosen[depth] = c;
            if depth + 1 < self.segments.len() && self.capacity_feasible(depth + 1).is_none() {
                continue;
            }
            self.budget_left[service] -= d;
            let r = self.descend(depth + 1, cost + d);
            self.budget_left[service] += d;
            r?;
        }
        Ok(())
    }
}

fn path_sets(paths: &[Path], topo: &Topology, p: usize) -> Vec<Choice> {
    let delays: Vec<f64> = paths.iter().map(|q| q.delay(topo)).collect();
    let mut out = Vec::new();
    let mut set = Vec::new();
    fn rec(start: usize, n: usize, p: usize, set: &mut Vec<usize>, delays: &[f64], out: &mut Vec<Choice>) {
        for i in start..n {
            set.push(i);
            let max_delay = set.iter().map(|&j| delays[j]).fold(0.0, f64::max);
            out.push(Choice { paths: set.clone(), max_delay });
            if set.len() < p {
                rec(i + 1, n, p, set, delays, out);
            }
            set.pop();
        }
    }
    rec(0, paths.len(), p, &mut set, &delays, &mut out);
    // stable: equal delays keep enumeration order
    out.sort_by(|a, b| a.max_delay.total_cmp(&b.max_delay));
    out
}

fn placement_at(problem: &Problem, mut code: u64) -> PlacementSolution {
    let v = problem.cloud_count() as u64;
    let mut flat = vec![0usize; problem.total_positions()];
    for slot in flat.iter_mut().rev() {
        *slot = (code % v) as usize;
        code /= v;
    }
    let mut it = flat.into_iter();
    let assign = problem.services.iter().map(|s| it.by_ref().take(s.chain_len()).collect()).collect();
    PlacementSolution::from_assign(assign)
}

/// Minimizes `Σ y + σ Σ_k θ̄(k)` over all placements and path sets with at
/// most `P` paths per segment.
pub fn exact_solve(problem: &Problem, limits: &OracleLimits) -> Result<OracleOutcome, OracleError> {
    exact_solve_counted(problem, limits).map(|(o, _)| o)
}

/// As [`exact_solve`], also returning the work spent (search nodes plus
/// simplex pivots).
pub fn exact_solve_counted(problem: &Problem, limits: &OracleLimits) -> Result<(OracleOutcome, u64), OracleError> {
    let mut work = 0u64;
    let outcome = search_all(problem, limits, &mut work)?;
    Ok((outcome, work))
}

fn search_all(problem: &Problem, limits: &OracleLimits, work: &mut u64) -> Result<OracleOutcome, OracleError> {
    if limits.max_placements == 0 || limits.max_paths == 0 || !(limits.time_limit_secs > 0.0) {
        return Err(OracleError::InvalidLimits);
    }
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(limits.time_limit_secs.min(1e9));
    let topo = &problem.topology;
    let clouds = problem.cloud_count() as u64;
    let positions = problem.total_positions() as u32;
    let total = match clouds.checked_pow(positions) {
        Some(t) if t <= limits.max_placements => t,
        _ => {
            return Ok(OracleOutcome::LimitExceeded {
                reason: format!("{clouds}^{positions} placements exceed the limit"),
                placements_examined: 0,
                best_objective: None,
            })
        }
    };
    let sigma = problem.sigma;
    let mut best: Option<(f64, PlacementSolution, RoutingSolution)> = None;
    let mut path_cache: std::collections::HashMap<(usize, usize), Option<Vec<Path>>> = Default::default();

    for code in 0..total {
        let examined = code;
        let limit_hit = |reason: String, best: &Option<(f64, PlacementSolution, RoutingSolution)>| {
            Ok(OracleOutcome::LimitExceeded {
                reason,
                placements_examined: examined,
                best_objective: best.as_ref().map(|b| b.0),
            })
        };
        if Instant::now() > deadline {
            return limit_hit("time limit".into(), &best);
        }
        let placement = placement_at(problem, code);
        let fits = placement.loads(problem).iter().zip(&topo.cloud_capacity).all(|(l, mu)| *l <= mu + CAP_TOL);
        if !fits {
            continue;
        }
        let nfv: Vec<f64> = placement
            .assign
            .iter()
            .enumerate()
            .map(|(k, hosts)| hosts.iter().enumerate().map(|(i, &v)| problem.services[k].nfv_delay[v][i]).sum())
            .collect();
        let fixed = placement.activated.len() as f64 + sigma * nfv.iter().sum::<f64>();

        let mut segments = Vec::new();
        for (k, svc) in problem.services.iter().enumerate() {
            for s in 0..svc.segment_count() {
                let ends = placement.segment_ends(problem, k, s);
                let paths = path_cache
                    .entry(ends)
                    .or_insert_with(|| simple_paths(topo, ends.0, ends.1, limits.max_paths))
                    .clone();
                let Some(paths) = paths else {
                    return limit_hit(format!("more than {} simple paths", limits.max_paths), &best);
                };
                let choices = path_sets(&paths, topo, problem.path_budget);
                segments.push(Segment { service: k, rate: svc.rates[s], paths, choices });
            }
        }
        if segments.iter().any(|s| s.choices.is_empty()) {
            continue;
        }
        let services = problem.services.len();
        let mut suffix_min = vec![vec![0.0; services]; segments.len() + 1];
        for i in (0..segments.len()).rev() {
            suffix_min[i] = suffix_min[i + 1].clone();
            suffix_min[i][segments[i].service] += segments[i].choices[0].max_delay;
        }
        let budget_left: Vec<f64> = (0..services).map(|k| problem.services[k].budget - nfv[k]).collect();
        if (0..services).any(|k| suffix_min[0][k] > budget_left[k] + TIE_TOL) {
            continue;
        }
        // bound in delay units: total objective = fixed + sigma * delay
        let delay_bound = match &best {
            None => f64::INFINITY,
            Some((obj, ..)) if sigma > 0.0 => (obj - fixed) / sigma,
            Some((obj, ..)) => {
                if fixed < obj - TIE_TOL {
                    f64::INFINITY
                } else {
                    continue;
                }
            }
        };
        if suffix_min[0].iter().sum::<f64>() >= delay_bound - TIE_TOL / sigma.max(TIE_TOL) {
            continue;
        }
        let n = segments.len();
        let mut search = Search {
            problem,
            segments,
            suffix_min,
            budget_left,
            chosen: vec![0; n],
            best_cost: delay_bound,
            best: None,
            deadline,
            work: 0,
        };
        let stopped = search.descend(0, 0.0).is_err();
        *work += search.work;
        if stopped {
            return limit_hit("time limit".into(), &best);
        }
        let Some((chosen, fractions)) = search.best.take() else { continue };

        let mut routing = Vec::with_capacity(services);
        let mut delays = vec![0.0; services];
        let mut i = 0;
        for (k, svc) in problem.services.iter().enumerate() {
            let mut segs = Vec::new();
            for _ in 0..svc.segment_count() {
                let seg = &search.segments[i];
                let paths: Vec<Path> = seg.choices[chosen[i]]
                    .paths
                    .iter()
                    .zip(&fractions[i])
                    .filter(|(_, &f)| f > 1e-12)
                    .map(|(&p, &f)| Path { fraction: f, ..seg.paths[p].clone() })
                    .collect();
                let theta = paths.iter().map(|p| p.delay(topo)).fold(0.0, f64::max);
                delays[k] += theta;
                segs.push(SegmentRouting { paths, theta, cycles_dropped: 0 });
                i += 1;
            }
            delays[k] += nfv[k];
            routing.push(segs);
        }
        let objective = placement.activated.len() as f64 + sigma * delays.iter().sum::<f64>();
        if best.as_ref().is_none_or(|b| objective < b.0 - TIE_TOL) {
            let routing =
                RoutingSolution { segments: routing, delays, weights: vec![1.0; services], iterations_used: 0 };
            best = Some((objective, placement, routing));
        }
    }
    Ok(match best {
        Some((objective, placement, routing)) => OracleOutcome::Optimal { objective, placement, routing },
        None => OracleOutcome::Infeasible,
    })
}
