use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Topology;

/// Arc values at or below this are treated as empty.
const FLOW_EPS: f64 = 1e-12;
/// Largest origin-target mismatch or leftover arc flow tolerated.
const RESIDUAL_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub arcs: Vec<usize>,
    pub fraction: f64,
}

impl Path {
    pub fn delay(&self, topo: &Topology) -> f64 {
        self.arcs.iter().map(|&a| topo.arcs[a].delay).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Decomposition {
    pub paths: Vec<Path>,
    /// Circulations found in the flow; `nodes` starts and ends at the same node.
    pub cycles: Vec<Path>,
}

impl Decomposition {
    pub fn total_fraction(&self) -> f64 {
        self.paths.iter().map(|p| p.fraction).sum()
    }

    /// Per-arc sum of path and cycle fractions.
    pub fn arc_flow(&self, arc_count: usize) -> Vec<f64> {
        let mut flow = vec![0.0; arc_count];
        for p in self.paths.iter().chain(&self.cycles) {
            for &a in &p.arcs {
                flow[a] += p.fraction;
            }
        }
        flow
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionFailure {
    #[error("only {extracted} of one unit reaches the target")]
    ShortFlow { extracted: f64 },
    #[error("flow {flow} on arc {arc} is not part of any path or cycle")]
    Stranded { arc: usize, flow: f64 },
    #[error("arc vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
}

/// Minimum-delay origin-target path over arcs with positive residual flow.
/// Ties go to the lower node index.
fn min_delay_path(topo: &Topology, flow: &[f64], origin: usize, target: usize) -> Option<Vec<usize>> {
    let n = topo.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    dist[origin] = 0.0;
    loop {
        let u = (0..n)
            .filter(|&i| !done[i] && dist[i].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))?;
        if u == target {
            break;
        }
        done[u] = true;
        for &a in &topo.out_arcs[u] {
            let arc = &topo.arcs[a];
            if flow[a] > FLOW_EPS && dist[u] + arc.delay < dist[arc.to] {
                dist[arc.to] = dist[u] + arc.delay;
                via[arc.to] = Some(a);
            }
        }
    }
    let mut arcs = Vec::new();
    let mut at = target;
    while at != origin {
        let a = via[at].expect("reached nodes have a predecessor");
        arcs.push(a);
        at = topo.arcs[a].from;
    }
    arcs.reverse();
    Some(arcs)
}

fn nodes_of(topo: &Topology, start: usize, arcs: &[usize]) -> Vec<usize> {
    std::iter::once(start).chain(arcs.iter().map(|&a| topo.arcs[a].to)).collect()
}

/// Splits a unit origin-target arc flow into paths, extracting the
/// minimum-delay path with positive flow first, and reports leftover
/// circulations as cycles.
pub fn decompose_flow(
    topo: &Topology,
    z: &[f64],
    origin: usize,
    target: usize,
) -> Result<Decomposition, DecompositionFailure> {
    if z.len() != topo.arcs.len() {
        return Err(DecompositionFailure::Length { got: z.len(), expected: topo.arcs.len() });
    }
    let mut flow: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
    let mut out = Decomposition::default();

    if origin == target {
        out.paths.push(Path { nodes: vec![origin], arcs: Vec::new(), fraction: 1.0 });
    } else {
        while let Some(arcs) = min_delay_path(topo, &flow, origin, target) {
            let amount = arcs.iter().map(|&a| flow[a]).fold(f64::INFINITY, f64::min);
            for &a in &arcs {
                flow[a] -= amount;
            }
            out.paths.push(Path { nodes: nodes_of(topo, origin, &arcs), arcs, fraction: amount });
        }
        let extracted = out.total_fraction();
        if (extracted - 1.0).abs() > UNIT_TOL {
            return Err(DecompositionFailure::ShortFlow { extracted });
        }
    }

    // whatever remains should be circulation
    while let Some(start_arc) = (0..flow.len()).find(|&a| flow[a] > FLOW_EPS) {
        let mut seen_at = vec![usize::MAX; topo.node_count()];
        let mut walk: Vec<usize> = vec![start_arc];
        seen_at[topo.arcs[start_arc].from] = 0;
        let cycle = loop {
            let head = topo.arcs[*walk.last().expect("walk is nonempty")].to;
            if seen_at[head] != usize::MAX {
                break walk.split_off(seen_at[head]);
            }
            seen_at[head] = walk.len();
            match topo.out_arcs[head].iter().copied().find(|&a| flow[a] > FLOW_EPS) {
                Some(a) => walk.push(a),
                None => break Vec::new(),
            }
        };
        if cycle.is_empty() {
            // dead end: conservation is broken along this walk
            let worst = walk.iter().copied().max_by(|&a, &b| flow[a].total_cmp(&flow[b])).expect("nonempty");
            if flow[worst] > RESIDUAL_TOL {
                return Err(DecompositionFailure::Stranded { arc: worst, flow: flow[worst] });
            }
            for a in walk {
                flow[a] = 0.0;
            }
            continue;
        }
        let amount = cycle.iter().map(|&a| flow[a]).fold(f64::INFINITY, f64::min);
        for &a in &cycle {
            flow[a] -= amount;
        }
        let start = topo.arcs[cycle[0]].from;
        out.cycles.push(Path { nodes: nodes_of(topo, start, &cycle), arcs: cycle, fraction: amount });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::t1;
    use crate::model::{CloudNode, Link, Network};

    fn topo_t1() -> Topology {
        Topology::new(&t1().network).unwrap()
    }

    fn z_of(topo: &Topology, pairs: &[(&str, &str, f64)]) -> Vec<f64> {
        let mut z = vec![0.0; topo.arcs.len()];
        for &(f, t, v) in pairs {
            z[topo.arc_between(topo.node(f).unwrap(), topo.node(t).unwrap()).unwrap()] = v;
        }
        z
    }

    #[test]
    fn single_unit_path() {
        let topo = topo_t1();
        let z = z_of(&topo, &[("s", "a", 1.0), ("a", "t", 1.0)]);
        let d = decompose_flow(&topo, &z, 0, 3).unwrap();
        assert_eq!(d.paths.len(), 1);
        assert_eq!(d.paths[0].nodes, vec![0, 1, 3]);
        assert_eq!(d.paths[0].fraction, 1.0);
        assert!(d.cycles.is_empty());
    }

    #[test]
    fn even_split_gives_two_half_paths() {
        let topo = topo_t1();
        let z = z_of(&topo, &[("s", "a", 0.5), ("s", "b", 0.5), ("a", "t", 0.5), ("b", "t", 0.5)]);
        let d = decompose_flow(&topo, &z, 0, 3).unwrap();
        let mut got: Vec<(Vec<usize>, f64)> = d.paths.iter().map(|p| (p.nodes.clone(), p.fraction)).collect();
        got.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(got, vec![(vec![0, 1, 3], 0.5), (vec![0, 2, 3], 0.5)]);
    }

    #[test]
    fn isolated_cycle_is_reported() {
        let link = |f: &str, t: &str| Link { from: f.into(), to: t.into(), delay: 1.0, capacity: 10.0 };
        let net = Network {
            nodes: ["s", "a", "t", "u", "w"].map(String::from).to_vec(),
            links: vec![link("s", "a"), link("a", "t"), link("u", "w"), link("w", "u")],
            cloud_nodes: vec![CloudNode { node: "a".into(), capacity: 1.0 }],
        };
        let topo = Topology::new(&net).unwrap();
        let z = z_of(&topo, &[("s", "a", 1.0), ("a", "t", 1.0), ("u", "w", 0.2), ("w", "u", 0.2)]);
        let d = decompose_flow(&topo, &z, 0, 2).unwrap();
        assert_eq!(d.total_fraction(), 1.0);
        assert_eq!(d.cycles.len(), 1);
        assert_eq!(d.cycles[0].nodes, vec![3, 4, 3]);
        assert_eq!(d.cycles[0].fraction, 0.2);
        assert_eq!(d.arc_flow(topo.arcs.len()), z);
    }

    #[test]
    fn zero_length_segment() {
        let topo = topo_t1();
        let d = decompose_flow(&topo, &vec![0.0; 4], 1, 1).unwrap();
        assert_eq!(d.paths, vec![Path { nodes: vec![1], arcs: vec![], fraction: 1.0 }]);
    }

    #[test]
    fn broken_conservation_is_a_failure() {
        let topo = topo_t1();
        let z = z_of(&topo, &[("s", "a", 1.0)]);
        assert!(matches!(decompose_flow(&topo, &z, 0, 3), Err(DecompositionFailure::ShortFlow { .. })));
        let z = z_of(&topo, &[("s", "a", 1.0), ("a", "t", 1.0), ("s", "b", 0.3)]);
        assert!(matches!(decompose_flow(&topo, &z, 0, 3), Err(DecompositionFailure::Stranded { .. })));
    }

    #[test]
    fn shorter_path_is_extracted_first() {
        let mut net = t1().network;
        net.links[1].delay = 5.0; // s->b
        let topo = Topology::new(&net).unwrap();
        let z = z_of(&topo, &[("s", "b", 0.7), ("s", "a", 0.3), ("a", "t", 0.3), ("b", "t", 0.7)]);
        let d = decompose_flow(&topo, &z, 0, 3).unwrap();
        assert_eq!(d.paths[0].nodes, vec![0, 1, 3]);
        assert_eq!(d.paths[1].nodes, vec![0, 2, 3]);
    }
}
