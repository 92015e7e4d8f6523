use std::collections::{BTreeMap, VecDeque};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CloudNode, Instance, Link, Network, Service, Topology};

const MAX_ATTEMPTS: usize = 100;

/// Parameters of the random instance family.
///
/// Topologies are layered: a transit mesh holds the candidate sources, cloud
/// nodes hang off the mesh, and the single destination `d` is attached to
/// every cloud node and nothing else. Each physical edge becomes two links
/// with independently drawn capacities and a shared delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub node_count: usize,
    /// Directed links; must be even.
    pub link_count: usize,
    pub cloud_count: usize,
    pub service_count: usize,
    pub node_cap_range: [u32; 2],
    pub link_cap_range: [u32; 2],
    pub nfv_delay_choices: Vec<u32>,
    pub link_delay_choices: Vec<u32>,
    pub function_pool_size: usize,
    pub sfc_length: usize,
    pub rate_range: [u32; 2],
    pub budget_base: f64,
    pub budget_dist_factor: f64,
    pub budget_slack_range: [f64; 2],
    pub sigma: f64,
    pub path_budget: usize,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            node_count: 20,
            link_count: 76,
            cloud_count: 3,
            service_count: 3,
            node_cap_range: [50, 100],
            link_cap_range: [5, 55],
            nfv_delay_choices: vec![3, 4, 5, 6],
            link_delay_choices: vec![1, 2],
            function_pool_size: 4,
            sfc_length: 3,
            rate_range: [1, 11],
            budget_base: 20.0,
            budget_dist_factor: 3.0,
            budget_slack_range: [0.0, 5.0],
            sigma: 0.001,
            path_budget: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no connected topology found in {0} attempts")]
    GenerationFailed(usize),
}

/// `base + factor * dist + slack`.
pub fn delay_budget(base: f64, factor: f64, dist: f64, slack: f64) -> f64 {
    base + factor * dist + slack
}

impl GeneratorParams {
    fn transit_count(&self) -> usize {
        self.node_count.saturating_sub(self.cloud_count + 1)
    }

    fn check(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::InvalidParams(m.to_string()));
        if self.cloud_count == 0 {
            return bad("cloud_count must be positive");
        }
        if self.transit_count() == 0 {
            return bad("need node_count >= cloud_count + 2");
        }
        if self.link_count % 2 != 0 {
            return bad("link_count must be even");
        }
        let mesh = self.transit_count() + self.cloud_count;
        let extra = (self.link_count / 2).checked_sub(self.cloud_count);
        match extra {
            Some(e) if e + 1 >= mesh && e <= mesh * (mesh - 1) / 2 => {}
            _ => return bad("link_count cannot form a connected simple topology"),
        }
        if self.service_count == 0 || self.sfc_length == 0 || self.function_pool_size == 0 {
            return bad("service_count, sfc_length and function_pool_size must be positive");
        }
        if self.nfv_delay_choices.is_empty() || self.link_delay_choices.is_empty() {
            return bad("delay choice sets must be nonempty");
        }
        for [lo, hi] in [self.node_cap_range, self.link_cap_range, self.rate_range] {
            if lo > hi || lo == 0 {
                return bad("integer ranges must be nonempty and positive");
            }
        }
        let [lo, hi] = self.budget_slack_range;
        if !(lo <= hi) {
            return bad("budget_slack_range must be nonempty");
        }
        if self.path_budget == 0 || !(self.sigma >= 0.0) {
            return bad("path_budget must be positive and sigma nonnegative");
        }
        Ok(())
    }
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

pub fn generate_instance(params: &GeneratorParams) -> Result<Instance, GenerateError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let transit = params.transit_count();
    let clouds = params.cloud_count;
    let mesh = transit + clouds;
    let dest = mesh;
    let n = mesh + 1;

    let mut names: Vec<String> = (1..=transit).map(|i| format!("n{i}")).collect();
    names.extend((1..=clouds).map(|i| format!("c{i}")));
    names.push("d".to_string());

    let pairs: Vec<(usize, usize)> = (0..mesh).flat_map(|u| (u + 1..mesh).map(move |v| (u, v))).collect();
    let extra = params.link_count / 2 - clouds;
    let mut edges = None;
    for _ in 0..MAX_ATTEMPTS {
        let mut picked: Vec<(usize, usize)> =
            sample(&mut rng, pairs.len(), extra).into_iter().map(|i| pairs[i]).collect();
        picked.extend((transit..mesh).map(|c| (c, dest)));
        if connected(n, &picked) {
            picked.sort_unstable();
            edges = Some(picked);
            break;
        }
    }
    let edges = edges.ok_or(GenerateError::GenerationFailed(MAX_ATTEMPTS))?;

    let pick = |rng: &mut ChaCha8Rng, set: &[u32]| set[rng.gen_range(0..set.len())] as f64;
    let in_range = |rng: &mut ChaCha8Rng, [lo, hi]: [u32; 2]| rng.gen_range(lo..=hi) as f64;

    let mut links = Vec::with_capacity(params.link_count);
    for &(u, v) in &edges {
        let delay = pick(&mut rng, &params.link_delay_choices);
        for (a, b) in [(u, v), (v, u)] {
            links.push(Link {
                from: names[a].clone(),
                to: names[b].clone(),
                delay,
                capacity: in_range(&mut rng, params.link_cap_range),
            });
        }
    }
    let cloud_nodes: Vec<CloudNode> = (transit..mesh)
        .map(|c| CloudNode { node: names[c].clone(), capacity: in_range(&mut rng, params.node_cap_range) })
        .collect();
    let network = Network { nodes: names.clone(), links, cloud_nodes };
    let topo = Topology::new(&network).expect("generated names are consistent");

    let mut services = Vec::with_capacity(params.service_count);
    for k in 1..=params.service_count {
        let source = rng.gen_range(0..transit);
        let len = params.sfc_length;
        let sfc = (0..len).map(|_| format!("f{}", rng.gen_range(1..=params.function_pool_size))).collect();
        let rate = in_range(&mut rng, params.rate_range);
        let nfv_delay: BTreeMap<String, Vec<f64>> = network
            .cloud_nodes
            .iter()
            .map(|c| (c.node.clone(), (0..len).map(|_| pick(&mut rng, &params.nfv_delay_choices)).collect()))
            .collect();
        let dist = topo.shortest_delay(source, dest).expect("topology is connected");
        let [lo, hi] = params.budget_slack_range;
        let slack = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        services.push(Service {
            id: format!("k{k}"),
            source: names[source].clone(),
            destination: names[dest].clone(),
            sfc,
            rates: vec![rate; len + 1],
            delay_budget: delay_budget(params.budget_base, params.budget_dist_factor, dist, slack),
            nfv_delay,
        });
    }

    Ok(Instance { network, services, sigma: params.sigma, path_budget: params.path_budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn budget_formula() {
        assert_eq!(delay_budget(20.0, 3.0, 4.0, 2.5), 34.5);
    }

    #[test]
    fn same_seed_same_instance() {
        let p = GeneratorParams { seed: 42, ..Default::default() };
        assert_eq!(generate_instance(&p).unwrap(), generate_instance(&p).unwrap());
        let q = GeneratorParams { seed: 43, ..Default::default() };
        assert_ne!(generate_instance(&p).unwrap(), generate_instance(&q).unwrap());
    }

    #[test]
    fn seed_family_respects_ranges() {
        for seed in 0..100 {
            let p = GeneratorParams { seed, ..Default::default() };
            let inst = generate_instance(&p).unwrap();
            assert!(validate_instance(&inst).is_valid());
            assert_eq!(inst.network.links.len(), p.link_count);
            for c in &inst.network.cloud_nodes {
                assert!((50.0..=100.0).contains(&c.capacity) && c.capacity.fract() == 0.0);
            }
            for l in &inst.network.links {
                assert!((5.0..=55.0).contains(&l.capacity) && l.capacity.fract() == 0.0);
                assert!(l.delay == 1.0 || l.delay == 2.0);
            }
            for s in &inst.services {
                let r = s.rates[0];
                assert!((1.0..=11.0).contains(&r) && r.fract() == 0.0);
                assert!(s.rates.iter().all(|&x| x == r));
                assert_eq!(s.destination, "d");
                assert!(s.nfv_delay.values().flatten().all(|d| [3.0, 4.0, 5.0, 6.0].contains(d)));
                let dist = crate::model::shortest_delay(&inst.network, &s.source, &s.destination).unwrap().unwrap();
                let slack = s.delay_budget - 20.0 - 3.0 * dist;
                assert!((0.0..=5.0).contains(&slack), "slack {slack}");
            }
        }
    }

    #[test]
    fn rejects_impossible_link_counts() {
        let odd = GeneratorParams { link_count: 75, ..Default::default() };
        assert!(matches!(generate_instance(&odd), Err(GenerateError::InvalidParams(_))));
        let sparse = GeneratorParams { link_count: 10, ..Default::default() };
        assert!(matches!(generate_instance(&sparse), Err(GenerateError::InvalidParams(_))));
    }

    #[test]
    fn sparse_but_admissible_topologies_may_exhaust_retries() {
        // a spanning tree is the only admissible edge set: random draws
        // almost never hit one
        let p = GeneratorParams { node_count: 40, cloud_count: 3, link_count: 2 * (3 + 38), ..Default::default() };
        assert_eq!(generate_instance(&p), Err(GenerateError::GenerationFailed(100)));
    }
}
