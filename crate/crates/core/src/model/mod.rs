//! Networks, services and problem instances.
//!
//! [`Instance`] is the serialized form with string node names. Solvers work
//! on a [`Problem`], which is a validated instance with everything resolved
//! to dense indices.

mod generate;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{delay_budget, generate_instance, GenerateError, GeneratorParams};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: String,
    pub to: String,
    pub delay: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudNode {
    pub node: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
    pub cloud_nodes: Vec<CloudNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub id: String,
    pub source: String,
    pub destination: String,
    /// Function labels, in processing order.
    pub sfc: Vec<String>,
    /// `rates[s]` is the rate after function `s` (`rates[0]` before any).
    pub rates: Vec<f64>,
    pub delay_budget: f64,
    /// Per cloud node: processing delay of each SFC position.
    pub nfv_delay: BTreeMap<String, Vec<f64>>,
}

impl Service {
    /// Number of functions in the chain.
    pub fn chain_len(&self) -> usize {
        self.sfc.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub network: Network,
    pub services: Vec<Service>,
    pub sigma: f64,
    pub path_budget: usize,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format: u32,
    #[serde(flatten)]
    instance: Instance,
}

#[derive(Serialize)]
struct InstanceFileRef<'a> {
    format: u32,
    #[serde(flatten)]
    instance: &'a Instance,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported instance format {0}, expected {FORMAT_VERSION}")]
    Format(u32),
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
    #[error("unknown node {0}")]
    UnknownNode(String),
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.format != FORMAT_VERSION {
            return Err(ModelError::Format(file.format));
        }
        Ok(file.instance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFileRef { format: FORMAT_VERSION, instance: self })
            .expect("instances always serialize")
    }

    pub fn validate(&self) -> ValidationReport {
        validate_instance(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.code.as_str()).collect()
    }

    fn push(&mut self, code: &str, detail: impl Into<String>) {
        self.violations.push(Violation { code: code.to_string(), detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| format!("{} ({})", v.code, v.detail)).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_instance(instance: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let net = &instance.network;

    let mut nodes = BTreeSet::new();
    for n in &net.nodes {
        if !nodes.insert(n.as_str()) {
            report.push("duplicate-node", n.clone());
        }
    }

    let mut pairs = BTreeSet::new();
    for l in &net.links {
        let tag = format!("{}->{}", l.from, l.to);
        if !nodes.contains(l.from.as_str()) || !nodes.contains(l.to.as_str()) {
            report.push("dangling-link", tag);
            continue;
        }
        if l.from == l.to {
            report.push("self-loop", tag);
            continue;
        }
        if !pairs.insert((l.from.as_str(), l.to.as_str())) {
            report.push("duplicate-link", tag.clone());
        }
        if !(l.capacity > 0.0) || !l.capacity.is_finite() {
            report.push("link-capacity", tag.clone());
        }
        if !(l.delay >= 0.0) || !l.delay.is_finite() {
            report.push("link-delay", tag);
        }
    }

    let mut clouds = BTreeSet::new();
    for c in &net.cloud_nodes {
        if !nodes.contains(c.node.as_str()) {
            report.push("cloud-not-node", c.node.clone());
        }
        if !clouds.insert(c.node.as_str()) {
            report.push("duplicate-cloud", c.node.clone());
        }
        if !(c.capacity > 0.0) || !c.capacity.is_finite() {
            report.push("node-capacity", c.node.clone());
        }
    }

    let mut ids = BTreeSet::new();
    for svc in &instance.services {
        let id = &svc.id;
        if !ids.insert(id.as_str()) {
            report.push("duplicate-service", id.clone());
        }
        for (end, name) in [("source", &svc.source), ("destination", &svc.destination)] {
            if !nodes.contains(name.as_str()) {
                report.push(&format!("unknown-{end}"), format!("{id}: {name}"));
            } else if clouds.contains(name.as_str()) {
                report.push(&format!("{end}-in-cloud"), format!("{id}: {name}"));
            }
        }
        let len = svc.chain_len();
        if len == 0 {
            report.push("empty-sfc", id.clone());
        }
        if svc.rates.len() != len + 1 {
            report.push("rate-count", format!("{id}: {} rates for {} functions", svc.rates.len(), len));
        }
        if svc.rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            report.push("rate", id.clone());
        }
        if !(svc.delay_budget > 0.0) || !svc.delay_budget.is_finite() {
            report.push("delay-budget", id.clone());
        }
        for c in &net.cloud_nodes {
            match svc.nfv_delay.get(&c.node) {
                Some(d) if d.len() == len => {
                    if d.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                        report.push("nfv-delay", format!("{id}: {}", c.node));
                    }
                }
                _ => report.push("nfv-delay-missing", format!("{id}: {}", c.node)),
            }
        }
        for node in svc.nfv_delay.keys() {
            if !clouds.contains(node.as_str()) {
                report.push("nfv-delay-not-cloud", format!("{id}: {node}"));
            }
        }
    }

    if instance.path_budget < 1 {
        report.push("path-budget", instance.path_budget.to_string());
    }
    if !(instance.sigma >= 0.0) || !instance.sigma.is_finite() {
        report.push("sigma", instance.sigma.to_string());
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub delay: f64,
    pub capacity: f64,
}

/// Index-based view of a network.
#[derive(Debug, Clone)]
pub struct Topology {
    pub names: Vec<String>,
    index: HashMap<String, usize>,
    pub arcs: Vec<Arc>,
    /// Outgoing arc ids per node, ordered by head node index.
    pub out_arcs: Vec<Vec<usize>>,
    pub in_arcs: Vec<Vec<usize>>,
    /// Node index of each cloud node, in declaration order.
    pub clouds: Vec<usize>,
    pub cloud_capacity: Vec<f64>,
    pub cloud_of: Vec<Option<usize>>,
}

impl Topology {
    pub fn new(net: &Network) -> Result<Self, ModelError> {
        let index: HashMap<String, usize> = net.nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let lookup = |n: &str| index.get(n).copied().ok_or_else(|| ModelError::UnknownNode(n.into()));
        let mut arcs = Vec::with_capacity(net.links.len());
        for l in &net.links {
            arcs.push(Arc { from: lookup(&l.from)?, to: lookup(&l.to)?, delay: l.delay, capacity: l.capacity });
        }
        let n = net.nodes.len();
        let mut out_arcs = vec![Vec::new(); n];
        let mut in_arcs = vec![Vec::new(); n];
        for (a, arc) in arcs.iter().enumerate() {
            out_arcs[arc.from].push(a);
            in_arcs[arc.to].push(a);
        }
        for list in &mut out_arcs {
            list.sort_by_key(|&a| (arcs[a].to, a));
        }
        for list in &mut in_arcs {
            list.sort_by_key(|&a| (arcs[a].from, a));
        }
        let mut clouds = Vec::new();
        let mut cloud_capacity = Vec::new();
        let mut cloud_of = vec![None; n];
        for (ci, c) in net.cloud_nodes.iter().enumerate() {
            let v = lookup(&c.node)?;
            clouds.push(v);
            cloud_capacity.push(c.capacity);
            cloud_of[v] = Some(ci);
        }
        Ok(Topology { names: net.nodes.clone(), index, arcs, out_arcs, in_arcs, clouds, cloud_capacity, cloud_of })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn arc_between(&self, from: usize, to: usize) -> Option<usize> {
        self.out_arcs[from].iter().copied().find(|&a| self.arcs[a].to == to)
    }

    /// Dijkstra over link delays. `None` when `t` is unreachable.
    pub fn shortest_delay(&self, s: usize, t: usize) -> Option<f64> {
        self.shortest_delays_from(s)[t]
    }

    pub fn shortest_delays_from(&self, s: usize) -> Vec<Option<f64>> {
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }
        let mut dist: Vec<Option<f64>> = vec![None; self.node_count()];
        let mut heap = BinaryHeap::new();
        dist[s] = Some(0.0);
        heap.push(Entry(0.0, s));
        while let Some(Entry(d, u)) = heap.pop() {
            if dist[u].is_some_and(|best| d > best) {
                continue;
            }
            for &a in &self.out_arcs[u] {
                let arc = &self.arcs[a];
                let nd = d + arc.delay;
                if dist[arc.to].is_none_or(|cur| nd < cur) {
                    dist[arc.to] = Some(nd);
                    heap.push(Entry(nd, arc.to));
                }
            }
        }
        dist
    }
}

/// Minimum total link delay from `s` to `t`; `Ok(None)` when unreachable.
pub fn shortest_delay(net: &Network, s: &str, t: &str) -> Result<Option<f64>, ModelError> {
    let topo = Topology::new(net)?;
    let si = topo.node(s).ok_or_else(|| ModelError::UnknownNode(s.into()))?;
    let ti = topo.node(t).ok_or_else(|| ModelError::UnknownNode(t.into()))?;
    Ok(topo.shortest_delay(si, ti))
}

/// A service with endpoints and delays resolved to indices.
#[derive(Debug, Clone)]
pub struct ServiceView {
    pub id: String,
    pub source: usize,
    pub destination: usize,
    pub rates: Vec<f64>,
    pub budget: f64,
    /// `nfv_delay[cloud][s - 1]`.
    pub nfv_delay: Vec<Vec<f64>>,
}

impl ServiceView {
    pub fn chain_len(&self) -> usize {
        self.rates.len() - 1
    }

    /// Segments `0..=chain_len`.
    pub fn segment_count(&self) -> usize {
        self.rates.len()
    }
}

/// A validated instance ready for the solvers.
#[derive(Debug, Clone)]
pub struct Problem {
    pub topology: Topology,
    pub services: Vec<ServiceView>,
    pub sigma: f64,
    pub path_budget: usize,
}

impl Problem {
    pub fn new(instance: &Instance) -> Result<Self, ModelError> {
        let report = validate_instance(instance);
        if !report.is_valid() {
            return Err(ModelError::Invalid(report));
        }
        let topology = Topology::new(&instance.network)?;
        let services = instance
            .services
            .iter()
            .map(|svc| ServiceView {
                id: svc.id.clone(),
                source: topology.node(&svc.source).expect("validated"),
                destination: topology.node(&svc.destination).expect("validated"),
                rates: svc.rates.clone(),
                budget: svc.delay_budget,
                nfv_delay: instance.network.cloud_nodes.iter().map(|c| svc.nfv_delay[&c.node].clone()).collect(),
            })
            .collect();
        Ok(Problem { topology, services, sigma: instance.sigma, path_budget: instance.path_budget })
    }

    pub fn cloud_count(&self) -> usize {
        self.topology.clouds.len()
    }

    pub fn total_positions(&self) -> usize {
        self.services.iter().map(ServiceView::chain_len).sum()
    }

    pub fn cloud_name(&self, v: usize) -> &str {
        &self.topology.names[self.topology.clouds[v]]
    }
}

/// Small hand-built instances.
pub mod fixtures {
    use super::*;

    /// Four nodes `s, a, b, t`; clouds `a, b`; unit-delay links through both
    /// clouds; one single-function service from `s` to `t`.
    pub fn t1() -> Instance {
        let link = |f: &str, t: &str| Link { from: f.into(), to: t.into(), delay: 1.0, capacity: 10.0 };
        Instance {
            network: Network {
                nodes: ["s", "a", "b", "t"].map(String::from).to_vec(),
                links: vec![link("s", "a"), link("s", "b"), link("a", "t"), link("b", "t")],
                cloud_nodes: vec![
                    CloudNode { node: "a".into(), capacity: 10.0 },
                    CloudNode { node: "b".into(), capacity: 10.0 },
                ],
            },
            services: vec![Service {
                id: "k1".into(),
                source: "s".into(),
                destination: "t".into(),
                sfc: vec!["f1".into()],
                rates: vec![1.0, 1.0],
                delay_budget: 20.0,
                nfv_delay: BTreeMap::from([("a".into(), vec![3.0]), ("b".into(), vec![5.0])]),
            }],
            sigma: 0.001,
            path_budget: 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::t1;
    use super::*;

    #[test]
    fn well_formed_instance_has_empty_report() {
        assert!(validate_instance(&t1()).is_valid());
    }

    #[test]
    fn source_in_cloud_is_reported_once() {
        let mut inst = t1();
        inst.services[0].source = "a".into();
        assert_eq!(validate_instance(&inst).codes(), ["source-in-cloud"]);
    }

    #[test]
    fn dangling_link_is_reported_once() {
        let mut inst = t1();
        inst.network.links.push(Link { from: "s".into(), to: "zz".into(), delay: 1.0, capacity: 1.0 });
        assert_eq!(validate_instance(&inst).codes(), ["dangling-link"]);
    }

    #[test]
    fn structural_violations() {
        let mut inst = t1();
        inst.network.links.push(inst.network.links[0].clone());
        inst.network.links.push(Link { from: "a".into(), to: "a".into(), delay: 1.0, capacity: 1.0 });
        inst.services[0].rates.push(1.0);
        inst.services[0].nfv_delay.remove("b");
        inst.services.push(inst.services[0].clone());
        inst.path_budget = 0;
        let report = validate_instance(&inst);
        let codes = report.codes();
        for c in ["duplicate-link", "self-loop", "rate-count", "nfv-delay-missing", "duplicate-service", "path-budget"]
        {
            assert!(codes.contains(&c), "missing {c} in {codes:?}");
        }
    }

    #[test]
    fn json_requires_format_field() {
        let inst = t1();
        let text = inst.to_json();
        assert!(text.contains("\"format\": 1"));
        assert_eq!(Instance::from_json(&text).unwrap(), inst);
        let stripped = text.replacen("\"format\": 1,", "", 1);
        assert!(Instance::from_json(&stripped).is_err());
        let bumped = text.replacen("\"format\": 1", "\"format\": 2", 1);
        assert!(matches!(Instance::from_json(&bumped), Err(ModelError::Format(2))));
    }

    fn line_net(delays: &[(&str, &str, f64)]) -> Network {
        let mut nodes = BTreeSet::new();
        for (f, t, _) in delays {
            nodes.insert(f.to_string());
            nodes.insert(t.to_string());
        }
        Network {
            nodes: nodes.into_iter().collect(),
            links: delays
                .iter()
                .map(|(f, t, d)| Link { from: f.to_string(), to: t.to_string(), delay: *d, capacity: 1.0 })
                .collect(),
            cloud_nodes: vec![],
        }
    }

    #[test]
    fn shortest_delay_examples() {
        let line = line_net(&[("s", "a", 1.0), ("a", "t", 1.0)]);
        assert_eq!(shortest_delay(&line, "s", "t").unwrap(), Some(2.0));
        assert_eq!(shortest_delay(&line, "s", "s").unwrap(), Some(0.0));
        assert_eq!(shortest_delay(&line, "t", "s").unwrap(), None);
    }

    #[test]
    fn shortest_delay_matches_simple_path_enumeration() {
        let net = line_net(&[("s", "a", 1.0), ("a", "t", 2.0), ("s", "b", 2.0), ("b", "t", 3.0)]);
        // simple s-t paths: s-a-t = 3, s-b-t = 5
        let topo = Topology::new(&net).unwrap();
        let (s, t) = (topo.node("s").unwrap(), topo.node("t").unwrap());
        let mut best = f64::INFINITY;
        let mut stack = vec![(s, 0.0, vec![s])];
        while let Some((u, d, seen)) = stack.pop() {
            if u == t {
                best = best.min(d);
                continue;
            }
            for &a in &topo.out_arcs[u] {
                let arc = &topo.arcs[a];
                if !seen.contains(&arc.to) {
                    let mut next = seen.clone();
                    next.push(arc.to);
                    stack.push((arc.to, d + arc.delay, next));
                }
            }
        }
        assert_eq!(best, 3.0);
        assert_eq!(shortest_delay(&net, "s", "t").unwrap(), Some(best));
    }

    #[test]
    fn problem_resolves_indices() {
        let p = Problem::new(&t1()).unwrap();
        assert_eq!(p.cloud_count(), 2);
        assert_eq!(p.cloud_name(1), "b");
        assert_eq!(p.services[0].nfv_delay, vec![vec![3.0], vec![5.0]]);
        assert_eq!(p.topology.node_count(), 4);
    }
}
