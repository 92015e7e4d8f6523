//! Independent feasibility checker for solution documents.
//!
//! Works on node names and the raw instance only; nothing here is shared with
//! the solvers. Placement rows are checked in exact rational arithmetic.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::model::{Instance, Violation};
use crate::solution::SolutionDoc;

pub const LINK_TOL: f64 = 1e-7;
pub const FRACTION_SUM_TOL: f64 = 1e-9;
const DELAY_TOL: f64 = 1e-9;
const OBJECTIVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolutionReport {
    pub violations: Vec<Violation>,
    /// Reported but not disqualifying, e.g. more than `P` paths in a segment.
    pub warnings: Vec<Violation>,
    /// Recomputed `Σ y + σ Σ θ̄`, when a routing was checked.
    pub objective: Option<f64>,
    pub delays: BTreeMap<String, f64>,
}

impl SolutionReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.code.as_str()).collect()
    }
}

fn exact(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

struct Checker {
    out: SolutionReport,
}

impl Checker {
    fn fail(&mut self, code: &str, detail: String) {
        self.out.violations.push(Violation { code: code.into(), detail });
    }
    fn warn(&mut self, code: &str, detail: String) {
        self.out.warnings.push(Violation { code: code.into(), detail });
    }
}

/// Checks only placement rows: one host per function, activation equals
/// the host set, and node capacities in exact arithmetic.
pub fn check_placement(instance: &Instance, doc: &SolutionDoc) -> SolutionReport {
    let mut c = Checker { out: SolutionReport::default() };
    placement_rows(instance, doc, &mut c);
    c.out
}

/// Host per (service, position), if the placement rows were readable.
fn placement_rows(instance: &Instance, doc: &SolutionDoc, c: &mut Checker) -> Option<HashMap<(String, usize), String>> {
    let capacity: HashMap<&str, &f64> =
        instance.network.cloud_nodes.iter().map(|n| (n.node.as_str(), &n.capacity)).collect();
    let services: HashMap<&str, _> = instance.services.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut host: HashMap<(String, usize), String> = HashMap::new();
    let mut ok = true;
    for a in &doc.assign {
        let Some(svc) = services.get(a.service.as_str()) else {
            c.fail("unknown-service", a.service.clone());
            ok = false;
            continue;
        };
        if a.position == 0 || a.position > svc.sfc.len() {
            c.fail("assign-position", format!("{} position {}", a.service, a.position));
            ok = false;
            continue;
        }
        if !capacity.contains_key(a.node.as_str()) {
            c.fail("assign-not-cloud", format!("{} position {} on {}", a.service, a.position, a.node));
            ok = false;
        }
        if host.insert((a.service.clone(), a.position), a.node.clone()).is_some() {
            c.fail("assign-duplicate", format!("{} position {}", a.service, a.position));
            ok = false;
        }
    }
    for s in &instance.services {
        for pos in 1..=s.sfc.len() {
            if !host.contains_key(&(s.id.clone(), pos)) {
                c.fail("assign-missing", format!("{} position {pos}", s.id));
                ok = false;
            }
        }
    }
    let hosts: BTreeSet<&str> = host.values().map(String::as_str).collect();
    let activated: BTreeSet<&str> = doc.activated.iter().map(String::as_str).collect();
    if activated.len() != doc.activated.len() || hosts != activated {
        c.fail("activation-mismatch", format!("activated {:?}, hosts {:?}", doc.activated, hosts));
    }
    let zero = BigRational::from_integer(BigInt::from(0));
    let mut load: BTreeMap<&str, BigRational> = BTreeMap::new();
    for ((sid, pos), node) in &host {
        let Some(svc) = services.get(sid.as_str()) else { continue };
        let Some(rate) = svc.rates.get(*pos).copied().and_then(exact) else {
            c.fail("rate", format!("{sid} position {pos}"));
            continue;
        };
        *load.entry(node.as_str()).or_insert_with(|| zero.clone()) += rate;
    }
    for (node, l) in &load {
        let Some(&&mu) = capacity.get(node) else { continue };
        match exact(mu) {
            Some(mu_exact) if *l <= mu_exact => {}
            _ => c.fail("node-capacity", format!("{node}: load {l} exceeds {mu}")),
        }
    }
    ok.then_some(host)
}

/// Full check of a claimed solution against the instance.
pub fn validate_solution(instance: &Instance, doc: &SolutionDoc) -> SolutionReport {
    let mut c = Checker { out: SolutionReport::default() };
    if !doc.is_feasible() {
        c.fail("not-feasible", format!("status {:?}", doc.status));
    }
    let host = placement_rows(instance, doc, &mut c);
    let Some(routing) = &doc.routing else {
        c.fail("routing-missing", "no routing".into());
        return c.out;
    };
    let Some(host) = host else { return c.out };

    let links: HashMap<(&str, &str), (f64, f64)> =
        instance.network.links.iter().map(|l| ((l.from.as_str(), l.to.as_str()), (l.delay, l.capacity))).collect();
    let mut seen: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut seg_delay: HashMap<(String, usize), f64> = HashMap::new();
    let mut link_load: BTreeMap<(String, String), f64> = BTreeMap::new();
    let services: HashMap<&str, _> = instance.services.iter().map(|s| (s.id.as_str(), s)).collect();

    for seg in &routing.segments {
        let Some(svc) = services.get(seg.service.as_str()) else {
            c.fail("unknown-service", seg.service.clone());
            continue;
        };
        let len = svc.sfc.len();
        if seg.segment > len {
            c.fail("segment-index", format!("{} segment {}", seg.service, seg.segment));
            continue;
        }
        if !seen.insert((seg.service.clone(), seg.segment)) {
            c.fail("segment-duplicate", format!("{} segment {}", seg.service, seg.segment));
            continue;
        }
        let origin = if seg.segment == 0 { svc.source.clone() } else { host[&(svc.id.clone(), seg.segment)].clone() };
        let target =
            if seg.segment == len { svc.destination.clone() } else { host[&(svc.id.clone(), seg.segment + 1)].clone() };
        let rate = svc.rates[seg.segment];
        let mut total = 0.0;
        let mut slowest = 0.0f64;
        if seg.paths.len() > instance.path_budget {
            c.warn(
                "path-budget-exceeded",
                format!("{} segment {}: {} paths", seg.service, seg.segment, seg.paths.len()),
            );
        }
        for p in &seg.paths {
            let tag = format!("{} segment {} path {:?}", seg.service, seg.segment, p.nodes);
            if !(p.fraction > 0.0 && p.fraction <= 1.0 + FRACTION_SUM_TOL) {
                c.fail("path-fraction", format!("{tag}: {}", p.fraction));
            }
            total += p.fraction;
            if p.nodes.first() != Some(&origin) || p.nodes.last() != Some(&target) {
                c.fail("path-endpoints", format!("{tag}: expected {origin} -> {target}"));
            }
            let distinct: BTreeSet<&String> = p.nodes.iter().collect();
            if distinct.len() != p.nodes.len() {
                c.warn("path-not-simple", tag.clone());
            }
            let mut delay = 0.0;
            for w in p.nodes.windows(2) {
                match links.get(&(w[0].as_str(), w[1].as_str())) {
                    Some(&(d, _)) => {
                        delay += d;
                        *link_load.entry((w[0].clone(), w[1].clone())).or_insert(0.0) += rate * p.fraction;
                    }
                    None => c.fail("path-missing-link", format!("{tag}: {} -> {}", w[0], w[1])),
                }
            }
            slowest = slowest.max(delay);
        }
        if (total - 1.0).abs() > FRACTION_SUM_TOL {
            c.fail("segment-fraction-sum", format!("{} segment {}: {total}", seg.service, seg.segment));
        }
        seg_delay.insert((seg.service.clone(), seg.segment), slowest);
    }
    for s in &instance.services {
        for seg in 0..=s.sfc.len() {
            if !seen.contains(&(s.id.clone(), seg)) {
                c.fail("segment-missing", format!("{} segment {seg}", s.id));
            }
        }
    }
    for ((from, to), load) in &link_load {
        let cap = links[&(from.as_str(), to.as_str())].1;
        if *load > cap + LINK_TOL {
            c.fail("link-capacity", format!("{from} -> {to}: {load} > {cap}"));
        }
    }
    let mut total_delay = 0.0;
    for s in &instance.services {
        let mut d: f64 = (0..=s.sfc.len()).map(|seg| seg_delay.get(&(s.id.clone(), seg)).copied().unwrap_or(0.0)).sum();
        for pos in 1..=s.sfc.len() {
            d += s.nfv_delay[&host[&(s.id.clone(), pos)]][pos - 1];
        }
        if d > s.delay_budget + DELAY_TOL {
            c.fail("delay-budget", format!("{}: {d} > {}", s.id, s.delay_budget));
        }
        if let Some(r) = routing.services.iter().find(|r| r.service == s.id) {
            if (r.delay - d).abs() > DELAY_TOL {
                c.warn("delay-mismatch", format!("{}: reported {}, recomputed {d}", s.id, r.delay));
            }
        }
        total_delay += d;
        c.out.delays.insert(s.id.clone(), d);
    }
    let objective = doc.activated.len() as f64 + instance.sigma * total_delay;
    c.out.objective = Some(objective);
    if let Some(claimed) = doc.objective {
        if (claimed - objective).abs() > OBJECTIVE_TOL {
            c.fail("objective-mismatch", format!("claimed {claimed}, recomputed {objective}"));
        }
    }
    c.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::t1;
    use crate::solution::{solve_instance, Method, SolveOptions};

    fn t1_doc() -> SolutionDoc {
        solve_instance(&t1(), Method::Lprr, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn solver_output_passes() {
        let r = validate_solution(&t1(), &t1_doc());
        assert!(r.is_feasible(), "{r:?}");
        assert_eq!(r.delays["k1"], 5.0);
        assert!((r.objective.unwrap() - 1.005).abs() < 1e-12);
    }

    #[test]
    fn fraction_sum_is_checked() {
        let mut doc = t1_doc();
        doc.routing.as_mut().unwrap().segments[0].paths[0].fraction = 0.9;
        assert_eq!(validate_solution(&t1(), &doc).codes(), ["segment-fraction-sum"]);
    }

    #[test]
    fn capacity_is_exact() {
        let mut inst = t1();
        inst.network.cloud_nodes[0].capacity = 0.9999999999;
        let r = check_placement(&inst, &t1_doc());
        assert_eq!(r.codes(), ["node-capacity"]);
    }

    #[test]
    fn placement_tampering() {
        let mut doc = t1_doc();
        doc.activated = vec!["a".into(), "b".into()];
        assert_eq!(check_placement(&t1(), &doc).codes(), ["activation-mismatch"]);
        let mut doc = t1_doc();
        doc.assign[0].node = "t".into();
        doc.activated = vec!["t".into()];
        assert!(check_placement(&t1(), &doc).codes().contains(&"assign-not-cloud"));
        let mut doc = t1_doc();
        doc.assign.clear();
        assert!(validate_solution(&t1(), &doc).codes().contains(&"assign-missing"));
    }

    #[test]
    fn routing_tampering() {
        let mut doc = t1_doc();
        doc.routing.as_mut().unwrap().segments[0].paths[0].nodes = vec!["s".into(), "b".into()];
        let codes = validate_solution(&t1(), &doc).codes().join(",");
        assert!(codes.contains("path-endpoints"), "{codes}");

        let mut doc = t1_doc();
        doc.routing.as_mut().unwrap().segments[1].paths[0].nodes = vec!["a".into(), "s".into(), "t".into()];
        assert!(validate_solution(&t1(), &doc).codes().contains(&"path-missing-link"));

        let mut inst = t1();
        inst.services[0].delay_budget = 4.5;
        assert!(validate_solution(&inst, &t1_doc()).codes().contains(&"delay-budget"));

        let mut inst = t1();
        inst.network.links[0].capacity = 0.5;
        assert!(validate_solution(&inst, &t1_doc()).codes().contains(&"link-capacity"));

        let mut doc = t1_doc();
        doc.objective = Some(2.0);
        assert_eq!(validate_solution(&t1(), &doc).codes(), ["objective-mismatch"]);

        let mut doc = t1_doc();
        doc.routing.as_mut().unwrap().segments.pop();
        assert_eq!(validate_solution(&t1(), &doc).codes()[0], "segment-missing");
    }

    #[test]
    fn extra_paths_only_warn() {
        let mut doc = t1_doc();
        let seg = &mut doc.routing.as_mut().unwrap().segments[1];
        let p = seg.paths[0].clone();
        seg.paths = vec![
            crate::solution::PathDoc { fraction: 0.25, ..p.clone() },
            crate::solution::PathDoc { fraction: 0.25, ..p.clone() },
            crate::solution::PathDoc { fraction: 0.5, ..p },
        ];
        let r = validate_solution(&t1(), &doc);
        assert!(r.is_feasible());
        assert_eq!(r.warnings[0].code, "path-budget-exceeded");
    }
}
