mod common;

use proptest::prelude::*;

use common::{lp, tiny_instance, vertex_minimum};
use nslice_core::formulation::{FixingSet, FormulationError, XVar};
use nslice_core::lp::{solve_lp, LpStatus, Relation};
use nslice_core::model::{generate_instance, GeneratorParams, Link, Network, Problem, Topology};
use nslice_core::placement::{round_placement, select_candidate, INT_TOL};
use nslice_core::routing::decompose_flow;
use nslice_core::solution::{solve_problem, Method, SolveOptions};
use nslice_core::validate::{check_placement, validate_solution};

fn complete_topology(n: usize) -> Topology {
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut links = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let delay = 1.0 + ((i * 7 + j * 3) % 4) as f64;
                links.push(Link { from: nodes[i].clone(), to: nodes[j].clone(), delay, capacity: 10.0 });
            }
        }
    }
    Topology::new(&Network { nodes, links, cloud_nodes: vec![] }).unwrap()
}

fn xvar(i: usize) -> XVar {
    XVar { service: i / 6, position: (i / 3) % 2, cloud: i % 3 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_is_deterministic_and_valid(seed in 0u64..10_000, k in 1usize..5, len in 1usize..4) {
        let p = GeneratorParams { service_count: k, sfc_length: len, seed, ..Default::default() };
        let a = generate_instance(&p).unwrap();
        let b = generate_instance(&p).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.validate().is_valid(), "{}", a.validate());
        prop_assert_eq!(a.services.len(), k);
        prop_assert!(a.services.iter().all(|s| s.sfc.len() == len));
        prop_assert_eq!(a.network.links.len(), p.link_count);
    }

    #[test]
    fn shortest_delays_obey_triangle_inequality(seed in 0u64..10_000) {
        let inst = generate_instance(&GeneratorParams { seed, ..Default::default() }).unwrap();
        let topo = Topology::new(&inst.network).unwrap();
        let n = topo.node_count();
        let d: Vec<Vec<Option<f64>>> = (0..n).map(|s| topo.shortest_delays_from(s)).collect();
        for s in 0..n {
            prop_assert_eq!(d[s][s], Some(0.0));
            for a in &topo.out_arcs[s] {
                let arc = &topo.arcs[*a];
                prop_assert!(d[s][arc.to].unwrap() <= arc.delay + 1e-12);
            }
            for u in 0..n {
                for t in 0..n {
                    if let (Some(su), Some(ut), Some(st)) = (d[s][u], d[u][t], d[s][t]) {
                        prop_assert!(st <= su + ut + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn select_candidate_picks_largest_free_fraction(
        values in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0], 1..18),
        fixed in prop::collection::vec(any::<bool>(), 18),
    ) {
        let xs: Vec<(XVar, f64)> = values.iter().enumerate().map(|(i, &v)| (xvar(i), v)).collect();
        let mut fixings = FixingSet::new();
        for (i, _) in xs.iter().enumerate().filter(|(i, _)| fixed[*i]) {
            fixings.fix(xvar(i), true).unwrap();
        }
        let free: Vec<&(XVar, f64)> = xs
            .iter()
            .filter(|(v, x)| !fixings.contains(*v) && *x > INT_TOL && *x < 1.0 - INT_TOL)
            .collect();
        match select_candidate(&xs, &fixings) {
            None => prop_assert!(free.is_empty()),
            Some(pick) => {
                let val = xs.iter().find(|(v, _)| *v == pick).unwrap().1;
                prop_assert!(free.iter().any(|(v, _)| *v == pick));
                prop_assert!(free.iter().all(|(_, x)| *x <= val + 1e-9));
            }
        }
    }

    #[test]
    fn fixing_set_rejects_conflicts(ops in prop::collection::vec((0usize..18, any::<bool>()), 1..30)) {
        let mut set = FixingSet::new();
        for (i, value) in ops {
            let prior = set.get(xvar(i));
            let r = set.fix(xvar(i), value);
            match prior {
                Some(p) if p != value => {
                    prop_assert_eq!(r, Err(FormulationError::ConflictingFixing(xvar(i))));
                    prop_assert_eq!(set.get(xvar(i)), Some(p));
                }
                _ => {
                    prop_assert!(r.is_ok());
                    prop_assert_eq!(set.get(xvar(i)), Some(value));
                }
            }
        }
    }

    #[test]
    fn decomposition_reproduces_path_mixtures(
        routes in prop::collection::vec((prop::collection::vec(1usize..5, 0..4), 1u32..10), 1..5),
    ) {
        let n = 6;
        let topo = complete_topology(n);
        let total: u32 = routes.iter().map(|r| r.1).sum();
        let mut z = vec![0.0; topo.arcs.len()];
        for (mids, w) in &routes {
            let mut seq = vec![0];
            for &m in mids {
                if !seq.contains(&m) {
                    seq.push(m);
                }
            }
            seq.push(n - 1);
            for pair in seq.windows(2) {
                z[topo.arc_between(pair[0], pair[1]).unwrap()] += *w as f64 / total as f64;
            }
        }
        let d = decompose_flow(&topo, &z, 0, n - 1).unwrap();
        prop_assert!((d.total_fraction() - 1.0).abs() <= 1e-9);
        for (a, b) in d.arc_flow(topo.arcs.len()).iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        for p in &d.paths {
            prop_assert_eq!(p.nodes[0], 0);
            prop_assert_eq!(*p.nodes.last().unwrap(), n - 1);
            prop_assert!(p.fraction > 0.0);
        }
    }

    #[test]
    fn simplex_matches_vertex_enumeration(
        bounds in prop::collection::vec((-3i32..2, 1i32..6), 2..5),
        cost in prop::collection::vec(-5i32..6, 5),
        rows in prop::collection::vec((prop::collection::vec(-3i32..4, 5), 0usize..3, -6i32..7), 1..4),
    ) {
        let n = bounds.len();
        let vars: Vec<(f64, f64)> = bounds.iter().map(|&(l, w)| (l as f64, (l + w) as f64)).collect();
        let cost: Vec<f64> = cost[..n].iter().map(|&c| c as f64).collect();
        let rows: Vec<(Vec<f64>, Relation, f64)> = rows
            .iter()
            .map(|(a, r, b)| {
                let rel = [Relation::Le, Relation::Ge, Relation::Eq][*r];
                (a[..n].iter().map(|&v| v as f64).collect(), rel, *b as f64)
            })
            .collect();
        let refs: Vec<(&[f64], Relation, f64)> = rows.iter().map(|(a, r, b)| (a.as_slice(), *r, *b)).collect();
        let model = lp(&vars, &cost, &refs);
        let sol = solve_lp(&model).unwrap();
        match vertex_minimum(&model) {
            Some(best) => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - best).abs() <= 1e-6, "{} vs {}", sol.objective, best);
                prop_assert!(model.max_violation(&sol.values) <= 1e-7);
            }
            None => prop_assert_eq!(sol.status, LpStatus::Infeasible),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rounded_placements_are_sound(seed in 0u64..100_000) {
        let inst = tiny_instance(seed);
        let problem = Problem::new(&inst).unwrap();
        let result = round_placement(&problem);
        prop_assert!(result.lp_solve_count <= 1 + problem.cloud_count() * problem.total_positions());
        for method in [Method::Lprr, Method::LprBaseline] {
            let doc = solve_problem(&problem, method, &SolveOptions::default());
            if !doc.assign.is_empty() {
                prop_assert!(check_placement(&inst, &doc).is_feasible());
            }
            if doc.is_feasible() {
                let report = validate_solution(&inst, &doc);
                prop_assert!(report.is_feasible(), "{:?}", report.codes());
            }
            prop_assert!(doc.stats.within_budgets());
        }
    }
}
