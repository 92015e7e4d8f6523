#![allow(dead_code)]

use nslice_core::lp::{LpModel, Relation};
use nslice_core::model::{generate_instance, GeneratorParams, Instance};

/// Tiny instances: 6 to 8 nodes, 2 clouds, 1 or 2 services, chains of 1 or
/// 2 functions. Every third seed has generous budgets and capacities, the
/// others tighten node capacity, budgets or link capacity so that a share
/// of the family is infeasible.
pub fn tiny_instance(seed: u64) -> Instance {
    let variant = seed % 3;
    let p = GeneratorParams {
        node_count: 6 + (seed % 3) as usize,
        link_count: 18,
        cloud_count: 2,
        service_count: 1 + (seed % 2) as usize,
        sfc_length: 1 + ((seed / 2) % 2) as usize,
        node_cap_range: if variant == 0 { [50, 100] } else { [6, 14] },
        link_cap_range: if variant == 2 { [3, 10] } else { [5, 55] },
        budget_base: if variant == 1 { 6.0 } else { 20.0 },
        seed,
        ..Default::default()
    };
    generate_instance(&p).expect("tiny parameters are admissible")
}

/// Mid-size instances: 12 to 20 nodes, 2 or 3 clouds, 1 to 4 services.
pub fn mid_instance(seed: u64) -> Instance {
    let nodes = 12 + (seed % 9) as usize;
    let clouds = 2 + (seed % 2) as usize;
    let mesh = nodes - 1;
    let p = GeneratorParams {
        node_count: nodes,
        link_count: 2 * (clouds + mesh + 12),
        cloud_count: clouds,
        service_count: 1 + (seed % 4) as usize,
        node_cap_range: if seed % 5 == 0 { [10, 25] } else { [50, 100] },
        seed,
        ..Default::default()
    };
    generate_instance(&p).expect("mid parameters are admissible")
}

/// Minimum over the vertices of a fully boxed LP; `None` if no vertex is
/// feasible.
pub fn vertex_minimum(m: &LpModel) -> Option<f64> {
    let n = m.num_vars();
    let mut halves: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &m.constraints {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coeffs {
            a[j] += v;
        }
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        match row.relation {
            Relation::Le => halves.push((a, row.rhs)),
            Relation::Ge => halves.push((neg, -row.rhs)),
            Relation::Eq => {
                halves.push((a, row.rhs));
                halves.push((neg, -row.rhs));
            }
        }
    }
    for (j, v) in m.variables.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        halves.push((e.clone(), v.upper));
        e[j] = -1.0;
        halves.push((e, -v.lower));
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(n);
    fn rec(
        start: usize,
        n: usize,
        halves: &[(Vec<f64>, f64)],
        pick: &mut Vec<usize>,
        m: &LpModel,
        best: &mut Option<f64>,
    ) {
        if pick.len() == n {
            let Some(x) = solve_square(pick.iter().map(|&i| halves[i].clone()).collect()) else { return };
            let feasible = halves.iter().all(|(a, b)| a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9);
            if feasible {
                let obj = m.objective_value(&x);
                *best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
            return;
        }
        for i in start..halves.len() {
            pick.push(i);
            rec(i + 1, n, halves, pick, m, best);
            pick.pop();
        }
    }
    rec(0, n, &halves, &mut pick, m, &mut best);
    best
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_square(mut rows: Vec<(Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let n = rows.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| rows[a].0[col].abs().total_cmp(&rows[b].0[col].abs()))?;
        if rows[piv].0[col].abs() < 1e-9 {
            return None;
        }
        rows.swap(col, piv);
        let (head, tail) = rows.split_at_mut(col + 1);
        let p = &head[col];
        for r in tail.iter_mut() {
            let f = r.0[col] / p.0[col];
            for k in col..n {
                r.0[k] -= f * p.0[k];
            }
            r.1 -= f * p.1;
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| rows[i].0[k] * x[k]).sum();
        x[i] = (rows[i].1 - s) / rows[i].0[i];
    }
    Some(x)
}

pub fn lp(vars: &[(f64, f64)], cost: &[f64], rows: &[(&[f64], Relation, f64)]) -> LpModel {
    let mut m = LpModel::new();
    for (j, &(lo, hi)) in vars.iter().enumerate() {
        m.add_var(format!("x{j}"), lo, hi);
        m.set_cost(j, cost[j]);
    }
    for (i, (a, rel, b)) in rows.iter().enumerate() {
        let coeffs = a.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)).collect();
        m.add_constraint(format!("r{i}"), coeffs, *rel, *b);
    }
    m
}
