//! Bounded-variable linear programs and a bundled simplex solver.
//!
//! Models are always minimization problems of the form
//!
//! ```text
//! min  c^T x
//! s.t. a_i^T x  {<=, =, >=}  b_i      for every row i
//!      l_j <= x_j <= u_j              (bounds may be infinite)
//! ```
//!
//! [`solve_lp`] runs a revised primal simplex; [`mps`] writes and reads fixed
//! MPS so a model can be handed to an external solver instead.

pub mod mps;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use simplex::{solve_lp, solve_lp_with, SimplexOptions};

/// Primal feasibility tolerance used when certifying an optimal point.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost tolerance for declaring optimality.
pub const OPT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// Sparse row: `(variable index, coefficient)`.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("variable {0} has lower bound above upper bound")]
    InvertedBounds(String),
    #[error("variable {0} has a NaN bound")]
    NanBound(String),
    #[error("row {row} references undeclared variable {var}")]
    UnknownVariable { row: String, var: usize },
    #[error("row {0} has a non-finite coefficient or right-hand side")]
    NonFiniteRow(String),
    #[error("objective has length {got}, expected {expected}")]
    ObjectiveLength { got: usize, expected: usize },
    #[error("simplex failed to reach tolerance: {0}")]
    NumericalFailure(String),
}

/// A minimization LP with bounded variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpModel {
    pub variables: Vec<Variable>,
    /// Dense objective, one coefficient per variable.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable { name: name.into(), lower, upper });
        self.objective.push(0.0);
        self.variables.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint { name: name.into(), coeffs, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.variables[var].lower = lower;
        self.variables[var].upper = upper;
    }

    pub fn check(&self) -> Result<(), LpError> {
        if self.objective.len() != self.variables.len() {
            return Err(LpError::ObjectiveLength { got: self.objective.len(), expected: self.variables.len() });
        }
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() {
                return Err(LpError::NanBound(v.name.clone()));
            }
            if v.lower > v.upper {
                return Err(LpError::InvertedBounds(v.name.clone()));
            }
        }
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(LpError::NonFiniteRow(row.name.clone()));
            }
            for &(j, a) in &row.coeffs {
                if j >= self.variables.len() {
                    return Err(LpError::UnknownVariable { row: row.name.clone(), var: j });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFiniteRow(row.name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Largest violation over all rows and bounds. Each row is scaled so its
    /// largest absolute coefficient is 1.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for row in &self.constraints {
            let scale = row.coeffs.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let act: f64 = row.coeffs.iter().map(|&(j, a)| a * values[j]).sum();
            let gap = match row.relation {
                Relation::Le => act - row.rhs,
                Relation::Ge => row.rhs - act,
                Relation::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(gap / scale);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Dual information returned with a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Certificate {
    /// Row duals `y` and the Lagrangian bound they prove.
    Dual { row_duals: Vec<f64>, bound: f64 },
    /// Row multipliers whose Lagrangian has a strictly positive minimum over
    /// the variable box, proving `Ax = b` has no solution inside the box.
    Farkas { ray: Vec<f64>, gap: f64 },
    /// Direction of unbounded descent over the structural variables.
    Ray { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub certificate: Certificate,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Minimum of the Lagrangian `c^T x + y^T (b - A x)` over the variable box,
/// with each row treated as `A x + s = b` and `s` boxed by the relation.
/// This is a valid lower bound on the LP optimum for any sign-feasible `y`;
/// returns `-inf` when `y` is not sign-feasible.
pub fn lagrangian_bound(model: &LpModel, row_duals: &[f64], zero_tol: f64) -> f64 {
    lagrangian_min(model, row_duals, true, zero_tol)
}

/// Lagrangian minimum with the objective dropped. A strictly positive value
/// proves the rows cannot be met inside the variable box.
pub fn farkas_gap(model: &LpModel, ray: &[f64], zero_tol: f64) -> f64 {
    lagrangian_min(model, ray, false, zero_tol)
}

fn lagrangian_min(model: &LpModel, row_duals: &[f64], with_objective: bool, zero_tol: f64) -> f64 {
    let mut reduced = if with_objective { model.objective.clone() } else { vec![0.0; model.num_vars()] };
    let mut bound = 0.0;
    for (row, &y) in model.constraints.iter().zip(row_duals) {
        bound += y * row.rhs;
        for &(j, a) in &row.coeffs {
            reduced[j] -= y * a;
        }
        // s in [0, inf) for <=, (-inf, 0] for >=, {0} for =; term is -y*s
        let ok = match row.relation {
            Relation::Le => y <= zero_tol,
            Relation::Ge => y >= -zero_tol,
            Relation::Eq => true,
        };
        if !ok {
            return f64::NEG_INFINITY;
        }
    }
    for (v, d) in model.variables.iter().zip(reduced) {
        if d.abs() <= zero_tol {
            continue;
        }
        let at = if d > 0.0 { v.lower } else { v.upper };
        if !at.is_finite() {
            return f64::NEG_INFINITY;
        }
        bound += d * at;
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_rejects_bad_models() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 1.0, 0.0);
        assert!(matches!(m.check(), Err(LpError::InvertedBounds(_))));
        m.set_bounds(x, 0.0, 1.0);
        m.add_constraint("r", vec![(3, 1.0)], Relation::Le, 1.0);
        assert!(matches!(m.check(), Err(LpError::UnknownVariable { var: 3, .. })));
    }

    #[test]
    fn violation_is_row_scaled() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 10.0);
        m.add_constraint("r", vec![(x, 4.0)], Relation::Le, 4.0);
        // 4*1.5 - 4 = 2, scaled by 4
        assert!((m.max_violation(&[1.5]) - 0.5).abs() < 1e-12);
        assert_eq!(m.max_violation(&[0.5]), 0.0);
    }
}
