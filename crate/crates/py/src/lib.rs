//! Python bindings. Instances and solutions cross the boundary as the same
//! JSON documents the CLI reads and writes.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use nslice_core::formulation::build_relaxation;
use nslice_core::harness::{metrics_csv, run_experiment as run_core_experiment, ExperimentConfig};
use nslice_core::lp::mps;
use nslice_core::model::{fixtures, generate_instance, GeneratorParams, Problem};
use nslice_core::oracle::{exact_solve as core_exact_solve, OracleLimits, OracleOutcome};
use nslice_core::placement::{round_placement as core_round_placement, PlacementOutcome};
use nslice_core::solution::{solve_problem, Method, SolutionDoc, SolveOptions};
use nslice_core::validate::validate_solution;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(module = "nslice", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Instance {
    inner: nslice_core::model::Instance,
}

#[pymethods]
impl Instance {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = nslice_core::model::Instance::from_json(text).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Random instance; `params` is a JSON object of generator fields.
    #[staticmethod]
    #[pyo3(signature = (params = None, services = None, seed = None))]
    fn generate(params: Option<&str>, services: Option<usize>, seed: Option<u64>) -> PyResult<Self> {
        let mut p: GeneratorParams = match params {
            Some(text) => serde_json::from_str(text).map_err(value_err)?,
            None => GeneratorParams::default(),
        };
        if let Some(k) = services {
            p.service_count = k;
        }
        if let Some(s) = seed {
            p.seed = s;
        }
        Ok(Self { inner: generate_instance(&p).map_err(value_err)? })
    }

    /// The four-node example with clouds `a` and `b`.
    #[staticmethod]
    fn t1() -> Self {
        Self { inner: fixtures::t1() }
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.network.nodes.len()
    }

    #[getter]
    fn service_ids(&self) -> Vec<String> {
        self.inner.services.iter().map(|s| s.id.clone()).collect()
    }

    #[getter]
    fn cloud_nodes(&self) -> Vec<String> {
        self.inner.network.cloud_nodes.iter().map(|c| c.node.clone()).collect()
    }

    /// Structural problems, as violation codes.
    fn check(&self) -> Vec<String> {
        self.inner.validate().violations.into_iter().map(|v| v.code).collect()
    }

    fn __repr__(&self) -> String {
        format!("Instance(nodes={}, services={})", self.inner.network.nodes.len(), self.inner.services.len())
    }
}

impl Instance {
    fn problem(&self) -> PyResult<Problem> {
        Problem::new(&self.inner).map_err(value_err)
    }
}

#[pyclass(module = "nslice", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Solution {
    inner: SolutionDoc,
}

#[pymethods]
impl Solution {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: SolutionDoc::from_json(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn status(&self) -> String {
        serde_json::to_value(self.inner.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    }

    #[getter]
    fn feasible(&self) -> bool {
        self.inner.is_feasible()
    }

    #[getter]
    fn activated(&self) -> Vec<String> {
        self.inner.activated.clone()
    }

    #[getter]
    fn objective(&self) -> Option<f64> {
        self.inner.objective
    }

    /// `(service, position, node)` triples.
    #[getter]
    fn assign(&self) -> Vec<(String, usize, String)> {
        self.inner.assign.iter().map(|a| (a.service.clone(), a.position, a.node.clone())).collect()
    }

    #[getter]
    fn lp_solves(&self) -> (usize, usize) {
        (self.inner.stats.placement_lp_solves, self.inner.stats.routing_lp_solves)
    }

    fn __repr__(&self) -> String {
        format!("Solution(method={}, status={}, objective={:?})", self.method(), self.status(), self.inner.objective)
    }
}

/// Runs `lprr`, `lpr_baseline` or `oracle`.
#[pyfunction]
#[pyo3(signature = (instance, method = "lprr", rho = None, iter_max = None))]
fn solve(instance: &Instance, method: &str, rho: Option<f64>, iter_max: Option<usize>) -> PyResult<Solution> {
    let method: Method = method.parse().map_err(value_err)?;
    let mut options = SolveOptions::default();
    if let Some(r) = rho {
        options.refinement.rho = r;
    }
    if let Some(i) = iter_max {
        options.refinement.iter_max = i;
    }
    let problem = instance.problem()?;
    Ok(Solution { inner: solve_problem(&problem, method, &options) })
}

/// Iterative rounding alone. Returns per-service host lists, or `None`,
/// plus the LP solve count.
#[pyfunction]
fn round_placement(instance: &Instance) -> PyResult<(Option<Vec<Vec<String>>>, usize)> {
    let problem = instance.problem()?;
    let result = core_round_placement(&problem);
    let hosts = match &result.outcome {
        PlacementOutcome::Feasible(p) => {
            Some(p.assign.iter().map(|h| h.iter().map(|&v| problem.cloud_name(v).to_string()).collect()).collect())
        }
        PlacementOutcome::Failed(_) => None,
    };
    Ok((hosts, result.lp_solve_count))
}

/// Exhaustive search. Returns `(status, objective, activated)`.
#[pyfunction]
#[pyo3(signature = (instance, max_placements = None, max_paths = None))]
fn exact_solve(
    instance: &Instance,
    max_placements: Option<u64>,
    max_paths: Option<usize>,
) -> PyResult<(String, Option<f64>, Vec<String>)> {
    let problem = instance.problem()?;
    let mut limits = OracleLimits::default();
    if let Some(m) = max_placements {
        limits.max_placements = m;
    }
    if let Some(p) = max_paths {
        limits.max_paths = p;
    }
    let outcome = core_exact_solve(&problem, &limits).map_err(value_err)?;
    Ok(match outcome {
        OracleOutcome::Optimal { objective, placement, .. } => (
            "optimal".into(),
            Some(objective),
            placement.activated.iter().map(|&v| problem.cloud_name(v).to_string()).collect(),
        ),
        OracleOutcome::Infeasible => ("infeasible".into(), None, vec![]),
        OracleOutcome::LimitExceeded { best_objective, .. } => ("limit_exceeded".into(), best_objective, vec![]),
    })
}

/// Returns `(feasible, violation codes, recomputed objective)`.
#[pyfunction]
fn validate(instance: &Instance, solution: &Solution) -> (bool, Vec<String>, Option<f64>) {
    let report = validate_solution(&instance.inner, &solution.inner);
    let codes = report.violations.iter().map(|v| v.code.clone()).collect();
    (report.is_feasible(), codes, report.objective)
}

/// The relaxation in fixed MPS.
#[pyfunction]
fn export_mps(instance: &Instance) -> PyResult<String> {
    let (model, _) = build_relaxation(&instance.problem()?);
    Ok(mps::export_mps(&model).text)
}

/// Runs an experiment config (JSON) and returns the metrics CSV.
#[pyfunction]
#[pyo3(signature = (config, output_dir = None))]
fn run_experiment(py: Python<'_>, config: &str, output_dir: Option<PathBuf>) -> PyResult<String> {
    let mut cfg = ExperimentConfig::from_json(config).map_err(value_err)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let out = py.detach(|| run_core_experiment(&cfg)).map_err(value_err)?;
    Ok(metrics_csv(&out.metrics))
}

#[pymodule]
fn nslice(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(round_placement, m)?)?;
    m.add_function(wrap_pyfunction!(exact_solve, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(export_mps, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
