//! Experiment runner: sweeps service counts and seeds, runs each method,
//! validates every claimed solution and aggregates the results.
//!
//! `metrics.csv` columns:
//!
//! - `feasible_count`: runs whose solution passed the validator.
//! - `mean_activated`: mean activated clouds over instances that every
//!   configured method solved; empty when there are none.
//! - `mean_wall_ms`: mean solver time over all runs, failed ones included.
//!   In the default `work` timing mode this holds simplex pivots (search
//!   nodes for the oracle) rather than milliseconds, keeping output
//!   reproducible; `wall` timing records milliseconds.
//! - `time_ratio`: mean over instances of `time(method) / time(lpr_baseline)`,
//!   failed runs included; empty when the baseline is not configured.

use std::fs;
use std::io;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{generate_instance, GenerateError, GeneratorParams, Problem};
use crate::oracle::OracleLimits;
use crate::routing::RefinementConfig;
use crate::solution::{solve_problem, Method, SolveOptions, SolveStatus};
use crate::validate::validate_solution;

pub const CSV_HEADER: &str = "method,k,feasible_count,mean_activated,mean_wall_ms,time_ratio";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Work,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Template; `service_count` and `seed` are set per instance.
    pub generator: GeneratorParams,
    pub service_counts: Vec<usize>,
    pub seeds: usize,
    pub methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub refinement: RefinementConfig,
    pub oracle_limits: OracleLimits,
    pub timing: Timing,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generator: GeneratorParams::default(),
            service_counts: (1..=6).collect(),
            seeds: 20,
            methods: vec![Method::Lprr, Method::LprBaseline],
            output_dir: PathBuf::from("results"),
            refinement: RefinementConfig::default(),
            oracle_limits: OracleLimits::default(),
            timing: Timing::Work,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.into()));
        if self.service_counts.is_empty() || self.service_counts.contains(&0) {
            return bad("service_counts must be nonempty and positive");
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty");
        }
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        if m.len() != self.methods.len() {
            return bad("methods must be distinct");
        }
        Ok(())
    }

    /// Generator seed of instance `index` in the `k`-service family.
    pub fn instance_seed(&self, k: usize, index: usize) -> u64 {
        self.generator.seed.wrapping_add(1_000 * k as u64).wrapping_add(index as u64)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance k={k} seed={seed}: {source}")]
    Generate { k: usize, seed: u64, source: GenerateError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: Method,
    /// Status claimed by the solver; `None` when it panicked.
    pub status: Option<SolveStatus>,
    /// Claimed feasible and accepted by the validator.
    pub feasible: bool,
    pub violations: Vec<String>,
    pub activated: Option<usize>,
    pub objective: Option<f64>,
    pub placement_lp_solves: usize,
    pub routing_lp_solves: usize,
    pub within_budget: bool,
    /// Pivots or milliseconds, per the timing mode.
    pub time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub k: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub runs: Vec<MethodRecord>,
}

impl InstanceRecord {
    pub fn run(&self, m: Method) -> Option<&MethodRecord> {
        self.runs.iter().find(|r| r.method == m)
    }

    pub fn file_name(&self) -> String {
        format!("k{}_seed{:03}.json", self.k, self.seed_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub k: usize,
    pub feasible_count: usize,
    pub mean_activated: Option<f64>,
    pub mean_wall_ms: f64,
    pub time_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<InstanceRecord>,
    pub metrics: Vec<MetricsRow>,
}

impl ExperimentOutput {
    /// Runs whose LP-solve counts exceeded their budgets.
    pub fn budget_violations(&self) -> Vec<(usize, usize, Method)> {
        self.records
            .iter()
            .flat_map(|r| r.runs.iter().filter(|m| !m.within_budget).map(move |m| (r.k, r.seed_index, m.method)))
            .collect()
    }
}

fn run_method(
    problem: &Problem,
    instance: &crate::model::Instance,
    method: Method,
    cfg: &ExperimentConfig,
) -> MethodRecord {
    let options = SolveOptions { refinement: cfg.refinement.clone(), oracle_limits: cfg.oracle_limits.clone() };
    let start = Instant::now();
    let solved = catch_unwind(AssertUnwindSafe(|| solve_problem(problem, method, &options)));
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match solved {
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            MethodRecord {
                method,
                status: None,
                feasible: false,
                violations: Vec::new(),
                activated: None,
                objective: None,
                placement_lp_solves: 0,
                routing_lp_solves: 0,
                within_budget: true,
                time: if cfg.timing == Timing::Wall { wall_ms } else { 0.0 },
                message: Some(format!("crashed: {msg}")),
            }
        }
        Ok(doc) => {
            let (feasible, violations) = if doc.is_feasible() {
                let report = validate_solution(instance, &doc);
                (report.is_feasible(), report.violations.into_iter().map(|v| v.code).collect())
            } else {
                (false, Vec::new())
            };
            MethodRecord {
                method,
                status: Some(doc.status),
                feasible,
                violations,
                activated: doc.is_feasible().then_some(doc.activated.len()),
                objective: if doc.is_feasible() { doc.objective } else { None },
                placement_lp_solves: doc.stats.placement_lp_solves,
                routing_lp_solves: doc.stats.routing_lp_solves,
                within_budget: doc.stats.within_budgets(),
                time: match cfg.timing {
                    Timing::Work => doc.stats.work as f64,
                    Timing::Wall => wall_ms,
                },
                message: doc.stats.message,
            }
        }
    }
}

/// Runs every `(k, seed)` instance; instances run in parallel, results are
/// in sweep order. Nothing is written to disk.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.check()?;
    let jobs: Vec<(usize, usize)> =
        cfg.service_counts.iter().flat_map(|&k| (0..cfg.seeds).map(move |i| (k, i))).collect();
    let records: Vec<InstanceRecord> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let seed = cfg.instance_seed(k, i);
            let params = GeneratorParams { service_count: k, seed, ..cfg.generator.clone() };
            let instance = generate_instance(&params).map_err(|source| HarnessError::Generate { k, seed, source })?;
            let problem = Problem::new(&instance).expect("generated instances are valid");
            let runs = cfg.methods.iter().map(|&m| run_method(&problem, &instance, m, cfg)).collect();
            Ok(InstanceRecord { k, seed_index: i, seed, runs })
        })
        .collect::<Result<_, HarnessError>>()?;
    let metrics = aggregate(&records, &cfg.methods);
    Ok(ExperimentOutput { records, metrics })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates records into one row per `(method, k)`, methods in the given
/// order and `k` ascending.
pub fn aggregate(records: &[InstanceRecord], methods: &[Method]) -> Vec<MetricsRow> {
    let mut ks: Vec<usize> = records.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut rows = Vec::new();
    for &m in methods {
        for &k in &ks {
            let group: Vec<&InstanceRecord> = records.iter().filter(|r| r.k == k).collect();
            let runs: Vec<&MethodRecord> = group.iter().filter_map(|r| r.run(m)).collect();
            let common = group.iter().filter(|r| methods.iter().all(|&o| r.run(o).is_some_and(|x| x.feasible)));
            let mean_activated = mean(common.filter_map(|r| r.run(m)?.activated.map(|a| a as f64)));
            let time_ratio = if methods.contains(&Method::LprBaseline) {
                mean(group.iter().filter_map(|r| {
                    let base = r.run(Method::LprBaseline)?.time;
                    (base > 0.0).then(|| r.run(m).map(|x| x.time / base)).flatten()
                }))
            } else {
                None
            };
            rows.push(MetricsRow {
                method: m,
                k,
                feasible_count: runs.iter().filter(|r| r.feasible).count(),
                mean_activated,
                mean_wall_ms: mean(runs.iter().map(|r| r.time)).unwrap_or(0.0),
                time_ratio,
            });
        }
    }
    rows
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            r.k.to_string(),
            r.feasible_count.to_string(),
            opt(r.mean_activated),
            format!("{:.6}", r.mean_wall_ms),
            opt(r.time_ratio),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

/// Runs the sweep and writes `records/*.json` and `metrics.csv` under the
/// output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let out = run_sweep(cfg)?;
    let records_dir = cfg.output_dir.join("records");
    fs::create_dir_all(&records_dir).map_err(|source| HarnessError::Io { path: records_dir.clone(), source })?;
    for r in &out.records {
        let text = serde_json::to_string_pretty(r).expect("record serializes") + "\n";
        write(&records_dir.join(r.file_name()), &text)?;
    }
    write(&cfg.output_dir.join("metrics.csv"), &metrics_csv(&out.metrics))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            generator: GeneratorParams {
                node_count: 7,
                link_count: 16,
                cloud_count: 2,
                sfc_length: 1,
                ..Default::default()
            },
            service_counts: vec![1],
            seeds: 3,
            methods,
            ..Default::default()
        }
    }

    #[test]
    fn bookkeeping() {
        let out = run_sweep(&small(vec![Method::Lprr, Method::Oracle])).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.metrics.len(), 2);
        assert!(out.budget_violations().is_empty());
        for r in &out.records {
            if let (Some(a), Some(o)) = (r.run(Method::Lprr), r.run(Method::Oracle)) {
                if a.feasible && o.feasible {
                    assert!(a.objective.unwrap() >= o.objective.unwrap() - 1e-6);
                }
            }
        }
    }

    #[test]
    fn baseline_ratio_to_itself_is_one() {
        let out = run_sweep(&small(vec![Method::LprBaseline, Method::Lprr])).unwrap();
        assert_eq!(out.metrics[0].time_ratio, Some(1.0));
        let csv = metrics_csv(&out.metrics);
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn aggregate_uses_common_feasible_set() {
        let rec = |k, i, a: Option<usize>, b: Option<usize>| InstanceRecord {
            k,
            seed_index: i,
            seed: 0,
            runs: [(Method::Lprr, a), (Method::LprBaseline, b)]
                .into_iter()
                .map(|(method, act)| MethodRecord {
                    method,
                    status: None,
                    feasible: act.is_some(),
                    violations: vec![],
                    activated: act,
                    objective: None,
                    placement_lp_solves: 0,
                    routing_lp_solves: 0,
                    within_budget: true,
                    time: 2.0,
                    message: None,
                })
                .collect(),
        };
        let recs = vec![rec(1, 0, Some(1), Some(3)), rec(1, 1, Some(2), None)];
        let rows = aggregate(&recs, &[Method::Lprr, Method::LprBaseline]);
        assert_eq!(rows[0].feasible_count, 2);
        assert_eq!(rows[0].mean_activated, Some(1.0));
        assert_eq!(rows[1].mean_activated, Some(3.0));
        assert_eq!(rows[1].feasible_count, 1);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_json(r#"{"seeds": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"service_counts": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"methods": ["lprr", "lprr"]}"#).is_err());
        let cfg = ExperimentConfig::from_json(r#"{"methods": ["oracle"], "timing": "wall"}"#).unwrap();
        assert_eq!(cfg.timing, Timing::Wall);
        assert_eq!(cfg.seeds, 20);
    }
}
