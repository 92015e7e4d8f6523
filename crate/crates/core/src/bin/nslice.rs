use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use nslice_core::formulation::build_relaxation;
use nslice_core::harness::{run_experiment, ExperimentConfig};
use nslice_core::lp::mps::export_mps;
use nslice_core::model::{generate_instance, GeneratorParams, Instance, Problem};
use nslice_core::solution::{solve_problem, Method, SolutionDoc, SolveOptions, SolveStatus};
use nslice_core::validate::validate_solution;

/// LP rounding and refinement for NFV network slicing.
#[derive(Parser)]
#[command(name = "nslice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Generate {
        /// Generator parameters as JSON; missing fields take defaults.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        services: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve an instance.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "lprr")]
        method: Method,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long = "iter-max")]
        iter_max: Option<usize>,
        /// Accepted for uniformity; every solver is deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a solution against an instance; exit 0 iff feasible.
    Validate { instance: PathBuf, solution: PathBuf },
    /// Run an experiment config.
    Experiment {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the relaxation as fixed MPS, plus a `.names` table when writing a file.
    ExportMps {
        instance: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Internal(e.into())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Usage)
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    Instance::from_json(&read(path)?).with_context(|| format!("loading {}", path.display())).map_err(Failure::Usage)
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{}", text.trim_end()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Generate { params, services, seed, output } => {
            let mut p: GeneratorParams = match params {
                Some(path) => serde_json::from_str(&read(&path)?).map_err(|e| Failure::Usage(e.into()))?,
                None => GeneratorParams::default(),
            };
            if let Some(k) = services {
                p.service_count = k;
            }
            if let Some(s) = seed {
                p.seed = s;
            }
            let inst = generate_instance(&p).map_err(|e| Failure::Usage(e.into()))?;
            emit(output.as_deref(), &inst.to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { instance, method, sigma, paths, rho, iter_max, seed: _, output } => {
            let mut inst = load_instance(&instance)?;
            if let Some(s) = sigma {
                inst.sigma = s;
            }
            if let Some(p) = paths {
                inst.path_budget = p;
            }
            let mut options = SolveOptions::default();
            if let Some(r) = rho {
                options.refinement.rho = r;
            }
            if let Some(i) = iter_max {
                options.refinement.iter_max = i;
            }
            if !(options.refinement.rho > 1.0) || options.refinement.iter_max == 0 {
                return Err(Failure::Usage(anyhow::anyhow!("--rho must exceed 1 and --iter-max must be positive")));
            }
            let problem = Problem::new(&inst).map_err(|e| Failure::Usage(e.into()))?;
            let start = std::time::Instant::now();
            let mut doc = solve_problem(&problem, method, &options);
            doc.stats.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            emit(output.as_deref(), &doc.to_json())?;
            Ok(match doc.status {
                SolveStatus::Feasible => ExitCode::SUCCESS,
                SolveStatus::Error => ExitCode::from(3),
                _ => ExitCode::from(1),
            })
        }
        Command::Validate { instance, solution } => {
            let inst = load_instance(&instance)?;
            let doc = SolutionDoc::from_json(&read(&solution)?).map_err(|e| Failure::Usage(e.into()))?;
            let report = validate_solution(&inst, &doc);
            println!("{}", serde_json::to_string_pretty(&report)?);
            for v in &report.violations {
                eprintln!("violation {}: {}", v.code, v.detail);
            }
            Ok(if report.is_feasible() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Experiment { config, out } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?).map_err(|e| Failure::Usage(e.into()))?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let result = run_experiment(&cfg)?;
            for (k, seed, m) in result.budget_violations() {
                eprintln!("LP-solve budget exceeded: method {m}, k={k}, seed index {seed}");
            }
            eprintln!("wrote {} records and {}", result.records.len(), cfg.output_dir.join("metrics.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportMps { instance, output } => {
            let problem = Problem::new(&load_instance(&instance)?).map_err(|e| Failure::Usage(e.into()))?;
            let (model, _) = build_relaxation(&problem);
            let mps = export_mps(&model);
            emit(output.as_deref(), &mps.text)?;
            if let Some(p) = output {
                let mut names = p.into_os_string();
                names.push(".names");
                fs::write(&names, mps.name_table()).with_context(|| format!("writing {names:?}"))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}
