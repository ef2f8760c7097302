//! Scenario driver: resolves a config, runs a solver, writes CSV/JSON
//! outputs, and fans parameter sweeps out over a thread pool.

pub mod config;
pub mod error;
pub mod output;
pub mod solve;

use clap::{Parser, Subcommand};
use config::{Axis, Overrides, ScenarioConfig, Solver};
use error::CliError;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const OUT_DIR_ENV: &str = "PYRAGAS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "pyragas",
    version,
    about = "Cavity feedback solvers and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario.
    Run {
        #[command(flatten)]
        scenario: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark scenario; exits 1 if it fails its check.
    Benchmark {
        #[command(flatten)]
        scenario: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one scenario per value of a parameter.
    Sweep {
        #[command(flatten)]
        scenario: Overrides,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..=1, allow_negative_numbers = true)]
        values: Vec<f64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolve and check a scenario without running it; prints the
    /// resolved config.
    Validate {
        #[command(flatten)]
        scenario: Overrides,
    },
}

pub fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn run_one(config: &ScenarioConfig, dir: &Path) -> Result<solve::Outcome, CliError> {
    let start = Instant::now();
    let out = solve::execute(config)?;
    output::write_all(dir, config, &out, start.elapsed().as_secs_f64())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub dir: String,
    pub retained: Option<f64>,
    pub peak_photon_number: Option<f64>,
    pub stabilization_cv: Option<f64>,
    pub oracle_max: Option<f64>,
}

pub fn sweep(
    base: &ScenarioConfig,
    axis: Axis,
    values: &[f64],
    jobs: Option<usize>,
    dir: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config(
            "sweep needs at least one value (--values)".into(),
        ));
    }
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|&v| axis.apply(base, v))
        .collect::<Result<_, _>>()?;
    std::fs::create_dir_all(dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let rows: Vec<Result<SweepRow, CliError>> = pool.install(|| {
        configs
            .par_iter()
            .zip(values.par_iter())
            .enumerate()
            .map(|(k, (c, &value))| {
                let name = format!("{}_{k:03}", axis.name());
                let out = run_one(c, &dir.join(&name))?;
                Ok(SweepRow {
                    value,
                    dir: name,
                    retained: solve::retained_excitation(c, &out),
                    peak_photon_number: out
                        .observable("photon_number")
                        .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                    stabilization_cv: out.stabilization_cv,
                    oracle_max: out.oracle.first().map(|o| o.deviation.max),
                })
            })
            .collect()
    });
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        axis.name(),
        "dir",
        "retained",
        "peak_photon_number",
        "stabilization_cv",
        "oracle_max",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for r in &rows {
        w.write_record([
            format!("{:e}", r.value),
            r.dir.clone(),
            opt(r.retained),
            opt(r.peak_photon_number),
            opt(r.stabilization_cv),
            opt(r.oracle_max),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Executes a parsed command line. Returns the process exit code.
pub fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run { scenario, out } => {
            let c = config::resolve(&scenario)?;
            let dir = out_dir(out);
            let o = run_one(&c, &dir)?;
            eprintln!("wrote {}", dir.display());
            for check in &o.oracle {
                eprintln!("{}: max deviation {:e}", check.name, check.deviation.max);
            }
            Ok(0)
        }
        Command::Benchmark { mut scenario, out } => {
            if scenario.solver.is_some_and(|s| s != Solver::Benchmark) {
                return Err(CliError::Config(
                    "benchmark ignores --solver; omit it".into(),
                ));
            }
            scenario.solver = Some(Solver::Benchmark);
            let c = config::resolve(&scenario)?;
            let dir = out_dir(out);
            let o = run_one(&c, &dir)?;
            for (k, v) in &o.summary {
                eprintln!("{k}: {v:e}");
            }
            let passed = o.passed.unwrap_or(true);
            eprintln!("benchmark {}", if passed { "passed" } else { "FAILED" });
            Ok(if passed { 0 } else { 1 })
        }
        Command::Sweep {
            scenario,
            axis,
            values,
            jobs,
            out,
        } => {
            let c = config::resolve(&scenario)?;
            let dir = out_dir(out);
            let rows = sweep(&c, axis, &values, jobs, &dir)?;
            eprintln!(
                "{} runs, summary in {}",
                rows.len(),
                dir.join("summary.csv").display()
            );
            Ok(0)
        }
        Command::Validate { scenario } => {
            let c = config::resolve(&scenario)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&c).expect("serializable")
            );
            Ok(0)
        }
    }
}
