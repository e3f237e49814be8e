//! Experiment CLI: `run` executes a configured experiment and writes trace
//! and summary artifacts, `verify` runs the seeded property suites, and
//! `info` inspects a recorded trace.

mod config;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use config::{AsyncConfig, ExperimentConfig};
use dpbm::graph::metropolis_weights;
use dpbm::metrics::{reference_optimum, write_trace_csv, RunSummary};
use dpbm::sim::{run_simulation, run_threaded, Trace};
use dpbm::verify::{run_suite, Suite};
use dpbm::Vector;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(name = "dpbm", about = "Decentralized proximal bundle method experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a JSON config file.
    Run { config: PathBuf },
    /// Run a verification suite: subproblem | minorant | reduction | schedule.
    Verify { suite: String },
    /// Summarize a recorded binary trace.
    Info { trace: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { config } => cmd_run(&config),
        Cmd::Verify { suite } => cmd_verify(&suite),
        Cmd::Info { trace } => cmd_info(&trace),
    };
    std::process::exit(code);
}

fn structured_error(kind: &str, detail: serde_json::Value) {
    let body = serde_json::json!({ "error": kind, "detail": detail });
    eprintln!("{}", serde_json::to_string_pretty(&body).unwrap());
}

fn cmd_run(path: &Path) -> i32 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            structured_error("io", serde_json::json!(format!("{path:?}: {e}")));
            return 1;
        }
    };
    let cfg: ExperimentConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            structured_error("parse", serde_json::json!(e.to_string()));
            return 2;
        }
    };
    let field_errors = cfg.validate();
    if !field_errors.is_empty() {
        structured_error("config", serde_json::json!(field_errors));
        return 2;
    }
    match execute_run(&cfg) {
        Ok(summary_line) => {
            println!("{summary_line}");
            0
        }
        Err(e) => {
            structured_error("runtime", serde_json::json!(format!("{e:#}")));
            1
        }
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &cfg.output_dir {
        return PathBuf::from(dir);
    }
    if let Ok(root) = std::env::var("DPBM_OUT") {
        return PathBuf::from(root);
    }
    PathBuf::from(".")
}

fn execute_run(cfg: &ExperimentConfig) -> anyhow::Result<String> {
    let resolved = cfg.normalized();
    let graph = resolved.build_graph()?;
    let n = graph.n();
    let problem = resolved.build_problem(n)?;
    let algo = resolved.build_algo();
    let weights = metropolis_weights(&graph);
    let x0 = vec![Vector::zeros(problem.dim); n];

    let trace = match resolved.build_schedule(&graph) {
        Some(schedule) => run_simulation(
            &problem,
            &graph,
            &weights,
            &algo,
            &schedule,
            resolved.iterations,
            &x0,
            resolved.seed,
            resolved.snapshot_stride,
        )?,
        None => {
            let AsyncConfig::Threaded { wall_budget_secs } = &resolved.asynchrony else {
                unreachable!("no schedule implies threaded mode");
            };
            run_threaded(
                &problem,
                &graph,
                &weights,
                &algo,
                resolved.iterations,
                Duration::from_secs(*wall_budget_secs),
                &x0,
                resolved.seed,
            )?
        }
    };

    let reference = reference_optimum(&problem, resolved.reference_tol)?;
    let summary = RunSummary::from_trace(&trace, &problem, &reference)?;

    let dir = output_dir(&resolved);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {dir:?}"))?;

    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &trace, &problem, reference.objective)?;
    std::fs::write(dir.join("trace.csv"), csv)?;

    let mut bin = Vec::new();
    trace.write_to(&mut bin)?;
    std::fs::write(dir.join("trace.bin"), bin)?;

    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    std::fs::write(
        dir.join("resolved_config.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;

    Ok(format!(
        "run complete: {} nodes, {} updates, final error {:.6e} (artifacts in {})",
        summary.nodes,
        summary.update_count,
        summary.final_objective_error,
        dir.display()
    ))
}

fn cmd_verify(name: &str) -> i32 {
    let Some(suite) = Suite::parse(name) else {
        structured_error(
            "usage",
            serde_json::json!(format!(
                "unknown suite {name:?}; expected one of subproblem, minorant, reduction, schedule"
            )),
        );
        return 2;
    };
    match run_suite(suite) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            if report.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            structured_error("runtime", serde_json::json!(format!("{e:#}")));
            1
        }
    }
}

fn cmd_info(path: &Path) -> i32 {
    match read_trace(path) {
        Ok(trace) => {
            let (last_tick, final_state) = trace.snapshots.last().expect("nonempty trace");
            let consensus = dpbm::metrics::consensus_error(final_state);
            let body = serde_json::json!({
                "nodes": trace.n,
                "dim": trace.dim,
                "seed": trace.seed,
                "stride": trace.stride,
                "snapshots": trace.snapshots.len(),
                "updates": trace.updates.len(),
                "last_tick": last_tick,
                "final_consensus_error": consensus,
                "max_observed_delay": trace.delays.max,
                "mean_observed_delay": trace.delays.mean(),
            });
            println!("{}", serde_json::to_string_pretty(&body).unwrap());
            0
        }
        Err(e) => {
            structured_error("io", serde_json::json!(format!("{e:#}")));
            1
        }
    }
}

fn read_trace(path: &Path) -> anyhow::Result<Trace> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {path:?}"))?;
    if bytes.is_empty() {
        bail!("trace file is empty");
    }
    Ok(Trace::read_from(&mut bytes.as_slice())?)
}
