//! `fracflow` command-line interface.
//!
//! Exit codes: 0 when every check passes, 1 when a mathematical check or a
//! solver fails, 2 on bad input or usage.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracflow::diagnostics::{DiagnosticsReport, Thresholds};
use fracflow::flow::{evolve_direct, picard_solve, steady_state, StepStats};
use fracflow::{FlowConfig, FractionalKernel, QuadratureConfig, SpectralDecomposition, Trajectory};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use config::{load_graph, RunArgs, RunConfig, Solver};
use output::{matrix_csv, num, series, trajectory_csv, write_file, write_json, write_plots};

/// Output spacing used by `verify` when none is given. The time quadratures
/// in the diagnostics need a finer grid than the `T/200` default.
const VERIFY_MAX_DT_OUT: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] fracflow::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use fracflow::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Core(
                E::Parse(_)
                | E::InvalidGraph(_)
                | E::LengthMismatch { .. }
                | E::ExponentOutOfRange { .. }
                | E::InvalidConfig(_)
                | E::NegativeTime(_),
            ) => 2,
            CliError::Core(_) | CliError::Failed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fracflow", version, about = "Fractional p-Laplacian flows on weighted graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the fractional kernel W_s of a graph.
    Kernel(KernelArgs),
    /// Solve the flow and write the trajectory.
    Evolve(RunArgs),
    /// Solve the flow and check the energy estimates.
    Verify(RunArgs),
    /// Solve the flow over a grid of (s, p, q), in parallel.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    s: f64,
    #[arg(long, env = "FRACFLOW_OUTPUT_DIR", default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    s_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    q_list: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Kernel(args) => cmd_kernel(&args),
        Command::Evolve(args) => args.resolve().and_then(|run| cmd_evolve(&run)),
        Command::Verify(args) => args.resolve().and_then(|run| cmd_verify(&run)),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Serialize)]
struct KernelReport {
    s: f64,
    positive: bool,
    min_off_diagonal: f64,
    max_asymmetry: f64,
    oracle_max_relative_deviation: Option<f64>,
    oracle_error: Option<String>,
    passed: bool,
}

fn cmd_kernel(args: &KernelArgs) -> Result<(), CliError> {
    if !(args.s > 0.0 && args.s < 1.0) {
        return Err(CliError::Usage(format!("s must lie in (0, 1), got {}", args.s)));
    }
    let graph = load_graph(&args.graph)?;
    let dec = SpectralDecomposition::new(&graph)?;
    let w = dec.power_kernel(args.s);
    let n = graph.n();

    let mut min_off = f64::INFINITY;
    let mut asym: f64 = 0.0;
    let scale = w.amax();
    for x in 0..n {
        for y in 0..n {
            if x != y {
                min_off = min_off.min(w[(x, y)]);
                asym = asym.max((w[(x, y)] - w[(y, x)]).abs() / scale);
            }
        }
    }
    let positivity = dec.kernel_weights(args.s);
    let (oracle_dev, oracle_err) = match dec.kernel_weights_oracle(args.s, &QuadratureConfig::default()) {
        Ok(o) => {
            let mut dev: f64 = 0.0;
            for x in 0..n {
                for y in 0..n {
                    if x != y {
                        dev = dev.max((w[(x, y)] - o[(x, y)]).abs() / w[(x, y)].abs());
                    }
                }
            }
            (Some(dev), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let positive = min_off > 0.0;
    let report = KernelReport {
        s: args.s,
        positive,
        min_off_diagonal: min_off,
        max_asymmetry: asym,
        oracle_max_relative_deviation: oracle_dev,
        oracle_error: oracle_err,
        passed: positive && positivity.is_ok() && asym <= 1e-12,
    };

    let dir = &args.output_dir;
    write_file(&dir.join("kernel.csv"), &matrix_csv(graph.labels(), |x, y| w[(x, y)]))?;
    write_json(
        &dir.join("eigenvalues.json"),
        &json!({ "labels": graph.labels(), "eigenvalues": dec.eigenvalues() }),
    )?;
    write_json(&dir.join("kernel_report.json"), &report)?;

    println!("min off-diagonal W_s: {}", num(min_off));
    println!("max asymmetry:        {asym:.3e}");
    if let Some(d) = oracle_dev {
        println!("oracle deviation:     {d:.3e}");
    }
    positivity?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Failed("kernel symmetry check failed".into()))
    }
}

struct Solved {
    trajectory: Trajectory,
    picard: Option<(usize, Vec<f64>)>,
}

fn solve(kernel: &FractionalKernel, run: &RunConfig, flow: &FlowConfig) -> Result<Solved, fracflow::Error> {
    match run.solver {
        Solver::Direct => Ok(Solved {
            trajectory: evolve_direct(kernel, &run.u0, flow)?,
            picard: None,
        }),
        Solver::Picard => {
            let out = picard_solve(kernel, &run.u0, flow)?;
            Ok(Solved {
                trajectory: out.trajectory,
                picard: Some((out.iterations, out.history)),
            })
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    status: &'static str,
    error: Option<&'static str>,
    message: Option<String>,
    graph: &'a Path,
    n: usize,
    solver: Solver,
    config: &'a FlowConfig,
    u0: config::U0Metadata<'a>,
    steady_state: f64,
    steady_state_error: Option<f64>,
    picard_iterations: Option<usize>,
    picard_history: Option<&'a [f64]>,
    output_points: Option<usize>,
    step_stats: Option<StepStats>,
}

fn summary<'a>(run: &'a RunConfig, flow: &'a FlowConfig, solved: Option<&'a Solved>, steady: f64) -> Summary<'a> {
    Summary {
        status: "ok",
        error: None,
        message: None,
        graph: &run.graph_path,
        n: run.graph.n(),
        solver: run.solver,
        config: flow,
        u0: run.u0_metadata(),
        steady_state: steady,
        steady_state_error: solved.map(|s| s.trajectory.last().u.iter().map(|v| (v - steady).abs()).fold(0.0, f64::max)),
        picard_iterations: solved.and_then(|s| s.picard.as_ref().map(|p| p.0)),
        picard_history: solved.and_then(|s| s.picard.as_ref().map(|p| p.1.as_slice())),
        output_points: solved.map(|s| s.trajectory.len()),
        step_stats: solved.map(|s| s.trajectory.step_stats),
    }
}

fn failed_summary<'a>(run: &'a RunConfig, flow: &'a FlowConfig, steady: f64, err: &'a fracflow::Error) -> Summary<'a> {
    let mut s = summary(run, flow, None, steady);
    s.status = "failed";
    s.error = Some(err.name());
    s.message = Some(err.to_string());
    if let fracflow::Error::PicardNotConverged { iterations, history, .. } = err {
        s.picard_iterations = Some(*iterations);
        s.picard_history = Some(history);
    }
    s
}

/// Runs one solve into `dir`, writing the trajectory and summary (or the
/// failure summary).
fn evolve_into(run: &RunConfig, flow: &FlowConfig, dir: &Path) -> Result<Solved, CliError> {
    let kernel = FractionalKernel::from_graph(&run.graph, flow.s)?;
    let steady = steady_state(&run.graph, &run.u0, flow.q)?;
    let solved = match solve(&kernel, run, flow) {
        Ok(s) => s,
        Err(e) => {
            write_json(&dir.join("summary.json"), &failed_summary(run, flow, steady, &e))?;
            return Err(e.into());
        }
    };
    let series = series(&solved.trajectory, &kernel)?;
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(&solved.trajectory, &series))?;
    write_json(&dir.join("summary.json"), &summary(run, flow, Some(&solved), steady))?;
    if run.emit_plots {
        write_plots(dir, &series)?;
    }
    Ok(solved)
}

fn cmd_evolve(run: &RunConfig) -> Result<(), CliError> {
    let solved = evolve_into(run, &run.flow, &run.output_dir)?;
    let last = solved.trajectory.last();
    println!("t = {}: min u = {}, max u = {}", num(last.t), num(last.u.min()), num(last.u.max()));
    if let Some((iters, _)) = solved.picard {
        println!("picard iterations: {iters}");
    }
    Ok(())
}

fn cmd_verify(run: &RunConfig) -> Result<(), CliError> {
    let mut flow = run.flow;
    if !run.explicit_dt_out {
        flow.dt_out = Some((flow.horizon / 200.0).min(VERIFY_MAX_DT_OUT));
    }
    let kernel = FractionalKernel::from_graph(&run.graph, flow.s)?;
    let dir = &run.output_dir;
    let solved = match solve(&kernel, run, &flow) {
        Ok(s) => s,
        Err(e) => {
            let steady = steady_state(&run.graph, &run.u0, flow.q)?;
            write_json(&dir.join("summary.json"), &failed_summary(run, &flow, steady, &e))?;
            return Err(e.into());
        }
    };
    let report = DiagnosticsReport::compute(&solved.trajectory, &kernel)?;
    let thresholds = Thresholds::default();
    let checks = report.checks(&thresholds);
    let passed = checks.iter().all(|c| c.passed);
    write_json(
        &dir.join("report.json"),
        &json!({
            "graph": run.graph_path,
            "solver": run.solver,
            "config": flow,
            "u0": run.u0_metadata(),
            "picard_iterations": solved.picard.as_ref().map(|p| p.0),
            "report": report,
            "thresholds": thresholds,
            "checks": checks,
            "passed": passed,
        }),
    )?;
    for c in &checks {
        println!(
            "{} {:<22} {:.6e} <= {:.6e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    if passed {
        Ok(())
    } else {
        let names: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Err(CliError::Failed(format!("failed checks: {}", names.join(", "))))
    }
}

#[derive(Serialize)]
struct SweepRecord {
    s: f64,
    p: f64,
    q: f64,
    dir: String,
    status: &'static str,
    error: Option<String>,
    steady_state_error: Option<f64>,
    picard_iterations: Option<usize>,
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut skip = Vec::new();
    for (name, list) in [("s", &args.s_list), ("p", &args.p_list), ("q", &args.q_list)] {
        if list.is_some() {
            skip.push(name);
        }
    }
    let run = args.run.resolve_with(&skip)?;
    let values = |list: &Option<Vec<f64>>, single: f64| list.clone().unwrap_or_else(|| vec![single]);
    let mut configs = Vec::new();
    for s in values(&args.s_list, run.flow.s) {
        for p in values(&args.p_list, run.flow.p) {
            for q in values(&args.q_list, run.flow.q) {
                let flow = FlowConfig { s, p, q, ..run.flow };
                flow.validate()?;
                configs.push(flow);
            }
        }
    }

    let records: Vec<SweepRecord> = configs
        .par_iter()
        .map(|flow| {
            let name = format!("s{}_p{}_q{}", flow.s, flow.p, flow.q);
            let dir = run.output_dir.join(&name);
            let outcome = evolve_into(&run, flow, &dir);
            let (status, error, sse, iters) = match &outcome {
                Ok(solved) => {
                    let steady = steady_state(&run.graph, &run.u0, flow.q).unwrap_or(f64::NAN);
                    let sse = solved.trajectory.last().u.iter().map(|v| (v - steady).abs()).fold(0.0, f64::max);
                    ("ok", None, Some(sse), solved.picard.as_ref().map(|p| p.0))
                }
                Err(CliError::Core(e)) => ("failed", Some(e.name().to_string()), None, None),
                Err(e) => ("failed", Some(e.to_string()), None, None),
            };
            SweepRecord {
                s: flow.s,
                p: flow.p,
                q: flow.q,
                dir: name,
                status,
                error,
                steady_state_error: sse,
                picard_iterations: iters,
            }
        })
        .collect();

    write_json(
        &run.output_dir.join("sweep.json"),
        &json!({ "graph": run.graph_path, "solver": run.solver, "u0": run.u0_metadata(), "runs": records }),
    )?;
    let failed = records.iter().filter(|r| r.status != "ok").count();
    for r in &records {
        println!("{:<6} s={} p={} q={} {}", r.status, r.s, r.p, r.q, r.error.as_deref().unwrap_or(""));
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} of {} runs failed", records.len())))
    }
}
