use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use swarmplan::bezier::PiecewiseBezierTrajectory;
use swarmplan::discrete::{build_environment_graph, build_pruned_flow_graph, postprocess, DiscretePlan};
use swarmplan::exec::{with_jobs, ExecMode};
use swarmplan::opt::export_lp;
use swarmplan::pipeline::{
    self, load_trajectories, trajectory_file_name, PlanOptions, CORRIDOR_FILE, REFINEMENT_FILE, TRAJECTORY_DIR,
    VALIDATION_FILE,
};
use swarmplan::refine::{refine_with, RefineSettings};
use swarmplan::scenario::{load_scenario, ScenarioSpec};
use swarmplan::validate::{dynamics_metrics, mapf_oracle, validate_trajectories, ValidationReport, DEFAULT_SAMPLE_DT};
use swarmplan::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "swarmplan", version, about = "Smooth, collision-free trajectories for quadrotor teams on a grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete plan, refinement and export in one go.
    Plan(PlanArgs),
    /// Refine an existing discrete plan.
    Refine(RefineArgs),
    /// Check exported trajectories against a scenario.
    Validate(ValidateArgs),
    /// Resample exported trajectories at a fixed rate.
    Export(ExportArgs),
    /// Brute-force minimal makespan for tiny scenarios.
    Oracle(OracleArgs),
    /// Peak acceleration and body rate of exported trajectories.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct Parallelism {
    /// Worker threads (default: logical cores). 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Parallelism {
    fn mode(&self) -> ExecMode {
        if self.jobs == Some(1) {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    /// Discrete time step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    par: Parallelism,
    /// Stretch time uniformly so peak acceleration equals this limit (m/s²).
    #[arg(long, value_name = "A")]
    scale_to_accel_limit: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_DT)]
    sample_dt: f64,
    /// Also write the final corridors as JSON.
    #[arg(long)]
    dump_corridors: bool,
    /// Write the flow ILP at the final makespan in LP format.
    #[arg(long, value_name = "FILE")]
    export_lp: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Discrete plan JSON as written by `plan`.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    #[command(flatten)]
    par: Parallelism,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_DT)]
    sample_dt: f64,
    #[arg(long)]
    dump_corridors: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_DT)]
    sample_dt: f64,
    /// Write the report here instead of printing it.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Samples per second.
    #[arg(long, default_value_t = 100.0)]
    sample_rate: f64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_DT)]
    sample_dt: f64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_)) | Some(Error::Ilp(swarmplan::opt::IlpError::Infeasible)) => EXIT_INFEASIBLE,
        Some(Error::BudgetExceeded(_)) | Some(Error::Ilp(_)) => EXIT_BUDGET,
        _ => EXIT_INPUT,
    }
}

fn verdict(report: &ValidationReport) -> u8 {
    if report.pass {
        0
    } else {
        for f in report.failures() {
            error!("validation: {f}");
        }
        EXIT_VALIDATION
    }
}

fn scenario(path: &Path) -> anyhow::Result<ScenarioSpec> {
    load_scenario(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn cmd_plan(args: &PlanArgs) -> anyhow::Result<u8> {
    let spec = scenario(&args.scenario)?;
    let options = PlanOptions {
        iterations: args.iterations,
        dt: args.dt,
        seed: args.seed,
        accel_limit: args.scale_to_accel_limit,
        sample_dt: args.sample_dt,
        mode: args.par.mode(),
        ..PlanOptions::default()
    };
    let outcome = with_jobs(args.par.jobs, || pipeline::plan(&spec, &options))?;
    outcome.write_artifacts(&args.out, args.dump_corridors)?;
    if let Some(path) = &args.export_lp {
        let env = build_environment_graph(&outcome.spec);
        let graph = build_pruned_flow_graph(&env, &outcome.spec, outcome.stats.makespan, true);
        export_lp(&graph.to_ilp(), path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    let last = outcome.refinement.report.last();
    println!(
        "K = {} (lower bound {}), {} refinement iterations, peak accel {:.4} m/s², peak omega {:.4} rad/s",
        outcome.stats.makespan,
        outcome.stats.lower_bound,
        last.map_or(0, |r| r.iteration),
        outcome.validation.dynamics.peak_accel,
        outcome.validation.dynamics.peak_omega
    );
    info!("artifacts written to {}", args.out.display());
    Ok(verdict(&outcome.validation))
}

fn cmd_refine(args: &RefineArgs) -> anyhow::Result<u8> {
    let mut spec = scenario(&args.scenario)?;
    if let Some(m) = args.iterations {
        spec.refine_iterations = m;
    }
    let text = std::fs::read_to_string(&args.plan).map_err(|e| Error::Io {
        path: args.plan.display().to_string(),
        source: e,
    })?;
    let plan = DiscretePlan::from_json(&text)?;
    let waypoints = postprocess(&plan, &spec.grid);
    let settings = RefineSettings {
        sample_dt: args.sample_dt,
        mode: args.par.mode(),
        ..RefineSettings::from_spec(&spec)
    };
    let r = with_jobs(args.par.jobs, || refine_with(&waypoints, &spec, &settings))?;
    let dir = args.out.join(TRAJECTORY_DIR);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in &r.trajectories {
        t.save_csv(dir.join(trajectory_file_name(t.robot)))?;
    }
    r.report.save_csv(args.out.join(REFINEMENT_FILE))?;
    r.validation.save_json(args.out.join(VALIDATION_FILE))?;
    if args.dump_corridors {
        r.corridor.save_json(args.out.join(CORRIDOR_FILE))?;
    }
    print!("{}", r.report.to_csv());
    Ok(verdict(&r.validation))
}

fn cmd_validate(args: &ValidateArgs) -> anyhow::Result<u8> {
    let spec = scenario(&args.scenario)?;
    let trajs = load_trajectories(&args.trajectories)?;
    let report = validate_trajectories(&trajs, &spec, args.sample_dt);
    match &args.report {
        Some(path) => report.save_json(path)?,
        None => println!("{}", report.to_json()),
    }
    Ok(verdict(&report))
}

fn cmd_export(args: &ExportArgs) -> anyhow::Result<u8> {
    anyhow::ensure!(args.sample_rate > 0.0, "sample rate must be positive");
    let trajs = load_trajectories(&args.trajectories)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for t in &trajs {
        let path = args.out.join(trajectory_file_name(t.robot));
        std::fs::write(&path, t.sampled_csv(args.sample_rate)).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{} sampled trajectories written to {}", trajs.len(), args.out.display());
    Ok(0)
}

fn cmd_oracle(args: &OracleArgs) -> anyhow::Result<u8> {
    let spec = scenario(&args.scenario)?;
    let r = mapf_oracle(&spec)?;
    println!("K = {} ({} states expanded)", r.makespan, r.states);
    for (i, path) in r.plan.paths.iter().enumerate() {
        let cells: Vec<String> = path.iter().map(|c| format!("({},{},{})", c[0], c[1], c[2])).collect();
        println!("robot {i} -> goal {}: {}", r.plan.assignment[i], cells.join(" "));
    }
    Ok(0)
}

fn cmd_metrics(args: &MetricsArgs) -> anyhow::Result<u8> {
    anyhow::ensure!(args.sample_dt > 0.0, "sample spacing must be positive");
    let trajs: Vec<PiecewiseBezierTrajectory> = load_trajectories(&args.trajectories)?;
    let m = dynamics_metrics(&trajs, args.sample_dt);
    println!("peak_accel {:.9e}", m.peak_accel);
    println!("peak_omega {:.9e}", m.peak_omega);
    println!("free_fall_samples {}", m.free_fall_samples);
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARMPLAN_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Export(a) => cmd_export(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Metrics(a) => cmd_metrics(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
