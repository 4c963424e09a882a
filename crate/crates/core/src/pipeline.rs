//! End-to-end planning: scenario → discrete plan → waypoints → refined
//! trajectories, plus artifact export.

use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::bezier::PiecewiseBezierTrajectory;
use crate::discrete::{
    build_environment_graph, postprocess, solve_discrete_with, DiscretePlan, DiscreteSettings, DiscreteStats,
    WaypointPlan,
};
use crate::exec::ExecMode;
use crate::refine::{refine_with, RefineSettings, Refinement, CONVERGENCE_TOL};
use crate::scenario::ScenarioSpec;
use crate::validate::{validate_trajectories, ValidationReport, DEFAULT_SAMPLE_DT};
use crate::{Error, Result};

pub const DISCRETE_PLAN_FILE: &str = "discrete_plan.json";
pub const REFINEMENT_FILE: &str = "refinement.csv";
pub const VALIDATION_FILE: &str = "validation.json";
pub const CORRIDOR_FILE: &str = "corridors.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_DIR: &str = "trajectories";

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    /// Overrides the scenario's refinement budget.
    pub iterations: Option<usize>,
    /// Overrides the scenario's discrete time step.
    pub dt: Option<f64>,
    /// Recorded in the summary. Planning itself has no random choices.
    pub seed: u64,
    pub accel_limit: Option<f64>,
    pub sample_dt: f64,
    pub mode: ExecMode,
    pub discrete: DiscreteSettings,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            iterations: None,
            dt: None,
            seed: 0,
            accel_limit: None,
            sample_dt: DEFAULT_SAMPLE_DT,
            mode: ExecMode::default(),
            discrete: DiscreteSettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    /// Scenario after option overrides.
    pub spec: ScenarioSpec,
    pub seed: u64,
    pub discrete: DiscretePlan,
    pub stats: DiscreteStats,
    pub waypoints: WaypointPlan,
    pub refinement: Refinement,
    /// Uniform time stretch applied after refinement (1 when unscaled).
    pub time_scale: f64,
    /// Exported trajectories: the refined set stretched by `time_scale`.
    pub trajectories: Vec<PiecewiseBezierTrajectory>,
    pub validation: ValidationReport,
}

#[derive(Serialize)]
struct Summary {
    seed: u64,
    robots: usize,
    lower_bound: usize,
    makespan: usize,
    search_nodes: usize,
    iterations: usize,
    converged: bool,
    rejected: Option<usize>,
    time_scale: f64,
    horizon: f64,
    peak_accel: f64,
    peak_omega: f64,
    pass: bool,
}

/// Smallest uniform stretch that brings `peak` acceleration down to `limit`.
pub fn accel_scale(peak: f64, limit: f64) -> f64 {
    assert!(limit > 0.0, "acceleration limit must be positive");
    if peak <= 0.0 {
        1.0
    } else {
        (peak / limit).sqrt()
    }
}

pub fn trajectory_file_name(robot: usize) -> String {
    format!("robot_{robot:03}.csv")
}

pub fn plan(spec: &ScenarioSpec, options: &PlanOptions) -> Result<PlanOutcome> {
    let mut spec = spec.clone();
    if let Some(dt) = options.dt {
        spec.dt = dt;
    }
    if let Some(m) = options.iterations {
        spec.refine_iterations = m;
    }
    spec.validate()?;

    let env = build_environment_graph(&spec);
    let (discrete, stats) = solve_discrete_with(&env, &spec, &options.discrete)?;
    let waypoints = postprocess(&discrete, &spec.grid);
    let settings = RefineSettings {
        iterations: spec.refine_iterations,
        sample_count: spec.sample_count,
        sample_dt: options.sample_dt,
        tolerance: CONVERGENCE_TOL,
        mode: options.mode,
    };
    let refinement = refine_with(&waypoints, &spec, &settings)?;

    let (time_scale, trajectories, validation) = match options.accel_limit {
        Some(limit) => {
            let s = accel_scale(refinement.validation.dynamics.peak_accel, limit);
            let scaled: Vec<_> = refinement.trajectories.iter().map(|t| t.temporal_scale(s)).collect();
            let report = validate_trajectories(&scaled, &spec, options.sample_dt);
            info!(
                "time scale {s:.6}: peak accel {:.4} -> {:.4}",
                refinement.validation.dynamics.peak_accel, report.dynamics.peak_accel
            );
            (s, scaled, report)
        }
        None => (1.0, refinement.trajectories.clone(), refinement.validation.clone()),
    };
    Ok(PlanOutcome {
        spec,
        seed: options.seed,
        discrete,
        stats,
        waypoints,
        refinement,
        time_scale,
        trajectories,
        validation,
    })
}

impl PlanOutcome {
    /// Writes every artifact under `dir`; returns the paths written.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>, corridors: bool) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let traj_dir = dir.join(TRAJECTORY_DIR);
        std::fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
        let mut written = Vec::new();

        let path = dir.join(DISCRETE_PLAN_FILE);
        self.discrete.save(&path)?;
        written.push(path);
        for t in &self.trajectories {
            let path = traj_dir.join(trajectory_file_name(t.robot));
            t.save_csv(&path)?;
            written.push(path);
        }
        let path = dir.join(REFINEMENT_FILE);
        self.refinement.report.save_csv(&path)?;
        written.push(path);
        let path = dir.join(VALIDATION_FILE);
        self.validation.save_json(&path)?;
        written.push(path);
        if corridors {
            let path = dir.join(CORRIDOR_FILE);
            self.refinement.corridor.save_json(&path)?;
            written.push(path);
        }

        let last = self.refinement.report.last();
        let summary = Summary {
            seed: self.seed,
            robots: self.spec.robot_count(),
            lower_bound: self.stats.lower_bound,
            makespan: self.stats.makespan,
            search_nodes: self.stats.nodes,
            iterations: last.map_or(0, |r| r.iteration),
            converged: self.refinement.report.converged,
            rejected: self.refinement.report.rejected,
            time_scale: self.time_scale,
            horizon: self.validation.horizon,
            peak_accel: self.validation.dynamics.peak_accel,
            peak_omega: self.validation.dynamics.peak_omega,
            pass: self.validation.pass,
        };
        let path = dir.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

/// Reads `robot_000.csv`, `robot_001.csv`, … from `dir` until one is missing.
pub fn load_trajectories(dir: impl AsRef<Path>) -> Result<Vec<PiecewiseBezierTrajectory>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    loop {
        let path = dir.join(trajectory_file_name(out.len()));
        if !path.exists() {
            break;
        }
        out.push(PiecewiseBezierTrajectory::load_csv(out.len(), &path)?);
    }
    if out.is_empty() {
        return Err(Error::Parse(format!("no {} files in {}", trajectory_file_name(0), dir.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::GridSpec;

    fn small() -> ScenarioSpec {
        let grid = GridSpec {
            dims: [4, 3, 1],
            cell_size: 0.5,
            origin: [0.0; 3],
        };
        let mut s = ScenarioSpec::new(grid, [], vec![[0, 0, 0], [3, 2, 0]], vec![[3, 0, 0], [0, 2, 0]]);
        s.refine_iterations = 2;
        s
    }

    #[test]
    fn accel_scale_meets_limit() {
        assert_eq!(accel_scale(0.0, 1.0), 1.0);
        assert!((accel_scale(4.0, 1.0) - 2.0).abs() < 1e-15);
        assert!((accel_scale(1.0, 4.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scaling_hits_the_limit() {
        let opts = PlanOptions {
            accel_limit: Some(0.5),
            ..PlanOptions::default()
        };
        let out = plan(&small(), &opts).unwrap();
        assert!(out.validation.pass, "{:?}", out.validation.failures());
        assert!((out.validation.dynamics.peak_accel - 0.5).abs() < 1e-6 * 0.5);
    }

    #[test]
    fn artifacts_round_trip() {
        let out = plan(&small(), &PlanOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = out.write_artifacts(dir.path(), true).unwrap();
        assert!(written.iter().all(|p| p.exists()));
        let loaded = load_trajectories(dir.path().join(TRAJECTORY_DIR)).unwrap();
        assert_eq!(loaded.len(), 2);
        let report = validate_trajectories(&loaded, &out.spec, DEFAULT_SAMPLE_DT);
        assert!(report.pass, "{:?}", report.failures());
    }
}
