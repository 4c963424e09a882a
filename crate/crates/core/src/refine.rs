//! Anytime refinement: optimize inside segment corridors, then repeatedly
//! rebuild corridors around samples of the current curves and re-optimize.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::bezier::{fallback_trajectory, optimize_trajectory, PiecewiseBezierTrajectory};
use crate::corridor::{corridor_from_samples_with, segment_samples, SafeCorridor, SampleSets};
use crate::discrete::WaypointPlan;
use crate::exec::{par_map_range, ExecMode};
use crate::scenario::{merge_obstacles, ScenarioSpec};
use crate::validate::{validate_trajectories, ValidationReport, DEFAULT_SAMPLE_DT};
use crate::{Error, Result};

pub const CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineSettings {
    /// Sample-based iterations after the initial segment-corridor solve.
    pub iterations: usize,
    /// Samples per piece, endpoints included.
    pub sample_count: usize,
    pub sample_dt: f64,
    pub tolerance: f64,
    pub mode: ExecMode,
}

impl RefineSettings {
    pub fn from_spec(spec: &ScenarioSpec) -> Self {
        RefineSettings {
            iterations: spec.refine_iterations,
            sample_count: spec.sample_count,
            sample_dt: DEFAULT_SAMPLE_DT,
            tolerance: CONVERGENCE_TOL,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub peak_accel: f64,
    pub peak_omega: f64,
    pub wall_time_s: f64,
    pub fallback_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    /// Accepted iterates, in order.
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// Iteration whose output failed validation and was discarded.
    pub rejected: Option<usize>,
}

impl RefinementReport {
    pub const CSV_HEADER: &'static str = "iteration,cost,peak_accel,peak_omega,wall_time_s,fallback_count";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.iterations {
            let _ = writeln!(
                s,
                "{},{:.9e},{:.9e},{:.9e},{:.6},{}",
                r.iteration, r.cost, r.peak_accel, r.peak_omega, r.wall_time_s, r.fallback_count
            );
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub trajectories: Vec<PiecewiseBezierTrajectory>,
    pub report: RefinementReport,
    /// Checks on `trajectories`.
    pub validation: ValidationReport,
    /// Corridor that produced `trajectories`.
    pub corridor: SafeCorridor,
}

/// `count` evenly spaced points per piece, endpoints included.
pub fn sample_pieces(trajs: &[PiecewiseBezierTrajectory], count: usize) -> SampleSets {
    let count = count.max(2);
    trajs
        .iter()
        .map(|t| {
            t.pieces
                .iter()
                .map(|p| {
                    (0..count)
                        .map(|j| p.eval(p.duration * j as f64 / (count - 1) as f64, 0))
                        .collect()
                })
                .collect()
        })
        .collect()
}

struct Candidate {
    trajectories: Vec<PiecewiseBezierTrajectory>,
    fallback_count: usize,
    corridor: SafeCorridor,
}

/// One optimization round. Robots that cannot be optimized take `keep(i)`.
fn solve_round(
    plan: &WaypointPlan,
    spec: &ScenarioSpec,
    corridor: SafeCorridor,
    mode: ExecMode,
    keep: &(dyn Fn(usize) -> PiecewiseBezierTrajectory + Sync),
) -> Candidate {
    let durations = vec![plan.dt; plan.intervals()];
    let results = par_map_range(mode, plan.robot_count(), |i| {
        if corridor.flagged[i] {
            return None;
        }
        let w = &plan.waypoints[i];
        match optimize_trajectory(i, &corridor.polyhedra[i], &durations, w[0], w[w.len() - 1], spec) {
            Ok(r) => Some(r.trajectory),
            Err(e) => {
                warn!("robot {i}: {e}; keeping fallback");
                None
            }
        }
    });
    let mut fallback_count = 0;
    let trajectories = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.unwrap_or_else(|| {
                fallback_count += 1;
                keep(i)
            })
        })
        .collect();
    Candidate {
        trajectories,
        fallback_count,
        corridor,
    }
}

fn total_cost(trajs: &[PiecewiseBezierTrajectory], spec: &ScenarioSpec) -> f64 {
    trajs.iter().map(|t| t.cost(&spec.weights)).sum()
}

pub fn refine(plan: &WaypointPlan, spec: &ScenarioSpec) -> Result<Refinement> {
    refine_with(plan, spec, &RefineSettings::from_spec(spec))
}

/// Runs the loop on a post-processed plan. Every returned iterate passed
/// validation, except when even the all-fallback plan fails (reported in
/// `validation`).
pub fn refine_with(plan: &WaypointPlan, spec: &ScenarioSpec, settings: &RefineSettings) -> Result<Refinement> {
    refine_observed(plan, spec, settings, &mut |_, _| {})
}

/// [`refine_with`], calling `observer(iteration, trajectories)` on every accepted iterate.
pub fn refine_observed(
    plan: &WaypointPlan,
    spec: &ScenarioSpec,
    settings: &RefineSettings,
    observer: &mut dyn FnMut(usize, &[PiecewiseBezierTrajectory]),
) -> Result<Refinement> {
    if plan.robot_count() != spec.robot_count() || plan.intervals() == 0 {
        return Err(Error::Validation(format!(
            "plan has {} robots and {} intervals; expected {} robots and at least one interval",
            plan.robot_count(),
            plan.intervals(),
            spec.robot_count()
        )));
    }
    let boxes = merge_obstacles(spec);
    let fallback = |i: usize| fallback_trajectory(i, &plan.waypoints[i], plan.dt, spec);
    let mut report = RefinementReport::default();

    let clock = Instant::now();
    let corridor = corridor_from_samples_with(&segment_samples(plan), &boxes, spec, settings.mode);
    let mut current = solve_round(plan, spec, corridor, settings.mode, &fallback);
    let mut validation = validate_trajectories(&current.trajectories, spec, settings.sample_dt);
    if !validation.pass {
        warn!("initial iterate failed validation ({:?}); using fallback for every robot", validation.failures());
        report.rejected = Some(0);
        current.trajectories = (0..plan.robot_count()).map(fallback).collect();
        current.fallback_count = plan.robot_count();
        validation = validate_trajectories(&current.trajectories, spec, settings.sample_dt);
    }
    let mut cost = total_cost(&current.trajectories, spec);
    report.iterations.push(IterationRecord {
        iteration: 0,
        cost,
        peak_accel: validation.dynamics.peak_accel,
        peak_omega: validation.dynamics.peak_omega,
        wall_time_s: clock.elapsed().as_secs_f64(),
        fallback_count: current.fallback_count,
    });
    info!(
        "iteration 0: cost {cost:.6e}, peak accel {:.3}, {} fallback",
        validation.dynamics.peak_accel, current.fallback_count
    );
    observer(0, &current.trajectories);
    if cost.abs() <= 1e-12 {
        report.converged = true;
    }

    let mut iteration = 0;
    while !report.converged && iteration < settings.iterations && validation.pass {
        iteration += 1;
        let clock = Instant::now();
        let samples = sample_pieces(&current.trajectories, settings.sample_count);
        let corridor = corridor_from_samples_with(&samples, &boxes, spec, settings.mode);
        let prev = &current.trajectories;
        let keep = |i: usize| prev[i].clone();
        let next = solve_round(plan, spec, corridor, settings.mode, &keep);
        let next_validation = validate_trajectories(&next.trajectories, spec, settings.sample_dt);
        if !next_validation.pass {
            warn!("iteration {iteration} rejected: {:?}", next_validation.failures());
            report.rejected = Some(iteration);
            break;
        }
        let next_cost = total_cost(&next.trajectories, spec);
        let change = (next_cost - cost).abs() / cost.abs().max(1e-12);
        report.iterations.push(IterationRecord {
            iteration,
            cost: next_cost,
            peak_accel: next_validation.dynamics.peak_accel,
            peak_omega: next_validation.dynamics.peak_omega,
            wall_time_s: clock.elapsed().as_secs_f64(),
            fallback_count: next.fallback_count,
        });
        info!(
            "iteration {iteration}: cost {next_cost:.6e} (change {change:.2e}), peak accel {:.3}, {} fallback",
            next_validation.dynamics.peak_accel, next.fallback_count
        );
        observer(iteration, &next.trajectories);
        current = next;
        validation = next_validation;
        cost = next_cost;
        if change < settings.tolerance {
            report.converged = true;
        }
    }
    Ok(Refinement {
        trajectories: current.trajectories,
        report,
        validation,
        corridor: current.corridor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{build_environment_graph, postprocess, solve_discrete};
    use crate::scenario::GridSpec;

    fn spec(starts: Vec<[i64; 3]>, goals: Vec<[i64; 3]>) -> ScenarioSpec {
        let grid = GridSpec {
            dims: [5, 3, 2],
            cell_size: 0.5,
            origin: [0.0; 3],
        };
        let mut s = ScenarioSpec::new(grid, [], starts, goals);
        s.refine_iterations = 2;
        s
    }

    fn run(s: &ScenarioSpec) -> Refinement {
        let plan = solve_discrete(&build_environment_graph(s), s).unwrap();
        let wp = postprocess(&plan, &s.grid);
        refine(&wp, s).unwrap()
    }

    #[test]
    fn stationary_converges_immediately() {
        let s = spec(vec![[0, 0, 0], [4, 2, 1]], vec![[0, 0, 0], [4, 2, 1]]);
        let r = run(&s);
        assert!(r.report.converged);
        assert_eq!(r.report.iterations.len(), 1, "{:?}", r.report);
        assert_eq!(r.report.iterations[0].cost, 0.0);
        assert!(r.validation.pass);
    }

    #[test]
    fn single_robot_improves_after_resampling() {
        let s = spec(vec![[0, 0, 0]], vec![[4, 2, 1]]);
        let r = run(&s);
        assert!(r.validation.pass, "{:?}", r.validation.failures());
        let it = &r.report.iterations;
        assert!(it.len() >= 2);
        assert!(it[1].cost <= it[0].cost * (1.0 + 1e-9), "{} > {}", it[1].cost, it[0].cost);
        assert_eq!(it[0].fallback_count, 0);
    }

    #[test]
    fn report_csv_shape() {
        let s = spec(vec![[0, 0, 0], [4, 0, 0]], vec![[4, 2, 0], [0, 2, 0]]);
        let r = run(&s);
        let csv = r.report.to_csv();
        assert!(csv.starts_with(RefinementReport::CSV_HEADER));
        assert_eq!(csv.lines().count(), r.report.iterations.len() + 1);
        assert!(r.validation.pass);
    }
}
