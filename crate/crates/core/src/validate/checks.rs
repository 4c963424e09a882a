use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bezier::PiecewiseBezierTrajectory;
use crate::exec::{par_map, par_map_range, ExecMode};
use crate::geometry::box_clearance;
use crate::scenario::{merge_obstacles, ScenarioSpec};
use crate::{Error, Result, Vec3};

use super::metrics::{dynamics_metrics, sample_derivative, sample_times, DynamicsMetrics};

pub const DEFAULT_SAMPLE_DT: f64 = 1e-3;
/// Slack on the pairwise metric threshold of 2 and on obstacle clearance.
pub const COLLISION_TOL: f64 = 1e-6;
/// Relative tolerance on knot continuity, absolute on rest conditions and endpoints.
pub const SMOOTHNESS_TOL: f64 = 1e-6;
const MAX_LISTED: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMinimum {
    pub robots: (usize, usize),
    pub metric: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleMinimum {
    pub robot: usize,
    pub obstacle: usize,
    pub clearance: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub pass: bool,
    pub sample_dt: f64,
    pub samples: usize,
    /// Smallest `‖E⁻¹(fⁱ − fʲ)‖` over time, per pair.
    pub pairs: Vec<PairMinimum>,
    pub min_pair_metric: f64,
    pub min_clearance: f64,
    /// First offending instant of each violating pair, capped.
    pub pair_violations: Vec<PairMinimum>,
    pub obstacle_violations: Vec<ObstacleMinimum>,
}

/// Dense sampling of every pair and every robot-obstacle combination.
pub fn check_collisions(trajs: &[PiecewiseBezierTrajectory], spec: &ScenarioSpec, sample_dt: f64) -> CollisionReport {
    check_collisions_with(trajs, spec, sample_dt, ExecMode::default())
}

pub fn check_collisions_with(
    trajs: &[PiecewiseBezierTrajectory],
    spec: &ScenarioSpec,
    sample_dt: f64,
    mode: ExecMode,
) -> CollisionReport {
    let horizon = trajs.iter().map(|t| t.horizon()).fold(0.0, f64::max);
    let times = sample_times(horizon, sample_dt);
    let pos = par_map(mode, trajs, |t| sample_derivative(t, &times, 0));
    let e = spec.robot_ellipsoid();
    let n = trajs.len();
    let pair_list: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();

    let pair_results = par_map(mode, &pair_list, |&(i, j)| {
        let mut min = PairMinimum {
            robots: (i, j),
            metric: f64::INFINITY,
            t: 0.0,
        };
        let mut first_bad = None;
        for (s, &t) in times.iter().enumerate() {
            let m = e.metric(&pos[i][s], &pos[j][s]);
            if m < min.metric {
                min.metric = m;
                min.t = t;
            }
            if first_bad.is_none() && m < 2.0 - COLLISION_TOL {
                first_bad = Some(PairMinimum { robots: (i, j), metric: m, t });
            }
        }
        (min, first_bad)
    });

    let boxes = merge_obstacles(spec);
    let e_obs = spec.obstacle_ellipsoid();
    let obstacle_results = par_map_range(mode, n, |i| {
        let mut worst = f64::INFINITY;
        let mut bad = Vec::new();
        for (b, bx) in boxes.iter().enumerate() {
            let mut first = None;
            for (s, &t) in times.iter().enumerate() {
                let c = box_clearance(&pos[i][s], &e_obs, bx);
                worst = worst.min(c);
                if first.is_none() && c < -COLLISION_TOL {
                    first = Some(ObstacleMinimum {
                        robot: i,
                        obstacle: b,
                        clearance: c,
                        t,
                    });
                }
            }
            bad.extend(first);
        }
        (worst, bad)
    });

    let mut pairs = Vec::with_capacity(pair_results.len());
    let mut pair_violations = Vec::new();
    for (min, bad) in pair_results {
        pairs.push(min);
        pair_violations.extend(bad);
    }
    let mut obstacle_violations = Vec::new();
    let mut min_clearance = f64::INFINITY;
    for (w, bad) in obstacle_results {
        min_clearance = min_clearance.min(w);
        obstacle_violations.extend(bad);
    }
    let min_pair_metric = pairs.iter().map(|p| p.metric).fold(f64::INFINITY, f64::min);
    let pass = pair_violations.is_empty() && obstacle_violations.is_empty();
    pair_violations.truncate(MAX_LISTED);
    obstacle_violations.truncate(MAX_LISTED);
    CollisionReport {
        pass,
        sample_dt,
        samples: times.len(),
        pairs,
        min_pair_metric,
        min_clearance,
        pair_violations,
        obstacle_violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub pass: bool,
    /// Largest relative mismatch over all knots and orders `0..=C`.
    pub max_mismatch: f64,
    /// `(robot, knot, order)` of the largest mismatch.
    pub worst: Option<(usize, usize, usize)>,
}

/// Derivatives `0..=order` agree across every interior knot.
pub fn check_continuity(trajs: &[PiecewiseBezierTrajectory], order: usize) -> ContinuityReport {
    let mut max_mismatch = 0.0;
    let mut worst = None;
    for t in trajs {
        for k in 0..t.pieces.len().saturating_sub(1) {
            let (a, b) = (&t.pieces[k], &t.pieces[k + 1]);
            for c in 0..=order {
                let l = a.eval(a.duration, c);
                let r = b.eval(0.0, c);
                let rel = (l - r).norm() / l.norm().max(r.norm()).max(1.0);
                if rel > max_mismatch {
                    max_mismatch = rel;
                    worst = Some((t.robot, k + 1, c));
                }
            }
        }
    }
    ContinuityReport {
        pass: max_mismatch <= SMOOTHNESS_TOL,
        max_mismatch,
        worst,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub pass: bool,
    pub max_start_error: f64,
    /// Distance of each final position to its nearest goal, maximized.
    pub max_goal_error: f64,
    /// Every goal is reached by exactly one robot.
    pub goals_covered: bool,
    /// Largest `‖f⁽ᶜ⁾‖` at either end, `c = 1..=C`.
    pub max_rest_derivative: f64,
}

pub fn check_endpoints(trajs: &[PiecewiseBezierTrajectory], spec: &ScenarioSpec) -> EndpointReport {
    let starts = spec.start_positions();
    let goals = spec.goal_positions();
    let mut max_start_error = 0.0f64;
    let mut max_goal_error = 0.0f64;
    let mut max_rest_derivative = 0.0f64;
    let mut hit = vec![0usize; goals.len()];
    for t in trajs {
        let first = &t.pieces[0];
        let last = &t.pieces[t.pieces.len() - 1];
        let p0 = first.eval(0.0, 0);
        let p1 = last.eval(last.duration, 0);
        if let Some(s) = starts.get(t.robot) {
            max_start_error = max_start_error.max((p0 - s).norm());
        } else {
            max_start_error = f64::INFINITY;
        }
        let nearest = goals
            .iter()
            .enumerate()
            .map(|(g, q)| (g, (p1 - q).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((g, d)) => {
                max_goal_error = max_goal_error.max(d);
                hit[g] += 1;
            }
            None => max_goal_error = f64::INFINITY,
        }
        for c in 1..=spec.continuity {
            max_rest_derivative = max_rest_derivative
                .max(first.eval(0.0, c).norm())
                .max(last.eval(last.duration, c).norm());
        }
    }
    let goals_covered = trajs.len() == goals.len() && hit.iter().all(|&h| h == 1);
    EndpointReport {
        pass: goals_covered
            && max_start_error <= SMOOTHNESS_TOL
            && max_goal_error <= SMOOTHNESS_TOL
            && max_rest_derivative <= SMOOTHNESS_TOL,
        max_start_error,
        max_goal_error,
        goals_covered,
        max_rest_derivative,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub robots: usize,
    pub horizon: f64,
    pub horizons_match: bool,
    pub collisions: CollisionReport,
    pub continuity: ContinuityReport,
    pub endpoints: EndpointReport,
    pub dynamics: DynamicsMetrics,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// One line per failed check.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.horizons_match {
            out.push("trajectory horizons differ".to_string());
        }
        if let Some(p) = self.collisions.pair_violations.first() {
            out.push(format!(
                "robots {} and {} collide at t = {:.3} s (metric {:.6})",
                p.robots.0, p.robots.1, p.t, p.metric
            ));
        }
        if let Some(o) = self.collisions.obstacle_violations.first() {
            out.push(format!(
                "robot {} hits obstacle box {} at t = {:.3} s (clearance {:.6})",
                o.robot, o.obstacle, o.t, o.clearance
            ));
        }
        if !self.continuity.pass {
            out.push(format!("knot mismatch {:.3e} at {:?}", self.continuity.max_mismatch, self.continuity.worst));
        }
        if !self.endpoints.pass {
            out.push(format!(
                "endpoint errors: start {:.3e}, goal {:.3e}, rest {:.3e}, goals covered {}",
                self.endpoints.max_start_error,
                self.endpoints.max_goal_error,
                self.endpoints.max_rest_derivative,
                self.endpoints.goals_covered
            ));
        }
        out
    }
}

/// Full check suite. The robot count must match the scenario.
pub fn validate_trajectories(trajs: &[PiecewiseBezierTrajectory], spec: &ScenarioSpec, sample_dt: f64) -> ValidationReport {
    let horizon = trajs.first().map_or(0.0, |t| t.horizon());
    let horizons_match = trajs
        .iter()
        .all(|t| (t.horizon() - horizon).abs() <= 1e-9 * horizon.max(1.0));
    let collisions = check_collisions(trajs, spec, sample_dt);
    let continuity = check_continuity(trajs, spec.continuity);
    let endpoints = check_endpoints(trajs, spec);
    let dynamics = dynamics_metrics(trajs, sample_dt);
    ValidationReport {
        pass: horizons_match
            && trajs.len() == spec.robot_count()
            && collisions.pass
            && continuity.pass
            && endpoints.pass,
        robots: trajs.len(),
        horizon,
        horizons_match,
        collisions,
        continuity,
        endpoints,
        dynamics,
    }
}

/// Final position of every robot, for assignment lookups.
pub fn final_positions(trajs: &[PiecewiseBezierTrajectory]) -> Vec<Vec3> {
    trajs
        .iter()
        .map(|t| {
            let p = &t.pieces[t.pieces.len() - 1];
            p.eval(p.duration, 0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bezier::BezierPiece;
    use crate::scenario::GridSpec;

    fn spec() -> ScenarioSpec {
        let grid = GridSpec {
            dims: [4, 4, 4],
            cell_size: 0.5,
            origin: [0.0; 3],
        };
        ScenarioSpec::new(grid, [[3, 3, 3]], vec![[0, 0, 0], [0, 0, 2]], vec![[0, 0, 0], [0, 0, 2]])
    }

    fn hover(robot: usize, p: Vec3) -> PiecewiseBezierTrajectory {
        PiecewiseBezierTrajectory::new(robot, vec![BezierPiece::constant(0.5, 7, p); 2])
    }

    #[test]
    fn stacked_hover_passes_with_expected_metric() {
        let s = spec();
        let t = [hover(0, Vec3::zeros()), hover(1, Vec3::new(0.0, 0.0, 1.0))];
        let r = validate_trajectories(&t, &s, 0.01);
        assert!(r.pass, "{:?}", r.failures());
        assert!((r.collisions.min_pair_metric - 1.0 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn identical_trajectories_collide() {
        let s = spec();
        let t = [hover(0, Vec3::zeros()), hover(1, Vec3::zeros())];
        let r = check_collisions(&t, &s, 0.01);
        assert!(!r.pass);
        assert_eq!(r.min_pair_metric, 0.0);
        assert_eq!(r.pair_violations[0].t, 0.0);
    }

    #[test]
    fn obstacle_overlap_detected() {
        let s = spec();
        let t = [hover(0, Vec3::new(1.5, 1.5, 1.5)), hover(1, Vec3::new(0.0, 0.0, 1.0))];
        let r = validate_trajectories(&t, &s, 0.1);
        assert!(!r.collisions.pass);
        assert_eq!(r.collisions.obstacle_violations[0].robot, 0);
        assert!(!r.endpoints.pass);
    }

    #[test]
    fn horizon_mismatch_fails() {
        let s = spec();
        let mut b = hover(1, Vec3::new(0.0, 0.0, 1.0));
        b.pieces.pop();
        let r = validate_trajectories(&[hover(0, Vec3::zeros()), b], &s, 0.01);
        assert!(!r.horizons_match && !r.pass);
    }

    #[test]
    fn kinked_knot_reported() {
        let a = BezierPiece::new(1.0, vec![Vec3::zeros(), Vec3::x()]);
        let b = BezierPiece::new(1.0, vec![Vec3::x(), Vec3::x() + Vec3::y()]);
        let r = check_continuity(&[PiecewiseBezierTrajectory::new(0, vec![a, b])], 1);
        assert!(!r.pass);
        assert_eq!(r.worst, Some((0, 1, 1)));
    }
}
