use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scenario::{cell_center, Cell, GridSpec, ScenarioSpec};
use crate::{Error, Result, Vec3};

use super::flow_graph::{downwash_edge_conflict, downwash_vertex_conflict};

/// Grid paths for all robots on the shared time grid `t_k = k·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePlan {
    pub dt: f64,
    #[serde(rename = "K")]
    pub k: usize,
    /// `assignment[i]` indexes the goal list.
    pub assignment: Vec<usize>,
    pub paths: Vec<Vec<Cell>>,
}

impl DiscretePlan {
    pub fn robot_count(&self) -> usize {
        self.paths.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    Shape(String),
    WrongStart { robot: usize },
    WrongGoal { robot: usize },
    AssignmentNotPermutation,
    BadMove { robot: usize, k: usize },
    SameCell { k: usize, i: usize, j: usize },
    Swap { k: usize, i: usize, j: usize },
    DownwashVertex { k: usize, i: usize, j: usize },
    DownwashEdge { k: usize, i: usize, j: usize },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::Shape(m) => write!(f, "malformed plan: {m}"),
            PlanViolation::WrongStart { robot } => write!(f, "robot {robot} does not begin at its start"),
            PlanViolation::WrongGoal { robot } => write!(f, "robot {robot} does not end at its assigned goal"),
            PlanViolation::AssignmentNotPermutation => write!(f, "assignment is not a permutation"),
            PlanViolation::BadMove { robot, k } => {
                write!(f, "robot {robot} makes an invalid move at step {k}")
            }
            PlanViolation::SameCell { k, i, j } => write!(f, "robots {i} and {j} share a cell at step {k}"),
            PlanViolation::Swap { k, i, j } => write!(f, "robots {i} and {j} swap at step {k}"),
            PlanViolation::DownwashVertex { k, i, j } => {
                write!(f, "robots {i} and {j} are stacked too closely at step {k}")
            }
            PlanViolation::DownwashEdge { k, i, j } => {
                write!(f, "robots {i} and {j} exchange columns too closely at step {k}")
            }
        }
    }
}

fn free(spec: &ScenarioSpec, c: Cell) -> bool {
    spec.grid.in_bounds(c) && !spec.obstacles.contains(&c)
}

fn adjacent_or_equal(a: Cell, b: Cell) -> bool {
    (0..3).map(|d| (a[d] - b[d]).abs()).sum::<i64>() <= 1
}

/// All rule violations of `plan` against `spec`; empty means valid.
pub fn check_plan(plan: &DiscretePlan, spec: &ScenarioSpec) -> Vec<PlanViolation> {
    let n = spec.robot_count();
    let mut out = Vec::new();
    if plan.paths.len() != n || plan.assignment.len() != n {
        out.push(PlanViolation::Shape(format!(
            "{} paths and {} assignments for {n} robots",
            plan.paths.len(),
            plan.assignment.len()
        )));
        return out;
    }
    if let Some(i) = plan.paths.iter().position(|p| p.len() != plan.k + 1) {
        out.push(PlanViolation::Shape(format!("path {i} does not have K+1 waypoints")));
        return out;
    }
    let distinct: BTreeSet<usize> = plan.assignment.iter().copied().collect();
    if distinct.len() != n || plan.assignment.iter().any(|&g| g >= n) {
        out.push(PlanViolation::AssignmentNotPermutation);
    }
    for (i, path) in plan.paths.iter().enumerate() {
        if path[0] != spec.starts[i] {
            out.push(PlanViolation::WrongStart { robot: i });
        }
        if spec.goals.get(plan.assignment[i]) != Some(&path[plan.k]) {
            out.push(PlanViolation::WrongGoal { robot: i });
        }
        for k in 0..=plan.k {
            let bad_cell = !free(spec, path[k]);
            let bad_step = k < plan.k && !adjacent_or_equal(path[k], path[k + 1]);
            if bad_cell || bad_step {
                out.push(PlanViolation::BadMove { robot: i, k });
            }
        }
    }
    let cs = spec.grid.cell_size;
    let rz = spec.robot_radii[2];
    for k in 0..=plan.k {
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (plan.paths[i][k], plan.paths[j][k]);
                if a == b {
                    out.push(PlanViolation::SameCell { k, i, j });
                } else if downwash_vertex_conflict(a, b, cs, rz) {
                    out.push(PlanViolation::DownwashVertex { k, i, j });
                }
                if k < plan.k {
                    let (a1, b1) = (plan.paths[i][k + 1], plan.paths[j][k + 1]);
                    if a != a1 && a == b1 && a1 == b {
                        out.push(PlanViolation::Swap { k, i, j });
                    } else if downwash_edge_conflict(a, a1, b, b1, cs, rz)
                        || downwash_edge_conflict(b, b1, a, a1, cs, rz)
                    {
                        out.push(PlanViolation::DownwashEdge { k, i, j });
                    }
                }
            }
        }
    }
    out
}

/// Metric waypoints on a uniform time grid, the input of the continuous stage.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPlan {
    pub dt: f64,
    /// `waypoints[i][k]` for `k = 0..=K`.
    pub waypoints: Vec<Vec<Vec3>>,
}

impl WaypointPlan {
    pub fn from_discrete(plan: &DiscretePlan, grid: &GridSpec) -> Self {
        WaypointPlan {
            dt: plan.dt,
            waypoints: plan
                .paths
                .iter()
                .map(|p| p.iter().map(|&c| cell_center(grid, c)).collect())
                .collect(),
        }
    }

    pub fn robot_count(&self) -> usize {
        self.waypoints.len()
    }

    pub fn intervals(&self) -> usize {
        self.waypoints.first().map_or(0, |w| w.len().saturating_sub(1))
    }

    pub fn horizon(&self) -> f64 {
        self.intervals() as f64 * self.dt
    }

    /// Endpoints of robot `i`'s segment over interval `k`.
    pub fn segment(&self, i: usize, k: usize) -> [Vec3; 2] {
        [self.waypoints[i][k], self.waypoints[i][k + 1]]
    }
}

/// Halve every step at its midpoint, then add a wait step at both ends:
/// `K → 2K + 2` intervals of length `dt / 2`.
pub fn postprocess(plan: &DiscretePlan, grid: &GridSpec) -> WaypointPlan {
    let base = WaypointPlan::from_discrete(plan, grid);
    let waypoints = base
        .waypoints
        .iter()
        .map(|w| {
            let mut out = Vec::with_capacity(2 * w.len() + 2);
            out.push(w[0]);
            for k in 0..w.len() {
                if k > 0 {
                    out.push((w[k - 1] + w[k]) / 2.0);
                }
                out.push(w[k]);
            }
            out.push(w[w.len() - 1]);
            out
        })
        .collect();
    WaypointPlan {
        dt: plan.dt / 2.0,
        waypoints,
    }
}
