//! Safe corridors: per robot and interval, a convex polyhedron that keeps the
//! robot clear of every other robot's polyhedron and of every obstacle box.

use std::path::Path;

use log::{debug, warn};
use serde::Serialize;

use crate::discrete::WaypointPlan;
use crate::exec::{par_map, ExecMode};
use crate::geometry::{separate_point_sets, svm_hyperplane, ConvexPolyhedron, Ellipsoid, Hyperplane};
use crate::opt::{solve_lp, LinearConstraint, LpOutcome, Sense};
use crate::scenario::{ObstacleBox, ScenarioSpec};
use crate::{Error, Result, Vec3};

/// Polyhedra with more faces than this get an LP redundancy pass.
pub const PRUNE_THRESHOLD: usize = 64;
/// Own points may sit this far outside an obstacle face before the robot is flagged.
pub const CONTAINMENT_TOL: f64 = 1e-7;

/// `samples[i][k]`: points of robot `i` during interval `k`.
pub type SampleSets = Vec<Vec<Vec<Vec3>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SafeCorridor {
    /// `polyhedra[i][k]`
    pub polyhedra: Vec<Vec<ConvexPolyhedron>>,
    /// Robots whose corridor is incomplete because a separation failed.
    pub flagged: Vec<bool>,
}

#[derive(Serialize)]
struct DumpEntry<'a> {
    robot: usize,
    interval: usize,
    faces: &'a [Hyperplane],
}

impl SafeCorridor {
    pub fn robot_count(&self) -> usize {
        self.polyhedra.len()
    }

    pub fn intervals(&self) -> usize {
        self.polyhedra.first().map_or(0, Vec::len)
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<DumpEntry> = self
            .polyhedra
            .iter()
            .enumerate()
            .flat_map(|(robot, ps)| {
                ps.iter().enumerate().map(move |(interval, p)| DumpEntry {
                    robot,
                    interval,
                    faces: &p.faces,
                })
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("corridor serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Largest face violation of any sample over all robots and intervals.
    pub fn max_violation(&self, samples: &SampleSets) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (ps, ss) in self.polyhedra.iter().zip(samples) {
            for (p, pts) in ps.iter().zip(ss) {
                for x in pts {
                    worst = worst.max(p.max_violation(x));
                }
            }
        }
        worst
    }
}

/// Segment endpoints as two-point sample sets.
pub fn segment_samples(plan: &WaypointPlan) -> SampleSets {
    (0..plan.robot_count())
        .map(|i| (0..plan.intervals()).map(|k| plan.segment(i, k).to_vec()).collect())
        .collect()
}

pub fn corridor_from_segments(plan: &WaypointPlan, boxes: &[ObstacleBox], spec: &ScenarioSpec) -> SafeCorridor {
    corridor_from_samples(&segment_samples(plan), boxes, spec)
}

pub fn corridor_from_samples(samples: &SampleSets, boxes: &[ObstacleBox], spec: &ScenarioSpec) -> SafeCorridor {
    corridor_from_samples_with(samples, boxes, spec, ExecMode::default())
}

/// Workspace box shrunk by the obstacle ellipsoid.
fn workspace_faces(spec: &ScenarioSpec) -> Vec<Hyperplane> {
    let (lo, hi) = spec.grid.workspace_bounds();
    let r = spec.obstacle_ellipsoid().radii;
    let mut faces = Vec::with_capacity(6);
    for a in 0..3 {
        let mut e = Vec3::zeros();
        e[a] = 1.0;
        faces.push(Hyperplane::new(-e, -(lo[a] + r[a])));
        faces.push(Hyperplane::new(e, hi[a] - r[a]));
    }
    faces
}

enum Task {
    Pair { i: usize, j: usize, k: usize },
    Obstacle { i: usize, b: usize, k: usize },
}

enum Outcome {
    /// Faces for `i` and `j`.
    Pair(Hyperplane, Hyperplane),
    Obstacle(Hyperplane),
    Failed,
}

fn pair_faces(a: &[Vec3], b: &[Vec3], e: &Ellipsoid) -> Result<(Hyperplane, Hyperplane)> {
    let h = separate_point_sets(a, b, e)?;
    let s = e.support(&h.normal);
    Ok((
        Hyperplane::new(h.normal, h.offset - s),
        Hyperplane::new(-h.normal, -(h.offset + s)),
    ))
}

/// Plane touching `bx`, pushed toward the points by the obstacle ellipsoid.
fn obstacle_face(points: &[Vec3], bx: &ObstacleBox, e: &Ellipsoid) -> Result<Hyperplane> {
    let verts = bx.vertices();
    let svm = svm_hyperplane(&verts, points, e)?;
    let n = svm.plane.normal;
    let support = verts.iter().map(|v| n.dot(v)).fold(f64::NEG_INFINITY, f64::max);
    let face = Hyperplane::new(-n, -(support + e.support(&n)));
    let worst = points.iter().map(|x| face.eval(x)).fold(f64::NEG_INFINITY, f64::max);
    if worst > CONTAINMENT_TOL {
        return Err(Error::Separation(format!(
            "points sit {worst:.3e} inside the obstacle margin"
        )));
    }
    Ok(face)
}

pub fn corridor_from_samples_with(
    samples: &SampleSets,
    boxes: &[ObstacleBox],
    spec: &ScenarioSpec,
    mode: ExecMode,
) -> SafeCorridor {
    let n = samples.len();
    let intervals = samples.first().map_or(0, Vec::len);
    let e = spec.robot_ellipsoid();
    let e_obs = spec.obstacle_ellipsoid();

    let mut tasks = Vec::new();
    for k in 0..intervals {
        for i in 0..n {
            for j in i + 1..n {
                tasks.push(Task::Pair { i, j, k });
            }
            for b in 0..boxes.len() {
                tasks.push(Task::Obstacle { i, b, k });
            }
        }
    }
    let outcomes = par_map(mode, &tasks, |t| match *t {
        Task::Pair { i, j, k } => match pair_faces(&samples[i][k], &samples[j][k], &e) {
            Ok((fi, fj)) => Outcome::Pair(fi, fj),
            Err(err) => {
                warn!("interval {k}: robots {i} and {j} not separable ({err})");
                Outcome::Failed
            }
        },
        Task::Obstacle { i, b, k } => match obstacle_face(&samples[i][k], &boxes[b], &e_obs) {
            Ok(f) => Outcome::Obstacle(f),
            Err(err) => {
                warn!("interval {k}: robot {i} not separable from obstacle box {b} ({err})");
                Outcome::Failed
            }
        },
    });

    let ws = workspace_faces(spec);
    let mut polyhedra = vec![
        vec![
            ConvexPolyhedron {
                faces: ws.clone()
            };
            intervals
        ];
        n
    ];
    let mut pair_faces_of: Vec<Vec<Vec<(usize, Hyperplane)>>> = vec![vec![Vec::new(); intervals]; n];
    let mut obstacle_faces_of: Vec<Vec<Vec<Hyperplane>>> = vec![vec![Vec::new(); intervals]; n];
    let mut flagged = vec![false; n];
    for (t, o) in tasks.iter().zip(outcomes) {
        match (t, o) {
            (&Task::Pair { i, j, k }, Outcome::Pair(fi, fj)) => {
                pair_faces_of[i][k].push((j, fi));
                pair_faces_of[j][k].push((i, fj));
            }
            (&Task::Pair { i, j, .. }, _) => {
                flagged[i] = true;
                flagged[j] = true;
            }
            (&Task::Obstacle { i, k, .. }, Outcome::Obstacle(f)) => obstacle_faces_of[i][k].push(f),
            (&Task::Obstacle { i, .. }, _) => flagged[i] = true,
        }
    }
    for i in 0..n {
        for k in 0..intervals {
            let mut pf = std::mem::take(&mut pair_faces_of[i][k]);
            pf.sort_by_key(|&(j, _)| j);
            let p = &mut polyhedra[i][k];
            p.faces.extend(pf.into_iter().map(|(_, f)| f));
            p.faces.append(&mut obstacle_faces_of[i][k]);
        }
    }
    let (lo, hi) = spec.grid.workspace_bounds();
    for ps in polyhedra.iter_mut() {
        for p in ps.iter_mut() {
            if p.faces.len() > PRUNE_THRESHOLD {
                let before = p.faces.len();
                *p = prune_redundant(p, lo, hi);
                debug!("pruned {} of {before} faces", before - p.faces.len());
            }
        }
    }
    SafeCorridor { polyhedra, flagged }
}

/// Drop faces implied by the others. The polyhedron must lie inside `[lo, hi]`.
pub fn prune_redundant(poly: &ConvexPolyhedron, lo: Vec3, hi: Vec3) -> ConvexPolyhedron {
    let mut keep: Vec<bool> = vec![true; poly.faces.len()];
    // Pad the box so faces on its boundary are not mistaken for redundant.
    let (lo, hi) = (lo - Vec3::repeat(1.0), hi + Vec3::repeat(1.0));
    let upper: Vec<Option<f64>> = (0..3).map(|a| Some(hi[a] - lo[a])).collect();
    for f in 0..poly.faces.len() {
        // x = lo + y, y ≥ 0
        let constraints: Vec<LinearConstraint> = poly
            .faces
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f && keep[g])
            .map(|(_, h)| LinearConstraint {
                coeffs: (0..3).map(|a| (a, h.normal[a])).collect(),
                sense: Sense::Le,
                rhs: h.offset - h.normal.dot(&lo),
            })
            .collect();
        let face = &poly.faces[f];
        let obj: Vec<f64> = (0..3).map(|a| face.normal[a]).collect();
        if let LpOutcome::Optimal { objective, .. } = solve_lp(&obj, &constraints, &upper) {
            if objective + face.normal.dot(&lo) <= face.offset + 1e-9 {
                keep[f] = false;
            }
        }
    }
    ConvexPolyhedron {
        faces: poly
            .faces
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(h, _)| *h)
            .collect(),
    }
}
