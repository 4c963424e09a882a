use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::geometry::ConvexPolyhedron;
use crate::opt::{solve_qp_ipm, QpError, QuadraticProgram};
use crate::scenario::ScenarioSpec;
use crate::{Error, Result, Vec3};

use super::basis::{bernstein_cost_matrix, start_derivative_weights};
use super::trajectory::{BezierPiece, PiecewiseBezierTrajectory};

/// Corridor faces are tightened by this much inside the QP so that solver
/// round-off cannot push control points outside.
pub const FACE_MARGIN: f64 = 1e-6;
/// Accepted face violation of the returned control points.
pub const FACE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedTrajectory {
    pub trajectory: PiecewiseBezierTrajectory,
    /// Weighted derivative cost of `trajectory`.
    pub cost: f64,
    /// Objective value reported by the solver (0 when it was skipped).
    pub qp_objective: f64,
    pub iterations: usize,
}

struct Layout {
    degree: usize,
}

impl Layout {
    fn idx(&self, k: usize, d: usize, axis: usize) -> usize {
        (k * (self.degree + 1) + d) * 3 + axis
    }
}

/// Equality rows per axis: `(coefficients, rhs by axis)`.
type EqRow = (Vec<(usize, usize, f64)>, [f64; 3]);

fn equality_rows(pieces: usize, degree: usize, continuity: usize, durations: &[f64], start: Vec3, goal: Vec3) -> Vec<EqRow> {
    let mut rows = Vec::new();
    for c in 0..=continuity {
        let w = start_derivative_weights(c);
        let target = |p: Vec3| if c == 0 { [p.x, p.y, p.z] } else { [0.0; 3] };
        rows.push((w.iter().enumerate().map(|(j, &v)| (0, j, v)).collect(), target(start)));
        rows.push((
            w.iter().enumerate().map(|(j, &v)| (pieces - 1, degree - c + j, v)).collect(),
            target(goal),
        ));
        for k in 0..pieces.saturating_sub(1) {
            let ratio = (durations[k] / durations[k + 1]).powi(c as i32);
            let mut row: Vec<_> = w.iter().enumerate().map(|(j, &v)| (k, degree - c + j, v)).collect();
            row.extend(w.iter().enumerate().map(|(j, &v)| (k + 1, j, -v * ratio)));
            rows.push((row, [0.0; 3]));
        }
    }
    rows
}

/// Minimal-norm correction onto the affine set of equality rows, per axis.
fn project_equalities(x: &mut DVector<f64>, rows: &[EqRow], layout: &Layout, pieces: usize) {
    let cols = pieces * (layout.degree + 1);
    let mut a = DMatrix::<f64>::zeros(rows.len(), cols);
    for (r, (coeffs, _)) in rows.iter().enumerate() {
        for &(k, d, v) in coeffs {
            a[(r, k * (layout.degree + 1) + d)] += v;
        }
    }
    let gram = &a * a.transpose();
    let chol = gram.clone().cholesky();
    let pinv = if chol.is_none() {
        gram.clone().pseudo_inverse(1e-12).ok()
    } else {
        None
    };
    for axis in 0..3 {
        let y = DVector::from_fn(cols, |i, _| x[i * 3 + axis]);
        let b = DVector::from_fn(rows.len(), |r, _| rows[r].1[axis]);
        let resid = &a * &y - b;
        let lambda = match (&chol, &pinv) {
            (Some(c), _) => c.solve(&resid),
            (None, Some(p)) => p * &resid,
            (None, None) => continue,
        };
        let corr = a.transpose() * lambda;
        for i in 0..cols {
            x[i * 3 + axis] -= corr[i];
        }
    }
}

/// Minimum-cost piecewise Bézier curve from `start` to `goal` at rest, with
/// the control points of piece `k` inside `corridor[k]`.
pub fn optimize_trajectory(
    robot: usize,
    corridor: &[ConvexPolyhedron],
    durations: &[f64],
    start: Vec3,
    goal: Vec3,
    spec: &ScenarioSpec,
) -> Result<OptimizedTrajectory> {
    let pieces = corridor.len();
    assert_eq!(pieces, durations.len(), "one duration per corridor piece");
    assert!(pieces > 0, "trajectory needs at least one piece");
    let degree = spec.degree;
    let layout = Layout { degree };
    let n = 3 * pieces * (degree + 1);

    if start == goal && corridor.iter().all(|poly| poly.max_violation(&start) <= -FACE_MARGIN) {
        // Hovering costs nothing, so it is optimal.
        let pieces = durations.iter().map(|&tau| BezierPiece::constant(tau, degree, start)).collect();
        return Ok(OptimizedTrajectory {
            trajectory: PiecewiseBezierTrajectory::new(robot, pieces),
            cost: 0.0,
            qp_objective: 0.0,
            iterations: 0,
        });
    }

    // Control points do not change under a time rescale, so solve on
    // durations near 1 with reweighted derivatives for conditioning.
    let tref = durations.iter().sum::<f64>() / pieces as f64;
    let unit: Vec<f64> = durations.iter().map(|t| t / tref).collect();
    let weights: Vec<f64> = spec
        .weights
        .iter()
        .enumerate()
        .map(|(i, g)| g * tref.powi(1 - 2 * (i as i32 + 1)))
        .collect();
    let mut p = DMatrix::zeros(n, n);
    for (k, &tau) in unit.iter().enumerate() {
        let h = bernstein_cost_matrix(degree, tau, &weights);
        for axis in 0..3 {
            for i in 0..=degree {
                for j in 0..=degree {
                    p[(layout.idx(k, i, axis), layout.idx(k, j, axis))] = 2.0 * h[(i, j)];
                }
            }
        }
    }
    let mut qp = QuadraticProgram::new(n).with_cost(p, DVector::zeros(n));

    // Solve relative to the start point; the cost only sees derivatives.
    let origin = start;
    let eq = equality_rows(pieces, degree, spec.continuity, &unit, Vec3::zeros(), goal - origin);
    for (coeffs, rhs) in &eq {
        for axis in 0..3 {
            let row: Vec<(usize, f64)> = coeffs.iter().map(|&(k, d, v)| (layout.idx(k, d, axis), v)).collect();
            qp.add_eq(&row, rhs[axis]);
        }
    }
    for (k, poly) in corridor.iter().enumerate() {
        for face in &poly.faces {
            for d in 0..=degree {
                let row: Vec<(usize, f64)> = (0..3).map(|a| (layout.idx(k, d, a), face.normal[a])).collect();
                qp.add_le(&row, face.offset - face.normal.dot(&origin) - FACE_MARGIN);
            }
        }
    }

    let sol = solve_qp_ipm(&qp).map_err(|e| match e {
        QpError::Infeasible => Error::Infeasible(format!("corridor QP for robot {robot} is infeasible")),
        other => Error::Qp(other),
    })?;
    debug!(
        "robot {robot}: QP solved in {} iterations (polished {})",
        sol.iterations, sol.polished
    );
    let mut x = sol.x;
    project_equalities(&mut x, &eq, &layout, pieces);

    let mut out = Vec::with_capacity(pieces);
    for (k, &tau) in durations.iter().enumerate() {
        let control: Vec<Vec3> = (0..=degree)
            .map(|d| origin + Vec3::new(x[layout.idx(k, d, 0)], x[layout.idx(k, d, 1)], x[layout.idx(k, d, 2)]))
            .collect();
        if let Some(v) = control
            .iter()
            .map(|y| corridor[k].max_violation(y))
            .find(|&v| v > FACE_TOL)
        {
            return Err(Error::Infeasible(format!(
                "robot {robot}: control point leaves corridor piece {k} by {v:.3e}"
            )));
        }
        out.push(BezierPiece::new(tau, control));
    }
    let trajectory = PiecewiseBezierTrajectory::new(robot, out);
    let cost = trajectory.cost(&spec.weights);
    Ok(OptimizedTrajectory {
        trajectory,
        cost,
        qp_objective: sol.objective,
        iterations: sol.iterations,
    })
}

/// Degree used by fallback pieces: enough room for rest at both ends.
pub fn fallback_degree(spec: &ScenarioSpec) -> usize {
    spec.degree.max(2 * spec.continuity + 1)
}

/// Follows the waypoint chain exactly, stopping at every waypoint: each
/// interval is an independent rest-to-rest curve along its segment.
pub fn fallback_trajectory(robot: usize, waypoints: &[Vec3], dt: f64, spec: &ScenarioSpec) -> PiecewiseBezierTrajectory {
    let degree = fallback_degree(spec);
    let c = spec.continuity;
    let pieces = waypoints
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let control = (0..=degree)
                .map(|j| {
                    let s = if j <= c {
                        0.0
                    } else if j >= degree - c {
                        1.0
                    } else {
                        (j - c) as f64 / (degree - 2 * c) as f64
                    };
                    a + (b - a) * s
                })
                .collect();
            BezierPiece::new(dt, control)
        })
        .collect();
    PiecewiseBezierTrajectory::new(robot, pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Hyperplane;
    use crate::scenario::GridSpec;

    fn spec() -> ScenarioSpec {
        let grid = GridSpec {
            dims: [4, 4, 2],
            cell_size: 0.5,
            origin: [0.0; 3],
        };
        ScenarioSpec::new(grid, [], vec![[0, 0, 0]], vec![[0, 0, 0]])
    }

    #[test]
    fn hover_costs_nothing() {
        let s = spec();
        let p = Vec3::new(0.5, 0.5, 0.25);
        let corridor = vec![ConvexPolyhedron::whole_space(); 3];
        let r = optimize_trajectory(0, &corridor, &[0.25; 3], p, p, &s).unwrap();
        assert!(r.cost.abs() < 1e-4, "{}", r.cost);
        for q in r.trajectory.control_points() {
            assert!((q - p).norm() < 1e-6);
        }
    }

    #[test]
    fn rest_to_rest_is_symmetric() {
        let s = spec();
        let (a, b) = (Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        let corridor = vec![ConvexPolyhedron::whole_space(); 2];
        let r = optimize_trajectory(0, &corridor, &[0.5; 2], a, b, &s).unwrap();
        let t = &r.trajectory;
        for j in 0..=10 {
            let tt = j as f64 * 0.1;
            let p = t.evaluate(tt, 0).unwrap();
            let q = t.evaluate(1.0 - tt, 0).unwrap();
            assert!((p + q - b).norm() < 1e-5, "t = {tt}");
        }
        for c in 1..=4 {
            assert!(t.evaluate(0.0, c).unwrap().norm() < 1e-6);
            assert!(t.evaluate(1.0, c).unwrap().norm() < 1e-6);
        }
    }

    #[test]
    fn detours_around_blocking_face() {
        let s = spec();
        let (a, b) = (Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        // Middle piece must stay at y ≥ 0.3.
        let mut mid = ConvexPolyhedron::default();
        mid.push(Hyperplane::new(-Vec3::y(), -0.3));
        let mut corridor = vec![ConvexPolyhedron::whole_space(); 5];
        corridor[2] = mid.clone();
        let r = optimize_trajectory(0, &corridor, &[0.3; 5], a, b, &s).unwrap();
        for q in &r.trajectory.pieces[2].control {
            assert!(q.y >= 0.3 - FACE_TOL);
        }
        let straight_blocked = (0..=10).any(|j| {
            let t = 0.6 + 0.3 * j as f64 / 10.0;
            r.trajectory.evaluate(t, 0).unwrap().y < 0.3 - 1e-9
        });
        assert!(!straight_blocked);
    }

    #[test]
    fn fallback_follows_segments() {
        let s = spec();
        let w = [Vec3::zeros(), Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.0)];
        let t = fallback_trajectory(0, &w, 0.25, &s);
        assert_eq!(t.pieces[0].degree(), 9);
        for j in 0..=20 {
            let p = t.evaluate(0.25 * j as f64 / 20.0, 0).unwrap();
            assert!(p.y.abs() < 1e-15 && p.x >= -1e-15 && p.x <= 0.5 + 1e-15);
        }
        for c in 1..=4 {
            assert!(t.evaluate(0.25, c).unwrap().norm() < 1e-9);
            assert!(t.pieces[0].eval(0.25, c).norm() < 1e-9);
        }
    }
}
