use serde::{Deserialize, Serialize};

use crate::bezier::PiecewiseBezierTrajectory;
use crate::Vec3;

pub const GRAVITY: f64 = 9.81;
/// Thrust norms below this are treated as free fall.
pub const FREE_FALL_THRUST: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsMetrics {
    /// m/s²
    pub peak_accel: f64,
    /// rad/s
    pub peak_omega: f64,
    /// Samples where ω is undefined because thrust vanishes.
    pub free_fall_samples: usize,
}

/// Body rate magnitude for yaw held at zero: jerk orthogonal to thrust over
/// thrust norm. `None` near free fall.
pub fn angular_rate(acc: &Vec3, jerk: &Vec3) -> Option<f64> {
    let thrust = acc + Vec3::new(0.0, 0.0, GRAVITY);
    let norm = thrust.norm();
    if norm < FREE_FALL_THRUST {
        return None;
    }
    let dir = thrust / norm;
    Some((jerk - dir * jerk.dot(&dir)).norm() / norm)
}

/// Sample times `0, dt, 2dt, …` plus the horizon itself.
pub fn sample_times(horizon: f64, dt: f64) -> Vec<f64> {
    assert!(dt > 0.0, "sample spacing must be positive");
    let count = (horizon / dt).floor() as usize;
    let mut t: Vec<f64> = (0..=count).map(|s| s as f64 * dt).collect();
    if horizon - t[count] > 1e-12 {
        t.push(horizon);
    }
    t
}

/// Evaluates derivative `order` at sorted `times` with a moving piece cursor.
pub fn sample_derivative(traj: &PiecewiseBezierTrajectory, times: &[f64], order: usize) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(times.len());
    let mut k = 0;
    let mut start = 0.0;
    let last = traj.pieces.len() - 1;
    for &t in times {
        while k < last && t >= start + traj.pieces[k].duration {
            start += traj.pieces[k].duration;
            k += 1;
        }
        let p = &traj.pieces[k];
        out.push(p.eval((t - start).clamp(0.0, p.duration), order));
    }
    out
}

/// Golden-section ascent on `[a, b]`.
fn refine_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if b - a < 1e-14 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

/// Peak of `f` over `[0, T]`: grid search, then every sampled local maximum
/// within 1e-3 of the best is polished so the result does not depend on `dt`.
fn peak(f: &dyn Fn(f64) -> f64, times: &[f64]) -> f64 {
    let vals: Vec<f64> = times.iter().map(|&t| f(t)).collect();
    let best = vals.iter().copied().fold(0.0, f64::max);
    if best <= 0.0 {
        return best;
    }
    let mut peak = best;
    for s in 0..vals.len() {
        let left = if s > 0 { vals[s - 1] } else { f64::NEG_INFINITY };
        let right = vals.get(s + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if vals[s] >= left && vals[s] >= right && vals[s] >= best * (1.0 - 1e-3) {
            let a = times[s.saturating_sub(1)];
            let b = times[(s + 1).min(times.len() - 1)];
            peak = peak.max(refine_max(f, a, b));
        }
    }
    peak
}

/// Peak acceleration and body rate over all robots.
pub fn dynamics_metrics(trajs: &[PiecewiseBezierTrajectory], sample_dt: f64) -> DynamicsMetrics {
    let mut m = DynamicsMetrics {
        peak_accel: 0.0,
        peak_omega: 0.0,
        free_fall_samples: 0,
    };
    for traj in trajs {
        let times = sample_times(traj.horizon(), sample_dt);
        let acc = |t: f64| traj.evaluate(t, 2).map_or(0.0, |a| a.norm());
        m.peak_accel = m.peak_accel.max(peak(&acc, &times));
        // Both one-sided limits at every knot, in case a derivative jumps there.
        for p in &traj.pieces {
            for t in [0.0, p.duration] {
                let (a, j) = (p.eval(t, 2), p.eval(t, 3));
                m.peak_accel = m.peak_accel.max(a.norm());
                m.peak_omega = m.peak_omega.max(angular_rate(&a, &j).unwrap_or(0.0));
            }
        }
        let omega = |t: f64| {
            let a = traj.evaluate(t, 2).unwrap_or_default();
            let j = traj.evaluate(t, 3).unwrap_or_default();
            angular_rate(&a, &j).unwrap_or(0.0)
        };
        let accs = sample_derivative(traj, &times, 2);
        let jerks = sample_derivative(traj, &times, 3);
        m.free_fall_samples += accs
            .iter()
            .zip(&jerks)
            .filter(|(a, j)| angular_rate(a, j).is_none())
            .count();
        m.peak_omega = m.peak_omega.max(peak(&omega, &times));
    }
    m
}
