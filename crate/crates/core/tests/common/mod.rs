#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use swarmplan::scenario::{Cell, GridSpec, ScenarioSpec};

/// Random valid scenario with `n` robots on a `dims` grid, or `None` if
/// sampling keeps producing invalid instances.
pub fn random_scenario(
    rng: &mut ChaCha8Rng,
    dims: [usize; 3],
    n: usize,
    obstacle_count: usize,
    rz: f64,
) -> Option<ScenarioSpec> {
    let grid = GridSpec {
        dims,
        cell_size: 0.5,
        origin: [0.0; 3],
    };
    let all: Vec<Cell> = (0..grid.cell_count()).map(|i| grid.cell_at(i)).collect();
    for _ in 0..200 {
        let mut cells = all.clone();
        cells.shuffle(rng);
        if cells.len() < obstacle_count + n {
            return None;
        }
        let obstacles: Vec<Cell> = cells[..obstacle_count].to_vec();
        let free = &cells[obstacle_count..];
        let starts: Vec<Cell> = free.choose_multiple(rng, n).copied().collect();
        let goals: Vec<Cell> = free.choose_multiple(rng, n).copied().collect();
        let mut spec = ScenarioSpec::new(grid.clone(), obstacles, starts, goals);
        spec.robot_radii[2] = rz;
        if spec.validate().is_ok() {
            return Some(spec);
        }
    }
    None
}

/// Small instance family used for discrete-planner cross-checks.
pub fn tiny_instance(rng: &mut ChaCha8Rng, rz: f64) -> ScenarioSpec {
    loop {
        let dims = [rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=2)];
        let n = rng.gen_range(1..=3);
        let obstacles = rng.gen_range(0..=4);
        if let Some(s) = random_scenario(rng, dims, n, obstacles, rz) {
            return s;
        }
    }
}

/// Random scenario with `n` robots on a grid, retrying until one exists.
pub fn random_team(rng: &mut ChaCha8Rng, dims: [usize; 3], n: usize, obstacles: usize) -> ScenarioSpec {
    loop {
        if let Some(s) = random_scenario(rng, dims, n, obstacles, 0.3) {
            return s;
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Derivative `c` of a monomial polynomial at `t`.
pub fn monomial_derivative(coeffs: &[f64], c: usize, t: f64) -> f64 {
    let mut v = 0.0;
    for (k, &a) in coeffs.iter().enumerate().skip(c) {
        let mut f = 1.0;
        for j in 0..c {
            f *= (k - j) as f64;
        }
        v += a * f * t.powi((k - c) as i32);
    }
    v
}

/// `Σ_c γ_c ∫ ‖f⁽ᶜ⁾‖²` by Gauss-Legendre quadrature on the monomial form.
pub fn quadrature_cost(traj: &swarmplan::bezier::PiecewiseBezierTrajectory, weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for p in &traj.pieces {
        let mono = p.monomial();
        let nodes = gauss_legendre(mono[0].len() + 1);
        let half = p.duration / 2.0;
        for (c, &g) in weights.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for &(x, w) in &nodes {
                let t = half * (x + 1.0);
                let sq: f64 = mono.iter().map(|m| monomial_derivative(m, c + 1, t).powi(2)).sum();
                total += g * w * half * sq;
            }
        }
    }
    total
}

/// Best objective over all `2ⁿ` assignments, or `None` when none is feasible.
pub fn enumerate_ilp(ilp: &swarmplan::opt::BinaryIlp) -> Option<f64> {
    let n = ilp.n();
    let mut best: Option<f64> = None;
    for mask in 0u64..(1 << n) {
        let z: Vec<bool> = (0..n).map(|j| mask >> j & 1 == 1).collect();
        let ok = ilp.constraints.iter().all(|c| {
            let lhs: f64 = c.coeffs.iter().filter(|(j, _)| z[*j]).map(|(_, a)| a).sum();
            match c.sense {
                swarmplan::opt::Sense::Le => lhs <= c.rhs + 1e-9,
                swarmplan::opt::Sense::Ge => lhs >= c.rhs - 1e-9,
                swarmplan::opt::Sense::Eq => (lhs - c.rhs).abs() <= 1e-9,
            }
        });
        if ok {
            let v: f64 = (0..n).filter(|&j| z[j]).map(|j| ilp.objective[j]).sum();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best
}

/// Minimum s-t cut capacity over every vertex bipartition.
pub fn min_cut(net: &swarmplan::opt::FlowNetwork) -> u32 {
    let others: Vec<usize> = (0..net.vertex_count).filter(|&v| v != net.source && v != net.sink).collect();
    let mut best = u32::MAX;
    for mask in 0u64..(1 << others.len()) {
        let mut side = vec![false; net.vertex_count];
        side[net.source] = true;
        for (b, &v) in others.iter().enumerate() {
            side[v] = mask >> b & 1 == 1;
        }
        let cut: u32 = net
            .edges
            .iter()
            .zip(&net.capacity)
            .filter(|((u, v), _)| side[*u] && !side[*v])
            .map(|(_, &c)| c)
            .sum();
        best = best.min(cut);
    }
    best
}

pub fn random_network(rng: &mut ChaCha8Rng) -> swarmplan::opt::FlowNetwork {
    let n = rng.gen_range(2..=8);
    let mut net = swarmplan::opt::FlowNetwork::new(n, 0, n - 1);
    let m = rng.gen_range(0..=3 * n);
    for _ in 0..m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            net.add_edge(u, v, rng.gen_range(0..=9));
        }
    }
    net
}

pub fn random_ilp(rng: &mut ChaCha8Rng) -> swarmplan::opt::BinaryIlp {
    use swarmplan::opt::{BinaryIlp, Sense};
    let n = rng.gen_range(1..=12);
    let mut ilp = BinaryIlp::new(n);
    for j in 0..n {
        ilp.objective[j] = rng.gen_range(-5..=9) as f64;
    }
    for _ in 0..rng.gen_range(0..=6) {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.5) {
                coeffs.push((j, rng.gen_range(-3..=6) as f64));
            }
        }
        let sense = match rng.gen_range(0..5) {
            0 => Sense::Eq,
            1 => Sense::Ge,
            _ => Sense::Le,
        };
        let rhs = rng.gen_range(-2..=8) as f64;
        ilp.add(coeffs, sense, rhs);
    }
    ilp
}

/// Random convex QP: `P = MᵀM` (possibly rank deficient), a feasible box
/// around a random point and a few ranged rows through it.
pub fn random_qp(rng: &mut ChaCha8Rng) -> swarmplan::opt::QuadraticProgram {
    use swarmplan::nalgebra::{DMatrix, DVector};
    let n = rng.gen_range(1..=10);
    let rank = rng.gen_range(1..=n);
    let m = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
    let p = m.transpose() * m;
    let q = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut qp = swarmplan::opt::QuadraticProgram::new(n).with_cost(p, q);
    for (j, &x) in x0.iter().enumerate() {
        qp.add_constraint(&[(j, 1.0)], x - rng.gen_range(0.1..2.0), x + rng.gen_range(0.1..2.0));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let row: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
        let v: f64 = row.iter().map(|&(j, a)| a * x0[j]).sum();
        match rng.gen_range(0..3) {
            0 => qp.add_eq(&row, v),
            1 => qp.add_le(&row, v + rng.gen_range(0.0..1.0)),
            _ => qp.add_ge(&row, v - rng.gen_range(0.0..1.0)),
        }
    }
    qp
}

/// Smallest `‖E⁻¹(fⁱ − fʲ)‖` over all pairs and all samples `0, dt, …, T`.
pub fn dense_min_metric(trajs: &[swarmplan::bezier::PiecewiseBezierTrajectory], radii: [f64; 3], dt: f64) -> f64 {
    let horizon = trajs[0].horizon();
    let steps = (horizon / dt).round() as usize;
    let mut best = f64::INFINITY;
    for s in 0..=steps {
        let t = (s as f64 * dt).min(horizon);
        let pos: Vec<_> = trajs.iter().map(|tr| tr.evaluate(t, 0).unwrap()).collect();
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                let d = pos[i] - pos[j];
                let m = ((d.x / radii[0]).powi(2) + (d.y / radii[1]).powi(2) + (d.z / radii[2]).powi(2)).sqrt();
                best = best.min(m);
            }
        }
    }
    best
}

/// Smallest scaled distance minus one between any robot and any obstacle cell.
pub fn dense_min_clearance(
    trajs: &[swarmplan::bezier::PiecewiseBezierTrajectory],
    spec: &ScenarioSpec,
    dt: f64,
) -> f64 {
    let r = spec.obstacle_radii;
    let h = spec.grid.cell_size / 2.0;
    let horizon = trajs[0].horizon();
    let steps = (horizon / dt).round() as usize;
    let mut best = f64::INFINITY;
    for s in 0..=steps {
        let t = (s as f64 * dt).min(horizon);
        for tr in trajs {
            let p = tr.evaluate(t, 0).unwrap();
            for c in &spec.obstacles {
                let mut d2 = 0.0;
                let mut depth = f64::INFINITY;
                for a in 0..3 {
                    let center = spec.grid.origin[a] + c[a] as f64 * spec.grid.cell_size;
                    let (lo, hi) = ((center - h) / r[a], (center + h) / r[a]);
                    let x = p[a] / r[a];
                    let q = x.clamp(lo, hi);
                    d2 += (x - q).powi(2);
                    depth = depth.min((x - lo).min(hi - x));
                }
                let v = if d2 > 0.0 { d2.sqrt() - 1.0 } else { -depth - 1.0 };
                best = best.min(v);
            }
        }
    }
    best
}
