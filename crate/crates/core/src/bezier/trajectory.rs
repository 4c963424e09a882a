use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::{Error, Result, Vec3};

use super::basis::{bernstein_basis, bernstein_cost_matrix, de_casteljau, hodograph, monomial_to_bernstein};

#[derive(Debug, Clone, PartialEq)]
pub struct BezierPiece {
    pub duration: f64,
    pub control: Vec<Vec3>,
}

impl BezierPiece {
    pub fn new(duration: f64, control: Vec<Vec3>) -> Self {
        BezierPiece { duration, control }
    }

    pub fn constant(duration: f64, degree: usize, p: Vec3) -> Self {
        BezierPiece::new(duration, vec![p; degree + 1])
    }

    pub fn degree(&self) -> usize {
        self.control.len() - 1
    }

    /// `order`-th derivative at local time `t ∈ [0, duration]`.
    pub fn eval(&self, t: f64, order: usize) -> Vec3 {
        let mut pts = self.control.clone();
        for _ in 0..order {
            if pts.len() == 1 {
                return Vec3::zeros();
            }
            pts = hodograph(&pts, self.duration);
        }
        de_casteljau(&pts, (t / self.duration).clamp(0.0, 1.0))
    }

    /// Monomial coefficients on local time, one vector per axis.
    pub fn monomial(&self) -> [Vec<f64>; 3] {
        let m = bernstein_basis(self.degree(), self.duration);
        let axis = |k: usize| {
            let y = DVector::from_iterator(self.control.len(), self.control.iter().map(|p| p[k]));
            (&m * y).iter().copied().collect()
        };
        [axis(0), axis(1), axis(2)]
    }

    pub fn from_monomial(duration: f64, coeffs: &[Vec<f64>; 3]) -> Self {
        let ys: Vec<Vec<f64>> = coeffs.iter().map(|c| monomial_to_bernstein(c, duration)).collect();
        let control = (0..coeffs[0].len())
            .map(|i| Vec3::new(ys[0][i], ys[1][i], ys[2][i]))
            .collect();
        BezierPiece::new(duration, control)
    }

    /// `Σ_c γ_c ∫ ‖f^{(c)}‖² dt` over this piece.
    pub fn cost(&self, weights: &[f64]) -> f64 {
        let h = bernstein_cost_matrix(self.degree(), self.duration, weights);
        // Translation invariant; centring avoids cancellation in yᵀHy.
        let o = self.control[0];
        (0..3)
            .map(|k| {
                let y = DVector::from_iterator(self.control.len(), self.control.iter().map(|p| p[k] - o[k]));
                (y.transpose() * &h * &y)[(0, 0)]
            })
            .sum()
    }
}

/// Contiguous Bézier pieces starting at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseBezierTrajectory {
    pub robot: usize,
    pub pieces: Vec<BezierPiece>,
}

impl PiecewiseBezierTrajectory {
    pub fn new(robot: usize, pieces: Vec<BezierPiece>) -> Self {
        PiecewiseBezierTrajectory { robot, pieces }
    }

    pub fn horizon(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).sum()
    }

    /// Knot times `t_0 = 0, …, t_K = T`.
    pub fn knots(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        for p in &self.pieces {
            t.push(t.last().unwrap() + p.duration);
        }
        t
    }

    /// Piece index and local time; knots belong to the piece on their right.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let mut start = 0.0;
        let last = self.pieces.len() - 1;
        for (k, p) in self.pieces.iter().enumerate() {
            if t < start + p.duration || k == last {
                return (k, (t - start).clamp(0.0, p.duration));
            }
            start += p.duration;
        }
        unreachable!("trajectory has at least one piece")
    }

    pub fn evaluate(&self, t: f64, order: usize) -> Result<Vec3> {
        let horizon = self.horizon();
        let slack = 1e-9 * horizon.max(1.0);
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::TimeOutOfRange { t, horizon });
        }
        let (k, local) = self.locate(t);
        Ok(self.pieces[k].eval(local, order))
    }

    /// Stretch time by `s`; derivative `c` scales by `s^{−c}`.
    pub fn temporal_scale(&self, s: f64) -> Self {
        assert!(s > 0.0, "scale factor must be positive");
        let pieces = self
            .pieces
            .iter()
            .map(|p| BezierPiece::new(p.duration * s, p.control.clone()))
            .collect();
        PiecewiseBezierTrajectory::new(self.robot, pieces)
    }

    pub fn cost(&self, weights: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.cost(weights)).sum()
    }

    pub fn control_points(&self) -> impl Iterator<Item = &Vec3> {
        self.pieces.iter().flat_map(|p| p.control.iter())
    }

    /// One row per piece: `duration, cx0..cxD, cy0..cyD, cz0..czD`.
    pub fn to_csv(&self) -> String {
        let d = self.pieces.iter().map(|p| p.degree()).max().unwrap_or(0);
        let mut s = String::from("duration");
        for axis in ["x", "y", "z"] {
            for i in 0..=d {
                let _ = write!(s, ",c{axis}{i}");
            }
        }
        s.push('\n');
        for p in &self.pieces {
            let _ = write!(s, "{:.16e}", p.duration);
            for coeffs in p.monomial() {
                for i in 0..=d {
                    let _ = write!(s, ",{:.16e}", coeffs.get(i).copied().unwrap_or(0.0));
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(robot: usize, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty trajectory file".into()))?;
        let cols = header.split(',').count();
        if cols < 4 || (cols - 1) % 3 != 0 || !header.starts_with("duration") {
            return Err(Error::Parse(format!("unexpected trajectory header '{header}'")));
        }
        let per_axis = (cols - 1) / 3;
        let mut pieces = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
            if vals.len() != cols {
                return Err(Error::Parse(format!("row {} has {} columns, expected {cols}", row + 1, vals.len())));
            }
            if !(vals[0] > 0.0) || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("row {} has a non-positive duration or non-finite value", row + 1)));
            }
            let axis = |k: usize| vals[1 + k * per_axis..1 + (k + 1) * per_axis].to_vec();
            pieces.push(BezierPiece::from_monomial(vals[0], &[axis(0), axis(1), axis(2)]));
        }
        if pieces.is_empty() {
            return Err(Error::Parse("trajectory has no pieces".into()));
        }
        Ok(PiecewiseBezierTrajectory::new(robot, pieces))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(robot: usize, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(robot, &text)
    }

    /// `t,x,y,z,vx,vy,vz,ax,ay,az` at `rate` samples per second.
    pub fn sampled_csv(&self, rate: f64) -> String {
        let mut s = String::from("t,x,y,z,vx,vy,vz,ax,ay,az\n");
        let horizon = self.horizon();
        let count = (horizon * rate + 1e-9).floor() as usize;
        for j in 0..=count {
            let t = (j as f64 / rate).min(horizon);
            let (k, local) = self.locate(t);
            let p = &self.pieces[k];
            let _ = write!(s, "{t:.6}");
            for order in 0..3 {
                let v = p.eval(local, order);
                let _ = write!(s, ",{:.9},{:.9},{:.9}", v.x, v.y, v.z);
            }
            s.push('\n');
        }
        s
    }
}
