//! Ellipsoid robot model, hyperplanes and ellipsoid-weighted separating
//! hyperplanes between point sets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::opt::{solve_qp_ipm, QpError, QuadraticProgram};
use crate::scenario::ObstacleBox;
use crate::{Error, Result, Vec3};

/// Axis-aligned ellipsoid `{E x + q : ‖x‖ ≤ 1}` with `E = diag(radii)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub radii: Vec3,
}

impl Ellipsoid {
    pub fn new(radii: [f64; 3]) -> Self {
        Ellipsoid {
            radii: Vec3::from(radii),
        }
    }

    pub fn sphere(r: f64) -> Self {
        Ellipsoid::new([r; 3])
    }

    /// `E v`
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.radii.component_mul(v)
    }

    /// `E⁻¹ v`
    pub fn apply_inv(&self, v: &Vec3) -> Vec3 {
        v.component_div(&self.radii)
    }

    /// Support offset `‖E α‖₂` of the ellipsoid along `α`.
    pub fn support(&self, normal: &Vec3) -> f64 {
        self.apply(normal).norm()
    }

    /// Collision metric `‖E⁻¹(p − q)‖₂`; robots are clear of each other when it is ≥ 2.
    pub fn metric(&self, p: &Vec3, q: &Vec3) -> f64 {
        self.apply_inv(&(p - q)).norm()
    }
}

/// True when robots centred at `p` and `q` do not overlap.
pub fn collision_free(p: &Vec3, q: &Vec3, e: &Ellipsoid) -> bool {
    e.metric(p, q) >= 2.0
}

/// The plane `{x : normalᵀx = offset}`; as a face it means `normalᵀx ≤ offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        Hyperplane { normal, offset }
    }

    /// Signed value `normalᵀx − offset`.
    pub fn eval(&self, x: &Vec3) -> f64 {
        self.normal.dot(x) - self.offset
    }

    pub fn flipped(&self) -> Hyperplane {
        Hyperplane::new(-self.normal, -self.offset)
    }

    pub fn normalized(&self) -> Hyperplane {
        let n = self.normal.norm();
        Hyperplane::new(self.normal / n, self.offset / n)
    }
}

/// Intersection of half-spaces `normalᵀx ≤ offset`. May be unbounded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolyhedron {
    pub faces: Vec<Hyperplane>,
}

impl ConvexPolyhedron {
    pub fn whole_space() -> Self {
        ConvexPolyhedron::default()
    }

    pub fn push(&mut self, face: Hyperplane) {
        self.faces.push(face);
    }

    /// Largest face violation at `x` (≤ 0 inside).
    pub fn max_violation(&self, x: &Vec3) -> f64 {
        self.faces
            .iter()
            .map(|f| f.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn contains(poly: &ConvexPolyhedron, x: &Vec3, tol: f64) -> bool {
    poly.faces.iter().all(|f| f.eval(x) <= tol)
}

/// Offset a unit-normal plane by the ellipsoid support on either side:
/// robots centred in `normalᵀx ≤ β′` stay below the plane, robots centred in
/// `normalᵀx ≥ β″` stay above it.
pub fn shift_for_ellipsoids(h: &Hyperplane, e: &Ellipsoid) -> (Hyperplane, Hyperplane) {
    let s = e.support(&h.normal);
    (
        Hyperplane::new(h.normal, h.offset - s),
        Hyperplane::new(h.normal, h.offset + s),
    )
}

/// Solution of the ellipsoid-weighted hard-margin SVM, normalized to a unit
/// normal. `half_gap` is the distance from the plane to the nearest point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmPlane {
    pub plane: Hyperplane,
    pub half_gap: f64,
}

/// Minimize `αᵀE²α` subject to `αᵀa − β ≤ −1` on `a` and `αᵀb − β ≥ 1` on `b`,
/// then normalize. Sets must be strictly linearly separable.
pub fn svm_hyperplane(a: &[Vec3], b: &[Vec3], e: &Ellipsoid) -> Result<SvmPlane> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Separation("empty point set".into()));
    }
    // Work relative to the centroid so β stays well scaled.
    let center = a.iter().chain(b).sum::<Vec3>() / (a.len() + b.len()) as f64;
    let mut p = DMatrix::zeros(4, 4);
    for k in 0..3 {
        p[(k, k)] = 2.0 * e.radii[k] * e.radii[k];
    }
    let mut qp = QuadraticProgram::new(4).with_cost(p, DVector::zeros(4));
    for x in a {
        let d = x - center;
        qp.add_le(&[(0, d.x), (1, d.y), (2, d.z), (3, -1.0)], -1.0);
    }
    for x in b {
        let d = x - center;
        qp.add_ge(&[(0, d.x), (1, d.y), (2, d.z), (3, -1.0)], 1.0);
    }
    let sol = solve_qp_ipm(&qp).map_err(|err| match err {
        QpError::Infeasible => Error::Separation("point sets are not linearly separable".into()),
        other => Error::Qp(other),
    })?;
    let alpha = Vec3::new(sol.x[0], sol.x[1], sol.x[2]);
    let norm = alpha.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Separation("degenerate separating normal".into()));
    }
    let normal = alpha / norm;
    let offset = (sol.x[3] + alpha.dot(&center)) / norm;
    Ok(SvmPlane {
        plane: Hyperplane::new(normal, offset),
        half_gap: 1.0 / norm,
    })
}

pub const SEPARATION_TOL: f64 = 1e-6;

/// Separating plane between `a` (below) and `b` (above) that leaves room for
/// an ellipsoid on both sides: `αᵀa − β ≤ −‖Eα‖` and `αᵀb − β ≥ ‖Eα‖` up to
/// a relative tolerance of 1e-6.
pub fn separate_point_sets(a: &[Vec3], b: &[Vec3], e: &Ellipsoid) -> Result<Hyperplane> {
    let svm = svm_hyperplane(a, b, e)?;
    let h = svm.plane;
    let need = e.support(&h.normal) * (1.0 - SEPARATION_TOL);
    let worst_a = a.iter().map(|x| -h.eval(x)).fold(f64::INFINITY, f64::min);
    let worst_b = b.iter().map(|x| h.eval(x)).fold(f64::INFINITY, f64::min);
    if worst_a < need || worst_b < need {
        return Err(Error::Separation(format!(
            "margin {:.6} below ellipsoid support {:.6}",
            worst_a.min(worst_b),
            need
        )));
    }
    Ok(h)
}

/// Clearance of an ellipsoid centred at `x` from `bx`, measured in the frame
/// where the ellipsoid is a unit ball: `dist(E⁻¹x, E⁻¹box) − 1`. Negative
/// values mean overlap.
pub fn box_clearance(x: &Vec3, e: &Ellipsoid, bx: &ObstacleBox) -> f64 {
    let p = e.apply_inv(x);
    let lo = e.apply_inv(&bx.min);
    let hi = e.apply_inv(&bx.max);
    let mut d2 = 0.0;
    let mut inside_depth = f64::INFINITY;
    for k in 0..3 {
        let c = p[k].clamp(lo[k], hi[k]);
        d2 += (p[k] - c).powi(2);
        inside_depth = inside_depth.min((p[k] - lo[k]).min(hi[k] - p[k]));
    }
    if d2 > 0.0 {
        d2.sqrt() - 1.0
    } else {
        -1.0 - inside_depth.max(0.0)
    }
}
