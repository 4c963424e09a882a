//! Piecewise Bézier curves and the per-robot corridor QP.

mod basis;
mod optimize;
mod trajectory;

pub use basis::{
    bernstein_basis, bernstein_cost_matrix, binomial, cost_matrix, de_casteljau, falling_factorial, hodograph,
    monomial_to_bernstein, start_derivative_weights,
};
pub use optimize::{
    fallback_degree, fallback_trajectory, optimize_trajectory, OptimizedTrajectory, FACE_MARGIN, FACE_TOL,
};
pub use trajectory::{BezierPiece, PiecewiseBezierTrajectory};
