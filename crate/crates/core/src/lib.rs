//! Downwash-aware formation-change trajectory planning for quadrotor teams.
//!
//! Planning runs in two stages. A discrete stage computes a goal assignment and
//! makespan-optimal grid paths on a time-expanded flow graph, with extra
//! packing constraints that keep robots out of each other's downwash. A
//! continuous stage turns those paths into piecewise Bézier trajectories by
//! solving one corridor-constrained quadratic program per robot, then
//! iteratively re-centers the corridors on the smooth result.
//!
//! The usual entry point is [`pipeline::plan`]; the individual stages are
//! exposed for testing and for callers that want to swap one of them out.

pub mod bezier;
pub mod corridor;
pub mod discrete;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod opt;
pub mod pipeline;
pub mod refine;
pub mod scenario;
pub mod validate;

pub use error::{Error, Result};
pub use nalgebra;
pub use nalgebra::Vector3;

/// Position or direction in meters.
pub type Vec3 = Vector3<f64>;
