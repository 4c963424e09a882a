//! Independent checks on planner output: dense-sampled collision tests,
//! smoothness and endpoint checks, dynamics metrics, and an exhaustive MAPF
//! search for tiny instances.

mod checks;
mod metrics;
mod oracle;

pub use checks::{
    check_collisions, check_collisions_with, check_continuity, check_endpoints, final_positions,
    validate_trajectories, CollisionReport, ContinuityReport, EndpointReport, ObstacleMinimum, PairMinimum,
    ValidationReport, COLLISION_TOL, DEFAULT_SAMPLE_DT, SMOOTHNESS_TOL,
};
pub use metrics::{
    angular_rate, dynamics_metrics, sample_derivative, sample_times, DynamicsMetrics, FREE_FALL_THRUST, GRAVITY,
};
pub use oracle::{mapf_oracle, mapf_oracle_with, OracleResult, OracleSettings, ORACLE_MAX_ROBOTS, ORACLE_MAX_VERTICES};
