//! Discrete stage: makespan-optimal unlabeled grid paths with downwash
//! constraints, computed on a time-expanded flow graph.

mod env_graph;
mod flow_graph;
mod plan;
mod planner;

pub use env_graph::{build_environment_graph, EnvironmentGraph};
pub use flow_graph::{
    build_flow_graph, build_pruned_flow_graph, downwash_edge_conflict, downwash_vertex_conflict, FlowEdgeKind,
    TimeExpandedGraph,
};
pub use plan::{check_plan, postprocess, DiscretePlan, PlanViolation, WaypointPlan};
pub use planner::{
    extract_plan, find_conflict_free_flow, lower_bound_makespan, lower_bound_with, solve_discrete,
    solve_discrete_with, solve_flow_ilp, DiscreteSettings, DiscreteStats, FlowIlpResult,
};
