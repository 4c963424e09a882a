//! Numerical core shared by the planner: convex QP solvers (ADMM and interior point), an LP simplex,
//! a binary ILP branch-and-bound and an Edmonds-Karp max-flow.

pub mod ilp;
pub mod ipm;
pub mod maxflow;
pub mod qp;
pub mod simplex;
pub mod sparse;

pub use ilp::{export_lp, solve_ilp, BinaryIlp, IlpError, IlpSettings, IlpSolution, LinearConstraint, Sense};
pub use ipm::{solve_qp_ipm, solve_qp_ipm_with, IpmSettings};
pub use maxflow::{max_flow, FlowNetwork, FlowResult};
pub use qp::{kkt_residuals, solve_qp, solve_qp_with, KktResiduals, QpError, QpSettings, QpSolution, QuadraticProgram};
pub use simplex::{solve_lp, LpOutcome};
pub use sparse::CsrMatrix;
