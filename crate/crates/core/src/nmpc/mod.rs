//! Nonlinear model predictive control with spherical keep-out zones.

mod closed_loop;
mod mpc;
mod obstacle;
pub mod ocp;
mod qp;

pub use closed_loop::{run_closed_loop, FlightLog, FlightRecord, SolveRecord, SolveTimeStats, FLIGHT_LOG_HEADER};
pub use mpc::{mpc_step, ocp_cost, rk4_with_sensitivities, rollout, solve_ocp, weight_matrix, MpcConfig, MpcController, OutputVector};
pub use obstacle::{min_margin, obstacle_margin, obstacle_margin_gradient, ObstacleSpec};
pub use ocp::{OcpDynamics, OcpSolution, OcpSpec, SolveStatus, SolverSettings};
pub use qp::solve_box_qp;
