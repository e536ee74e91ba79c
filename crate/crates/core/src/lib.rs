//! Cooperative transport of a spherical object by velocity-controlled
//! spherical robots.
//!
//! The robots push the object through penalty contacts. A strictly convex QP
//! over the contact penetrations allocates the pushing forces so the object
//! velocity tracks a command, and a proportional loop drives each robot to
//! the position that realizes its share of the force.
//!
//! - [`geometry`]: direction sets, positive spanning, positive bases.
//! - [`qp`]: the nonnegativity-constrained QP, its solver and an enumeration oracle.
//! - [`dynamics`]: contact forces and equations of motion.
//! - [`controller`]: command signals and the control law.
//! - [`simulation`]: validation, RK4 integration, logging and metrics.
//! - [`analysis`]: small-gain certification of the gains.

pub mod analysis;
pub mod controller;
pub mod dynamics;
pub mod geometry;
pub mod qp;
pub mod simulation;

pub use analysis::{certify_scenario, check_small_gain, GainCertificate, GainCertificateInput};
pub use controller::{
    control_step, CommandSample, CommandSignal, ControlOutput, ControllerError, ControllerGains,
};
pub use dynamics::{BodyGeometry, DynamicsError, SystemState};
pub use geometry::{DirectionSet, GeometryError, VecN};
pub use qp::{solve_qp, solve_qp_oracle, QpError, QpProblem, QpSolution};
pub use simulation::{
    metrics, run, validate_scenario, ControlUpdate, MetricsSummary, ScenarioConfig, SimError,
    SimulationRun, TrajectoryLog, ValidationReport,
};
