//! The transport control law.
//!
//! An outer QP allocates penetration depths `s_i*` so that the contact forces
//! the robots would produce at their virtual positions
//! `p_i* = p_o + l_i (D + D_o - s_i*)` track `-k_v (v_o - v_c) + v_c'`. An inner
//! proportional loop then steers each robot toward its virtual position.

use std::f64::consts::PI;

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::{BodyGeometry, SystemState};
use crate::geometry::{DirectionSet, VecN};
use crate::qp::{self, QpError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("controller has {directions} directions but the state has {robots} robots")]
    RobotCountMismatch { directions: usize, robots: usize },
    #[error("command signal has dimension {command}, state has dimension {state}")]
    DimensionMismatch { command: usize, state: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Commanded object velocity `v_c(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandSignal {
    Zero {
        dim: usize,
    },
    Constant {
        velocity: VecN,
    },
    /// `v_c(t) = -A [cos(2 pi t / T), sin(2 pi t / T), 0, ...]`.
    Circular {
        amplitude: f64,
        period: f64,
        dim: usize,
    },
}

/// `v_c`, `v_c'` and `v_c''` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandSample {
    pub velocity: VecN,
    pub acceleration: VecN,
    pub jerk: VecN,
}

impl CommandSignal {
    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } | Self::Circular { dim, .. } => *dim,
            Self::Constant { velocity } => velocity.len(),
        }
    }

    /// Period of the circular signal, if any.
    pub fn period(&self) -> Option<f64> {
        match self {
            Self::Circular { period, .. } => Some(*period),
            _ => None,
        }
    }

    /// The same signal with its magnitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Zero { dim } => Self::Zero { dim: *dim },
            Self::Constant { velocity } => Self::Constant {
                velocity: velocity * factor,
            },
            Self::Circular {
                amplitude,
                period,
                dim,
            } => Self::Circular {
                amplitude: amplitude * factor,
                period: *period,
                dim: *dim,
            },
        }
    }

    /// Analytic value and first two derivatives at `t`.
    pub fn evaluate(&self, t: f64) -> CommandSample {
        let dim = self.dim();
        match self {
            Self::Zero { .. } => CommandSample {
                velocity: VecN::zeros(dim),
                acceleration: VecN::zeros(dim),
                jerk: VecN::zeros(dim),
            },
            Self::Constant { velocity } => CommandSample {
                velocity: velocity.clone(),
                acceleration: VecN::zeros(dim),
                jerk: VecN::zeros(dim),
            },
            Self::Circular {
                amplitude, period, ..
            } => {
                let w = 2.0 * PI / period;
                let (sin, cos) = (w * t).sin_cos();
                let planar = |x: f64, y: f64| {
                    let mut v = VecN::zeros(dim);
                    v[0] = x;
                    v[1] = y;
                    v
                };
                CommandSample {
                    velocity: planar(-amplitude * cos, -amplitude * sin),
                    acceleration: planar(amplitude * w * sin, -amplitude * w * cos),
                    jerk: planar(amplitude * w * w * cos, amplitude * w * w * sin),
                }
            }
        }
    }
}

/// Velocity gain `k_v`, position gain `k_p`, QP regularizer `eps` and the directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub k_v: f64,
    pub k_p: f64,
    pub eps: f64,
    pub dirs: DirectionSet,
}

/// Default QP regularizer; small against `2 k_f^2` for the usual stiffnesses.
pub const DEFAULT_EPS: f64 = 0.01;

impl ControllerGains {
    pub fn new(k_v: f64, k_p: f64, eps: f64, dirs: DirectionSet) -> Result<Self, ControllerError> {
        let gains = Self {
            k_v,
            k_p,
            eps,
            dirs,
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        for (name, value) in [("k_v", self.k_v), ("k_p", self.k_p), ("eps", self.eps)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

/// Virtual positions and the QP solution behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPositions {
    pub p_star: Vec<VecN>,
    pub s_star: DVector<f64>,
    /// `|k_f L s* - u|`.
    pub qp_residual: f64,
    /// `u = k_v (v_o - v_c) - v_c'`.
    pub demand: VecN,
    /// Some `s_i* >= D + D_o`, so `p_i*` passes through the object center.
    pub saturated: bool,
}

pub fn virtual_positions(
    gains: &ControllerGains,
    geom: &BodyGeometry,
    object_position: &VecN,
    object_velocity: &VecN,
    command_velocity: &VecN,
    command_accel: &VecN,
) -> Result<VirtualPositions, ControllerError> {
    let vel_error = object_velocity - command_velocity;
    let prob = qp::assemble_qp(
        &gains.dirs,
        geom.stiffness,
        gains.eps,
        gains.k_v,
        &vel_error,
        command_accel,
    );
    let s_star = qp::solve_qp(&prob)?.s_star;
    let demand = qp::force_demand(gains.k_v, &vel_error, command_accel);
    let qp_residual = qp::allocation_residual(&gains.dirs, geom.stiffness, &s_star, &demand);
    let reach = geom.contact_distance();
    let p_star = gains
        .dirs
        .vectors()
        .iter()
        .zip(s_star.iter())
        .map(|(l, &s)| object_position + l * (reach - s))
        .collect();
    Ok(VirtualPositions {
        p_star,
        saturated: s_star.iter().any(|&s| s >= reach),
        s_star,
        qp_residual,
        demand,
    })
}

/// `v_i = -k_p (p_i - p_i*) + v_o`.
pub fn robot_velocity_commands(
    gains: &ControllerGains,
    state: &SystemState,
    p_star: &[VecN],
) -> Vec<VecN> {
    state
        .robot_positions
        .iter()
        .zip(p_star)
        .map(|(p, ps)| -gains.k_p * (p - ps) + &state.object_velocity)
        .collect()
}

/// Everything the controller computes at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub robot_velocities: Vec<VecN>,
    pub allocation: VirtualPositions,
    pub command: CommandSample,
}

/// Evaluates the command, the QP allocation and the robot velocity commands.
pub fn control_step(
    gains: &ControllerGains,
    geom: &BodyGeometry,
    command: &CommandSignal,
    state: &SystemState,
    t: f64,
) -> Result<ControlOutput, ControllerError> {
    if gains.dirs.len() != state.robot_count() {
        return Err(ControllerError::RobotCountMismatch {
            directions: gains.dirs.len(),
            robots: state.robot_count(),
        });
    }
    if command.dim() != state.dim() {
        return Err(ControllerError::DimensionMismatch {
            command: command.dim(),
            state: state.dim(),
        });
    }
    let cmd = command.evaluate(t);
    let virt = virtual_positions(
        gains,
        geom,
        &state.object_position,
        &state.object_velocity,
        &cmd.velocity,
        &cmd.acceleration,
    )?;
    let robot_velocities = robot_velocity_commands(gains, state, &virt.p_star);
    Ok(ControlOutput {
        robot_velocities,
        allocation: virt,
        command: cmd,
    })
}
