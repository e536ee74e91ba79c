//! Closed-loop simulation.
//!
//! The closed loop is advanced with classical RK4. By default the control law
//! is re-evaluated at every stage, so the integrator sees one ODE; a
//! zero-order-hold mode evaluates it once per step instead.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::controller::{
    control_step, CommandSignal, ControlOutput, ControllerError, ControllerGains,
};
use crate::dynamics::{
    contact_forces, state_derivative, BodyGeometry, DynamicsError, StateDerivative, SystemState,
    COINCIDENCE_TOL,
};
use crate::geometry::{is_nwise_independent, is_positively_spanning, VecN};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 60.0;
/// Residual ratios are only formed when `|u|` exceeds this.
pub const DEMAND_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    HardInvalid(String),
    #[error("t = {t}: {source}")]
    Dynamics { t: f64, source: DynamicsError },
    #[error("t = {t}: {source}")]
    Controller { t: f64, source: ControllerError },
}

impl SimError {
    /// Time of failure for runtime errors.
    pub fn time(&self) -> Option<f64> {
        match self {
            Self::HardInvalid(_) => None,
            Self::Dynamics { t, .. } | Self::Controller { t, .. } => Some(*t),
        }
    }
}

/// When the control law is re-evaluated inside an integration step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlUpdate {
    /// At every RK4 stage; the closed loop is integrated as one ODE.
    #[default]
    EveryStage,
    /// Once at the start of the step and held over it.
    ZeroOrderHold,
}

/// One complete simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub geom: BodyGeometry,
    pub gains: ControllerGains,
    pub command: CommandSignal,
    pub initial_state: SystemState,
    pub dt: f64,
    pub t_end: f64,
    pub control_update: ControlUpdate,
    /// Seeds the sampling estimators used for certification.
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn dim(&self) -> usize {
        self.initial_state.dim()
    }

    pub fn robot_count(&self) -> usize {
        self.initial_state.robot_count()
    }

    /// Index of the last step, `floor(t_end / dt)`.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }
}

/// Outcome of [`validate_scenario`]; warnings do not block a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub positively_spanning: bool,
    pub nwise_independent: bool,
    /// `|p_i(0) - p_o(0) - l_i (D + D_o)|` per robot.
    pub initial_deviations: Vec<f64>,
    pub initial_object_speed: f64,
    pub warnings: Vec<String>,
}

/// Checks the structural requirements of the controller.
///
/// Non-unit directions, nonpositive gains or radii, inconsistent dimensions
/// and coincident initial centers are hard errors. Failing the spanning or
/// independence conditions only produces warnings.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Result<ValidationReport, SimError> {
    let hard = |msg: String| SimError::HardInvalid(msg);
    cfg.geom.validate().map_err(|e| hard(e.to_string()))?;
    cfg.gains.validate().map_err(|e| hard(e.to_string()))?;
    cfg.gains
        .dirs
        .check_unit_norm()
        .map_err(|e| hard(e.to_string()))?;

    let n = cfg.dim();
    if !(2..=3).contains(&n) {
        return Err(hard(format!("dimension must be 2 or 3, got {n}")));
    }
    let st = &cfg.initial_state;
    if st.object_velocity.len() != n || st.robot_positions.iter().any(|p| p.len() != n) {
        return Err(hard(
            "initial state vectors have inconsistent dimensions".into(),
        ));
    }
    if cfg.gains.dirs.dim() != n || cfg.command.dim() != n {
        return Err(hard(format!(
            "directions have dimension {} and the command {}, state has {n}",
            cfg.gains.dirs.dim(),
            cfg.command.dim()
        )));
    }
    if cfg.gains.dirs.len() != cfg.robot_count() {
        return Err(hard(format!(
            "{} directions for {} robots",
            cfg.gains.dirs.len(),
            cfg.robot_count()
        )));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(hard(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !(cfg.t_end >= cfg.dt && cfg.t_end.is_finite()) {
        return Err(hard(format!(
            "t_end = {} must be at least dt = {}",
            cfg.t_end, cfg.dt
        )));
    }
    if let CommandSignal::Circular { period, .. } = cfg.command {
        if period.is_nan() || period <= 0.0 {
            return Err(hard(format!(
                "command period must be positive, got {period}"
            )));
        }
    }
    for (i, rel) in st.relative_positions().enumerate() {
        if rel.norm() <= COINCIDENCE_TOL {
            return Err(hard(format!("robot {i} starts at the object center")));
        }
    }

    let mut warnings = Vec::new();
    let positively_spanning = is_positively_spanning(&cfg.gains.dirs);
    if !positively_spanning {
        warnings.push("directions do not positively span the space".to_string());
    }
    let nwise_independent = is_nwise_independent(&cfg.gains.dirs);
    if !nwise_independent {
        warnings.push(format!("some {n} directions are linearly dependent"));
    }
    let reach = cfg.geom.contact_distance();
    let initial_deviations = st
        .relative_positions()
        .zip(cfg.gains.dirs.vectors())
        .map(|(rel, l)| (rel - l * reach).norm())
        .collect::<Vec<_>>();
    for (i, d) in initial_deviations.iter().enumerate() {
        if *d >= reach {
            warnings.push(format!(
                "robot {i} starts {d:.4} from its touch point, beyond D + D_o = {reach}"
            ));
        }
    }
    Ok(ValidationReport {
        positively_spanning,
        nwise_independent,
        initial_deviations,
        initial_object_speed: st.object_velocity.norm(),
        warnings,
    })
}

/// One classical RK4 step of `x' = f(x, t)` from `(state, t)`.
pub fn rk4_step<E>(
    state: &SystemState,
    t: f64,
    dt: f64,
    mut f: impl FnMut(&SystemState, f64) -> Result<StateDerivative, E>,
) -> Result<SystemState, E> {
    let k1 = f(state, t)?;
    let k2 = f(&state.advanced(0.5 * dt, &k1), t + 0.5 * dt)?;
    let k3 = f(&state.advanced(0.5 * dt, &k2), t + 0.5 * dt)?;
    let k4 = f(&state.advanced(dt, &k3), t + dt)?;
    Ok(rk4_combine(state, dt, [&k1, &k2, &k3, &k4]))
}

/// Advances the plant by `dt` with the robot velocities held constant.
pub fn integrate_held(
    geom: &BodyGeometry,
    state: &SystemState,
    robot_velocities: &[VecN],
    dt: f64,
) -> Result<SystemState, DynamicsError> {
    rk4_step(state, 0.0, dt, |s, _| {
        state_derivative(geom, s, robot_velocities)
    })
}

/// Advances the closed loop by `dt`, re-evaluating the controller at each RK4 stage.
///
/// `first` is the control output at `(state, t)`, already computed by the caller.
pub fn integrate_closed_loop(
    cfg: &ScenarioConfig,
    state: &SystemState,
    t: f64,
    first: &ControlOutput,
) -> Result<SystemState, SimError> {
    let mut first = Some(first);
    rk4_step(state, t, cfg.dt, |s, tau| {
        let owned;
        let out = match first.take() {
            Some(o) => o,
            None => {
                owned = control_step(&cfg.gains, &cfg.geom, &cfg.command, s, tau)
                    .map_err(|source| SimError::Controller { t: tau, source })?;
                &owned
            }
        };
        state_derivative(&cfg.geom, s, &out.robot_velocities)
            .map_err(|source| SimError::Dynamics { t: tau, source })
    })
}

fn rk4_combine(state: &SystemState, dt: f64, k: [&StateDerivative; 4]) -> SystemState {
    let w = dt / 6.0;
    let comb = |a: &VecN, b: &VecN, c: &VecN, d: &VecN| w * (a + 2.0 * b + 2.0 * c + d);
    SystemState {
        object_position: &state.object_position
            + comb(
                &k[0].object_velocity,
                &k[1].object_velocity,
                &k[2].object_velocity,
                &k[3].object_velocity,
            ),
        object_velocity: &state.object_velocity
            + comb(
                &k[0].object_acceleration,
                &k[1].object_acceleration,
                &k[2].object_acceleration,
                &k[3].object_acceleration,
            ),
        robot_positions: (0..state.robot_count())
            .map(|i| {
                &state.robot_positions[i]
                    + comb(
                        &k[0].robot_velocities[i],
                        &k[1].robot_velocities[i],
                        &k[2].robot_velocities[i],
                        &k[3].robot_velocities[i],
                    )
            })
            .collect(),
    }
}

fn advance(
    cfg: &ScenarioConfig,
    state: &SystemState,
    t: f64,
    out: &ControlOutput,
) -> Result<SystemState, SimError> {
    match cfg.control_update {
        ControlUpdate::EveryStage => integrate_closed_loop(cfg, state, t, out),
        ControlUpdate::ZeroOrderHold => {
            integrate_held(&cfg.geom, state, &out.robot_velocities, cfg.dt)
                .map_err(|source| SimError::Dynamics { t, source })
        }
    }
}

/// One closed-loop RK4 step from time `t`.
pub fn step(cfg: &ScenarioConfig, state: &SystemState, t: f64) -> Result<SystemState, SimError> {
    let out = control_step(&cfg.gains, &cfg.geom, &cfg.command, state, t)
        .map_err(|source| SimError::Controller { t, source })?;
    advance(cfg, state, t, &out)
}

/// Per-step record of a run. Every series has one entry per logged time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub command_velocity: Vec<VecN>,
    pub robot_velocities: Vec<Vec<VecN>>,
    pub s_star: Vec<DVector<f64>>,
    pub p_star: Vec<Vec<VecN>>,
    /// `|v_o - v_c|`.
    pub vel_error_norm: Vec<f64>,
    /// `max_i |p_i - p_i*|`.
    pub pos_error_norm_max: Vec<f64>,
    pub qp_residual: Vec<f64>,
    /// `|u| = |k_v (v_o - v_c) - v_c'|`.
    pub demand_norm: Vec<f64>,
    pub contact_forces: Vec<Vec<VecN>>,
    pub saturation_flags: Vec<bool>,
    /// Period of the commanded circle, used by the path fit.
    pub command_period: Option<f64>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, t: f64, state: &SystemState, out: ControlOutput, forces: Vec<VecN>) {
        let vel_error = (&state.object_velocity - &out.command.velocity).norm();
        let pos_error = state
            .robot_positions
            .iter()
            .zip(&out.allocation.p_star)
            .map(|(p, ps)| (p - ps).norm())
            .fold(0.0, f64::max);
        self.times.push(t);
        self.states.push(state.clone());
        self.command_velocity.push(out.command.velocity);
        self.robot_velocities.push(out.robot_velocities);
        self.vel_error_norm.push(vel_error);
        self.pos_error_norm_max.push(pos_error);
        self.qp_residual.push(out.allocation.qp_residual);
        self.demand_norm.push(out.allocation.demand.norm());
        self.saturation_flags.push(out.allocation.saturated);
        self.s_star.push(out.allocation.s_star);
        self.p_star.push(out.allocation.p_star);
        self.contact_forces.push(forces);
    }
}

/// A finished run; `failure` is set when integration stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub log: TrajectoryLog,
    pub failure: Option<SimError>,
}

impl SimulationRun {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Integrates from `t = 0` to `t_end`, logging every step.
///
/// Runtime failures (coincident centers, QP errors) end the run early and the
/// partial log is kept. Only hard validation errors are returned as `Err`.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationRun, SimError> {
    validate_scenario(cfg)?;
    let steps = cfg.step_count();
    let mut log = TrajectoryLog {
        command_period: cfg.command.period(),
        ..Default::default()
    };
    let mut state = cfg.initial_state.clone();
    let mut was_saturated = false;

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let out = match control_step(&cfg.gains, &cfg.geom, &cfg.command, &state, t) {
            Ok(out) => out,
            Err(source) => return Ok(stopped(log, SimError::Controller { t, source })),
        };
        let forces = match contact_forces(&cfg.geom, &state) {
            Ok(f) => f,
            Err(source) => return Ok(stopped(log, SimError::Dynamics { t, source })),
        };
        let saturated = out.allocation.saturated;
        if saturated && !was_saturated {
            warn!("t = {t}: QP allocation saturated (s_i* >= D + D_o)");
        }
        was_saturated = saturated;

        let next = (k < steps).then(|| advance(cfg, &state, t, &out));
        log.record(t, &state, out, forces);
        match next {
            None => break,
            Some(Ok(s)) => state = s,
            Some(Err(err)) => return Ok(stopped(log, err)),
        }
    }
    debug!("completed {} steps", log.len());
    Ok(SimulationRun { log, failure: None })
}

fn stopped(log: TrajectoryLog, err: SimError) -> SimulationRun {
    warn!("simulation stopped early: {err}");
    SimulationRun {
        log,
        failure: Some(err),
    }
}

/// Max, mean and tail mean of a series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SeriesStats {
    pub max: f64,
    pub mean: f64,
    /// Mean over the last quarter of the horizon.
    pub tail_mean: f64,
}

/// Least-squares circle through the object path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub vel_error: SeriesStats,
    pub pos_error: SeriesStats,
    /// Fit over the final command period; only for circular commands.
    pub circle_fit: Option<CircleFit>,
    pub saturation_count: usize,
    /// Largest `qp_residual / |u|` over steps with `|u| > DEMAND_FLOOR`.
    pub residual_ratio_max: f64,
}

pub fn metrics(log: &TrajectoryLog) -> MetricsSummary {
    let t_last = log.times.last().copied().unwrap_or(0.0);
    let tail_start = 0.75 * t_last;
    let stats = |xs: &[f64]| {
        if xs.is_empty() {
            return SeriesStats::default();
        }
        let tail = log
            .times
            .iter()
            .zip(xs)
            .filter(|(t, _)| **t >= tail_start)
            .map(|(_, x)| *x)
            .collect::<Vec<_>>();
        SeriesStats {
            max: xs.iter().copied().fold(0.0, f64::max),
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            tail_mean: tail.iter().sum::<f64>() / tail.len().max(1) as f64,
        }
    };

    let circle_fit = log.command_period.and_then(|period| {
        let start = t_last - period;
        let pts = log
            .times
            .iter()
            .zip(&log.states)
            .filter(|(t, _)| **t >= start)
            .map(|(_, s)| [s.object_position[0], s.object_position[1]])
            .collect::<Vec<_>>();
        fit_circle(&pts)
    });

    let residual_ratio_max = log
        .qp_residual
        .iter()
        .zip(&log.demand_norm)
        .filter(|(_, u)| **u > DEMAND_FLOOR)
        .map(|(r, u)| r / u)
        .fold(0.0, f64::max);

    MetricsSummary {
        vel_error: stats(&log.vel_error_norm),
        pos_error: stats(&log.pos_error_norm_max),
        circle_fit,
        saturation_count: log.saturation_flags.iter().filter(|&&s| s).count(),
        residual_ratio_max,
    }
}

/// Algebraic (Kasa) circle fit: `x^2 + y^2 + a x + b y + c = 0` in least squares.
pub fn fit_circle(points: &[[f64; 2]]) -> Option<CircleFit> {
    if points.len() < 3 {
        return None;
    }
    let m = points.len();
    // Center the data for conditioning.
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / m as f64;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / m as f64;
    let a = DMatrix::from_fn(m, 3, |i, j| match j {
        0 => points[i][0] - mx,
        1 => points[i][1] - my,
        _ => 1.0,
    });
    let rhs = DVector::from_fn(m, |i, _| {
        let (x, y) = (points[i][0] - mx, points[i][1] - my);
        -(x * x + y * y)
    });
    let sol = a.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let (cx, cy) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = cx * cx + cy * cy - sol[2];
    if r2.is_nan() || r2 <= 0.0 || !r2.is_finite() {
        return None;
    }
    let radius = r2.sqrt();
    let rms = (points
        .iter()
        .map(|p| {
            let d = ((p[0] - mx - cx).powi(2) + (p[1] - my - cy).powi(2)).sqrt() - radius;
            d * d
        })
        .sum::<f64>()
        / m as f64)
        .sqrt();
    Some(CircleFit {
        center: [cx + mx, cy + my],
        radius,
        rms_residual: rms,
    })
}
