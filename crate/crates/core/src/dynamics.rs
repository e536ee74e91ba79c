//! Penalty contact forces and the open-loop equations of motion.
//!
//! Robots are velocity-controlled points (`p_i' = v_i`); the object is a double
//! integrator driven by the sum of the contact forces. Forces are expressed
//! per unit object mass, so the stiffness `k_f` has units of `1/s^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::VecN;

/// Robot and object centers closer than this are a model singularity.
pub const COINCIDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("robot {} center coincides with the object center (|p_i - p_o| = {separation:e})", robot.map_or("?".to_string(), |r| r.to_string()))]
    CenterCoincidence {
        robot: Option<usize>,
        separation: f64,
    },
    #[error("expected {expected} robots, got {found}")]
    RobotCountMismatch { expected: usize, found: usize },
}

/// Radii and contact stiffness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyGeometry {
    pub robot_radius: f64,
    pub object_radius: f64,
    pub stiffness: f64,
}

impl BodyGeometry {
    pub fn new(
        robot_radius: f64,
        object_radius: f64,
        stiffness: f64,
    ) -> Result<Self, DynamicsError> {
        let geom = Self {
            robot_radius,
            object_radius,
            stiffness,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [
            ("robot_radius", self.robot_radius),
            ("object_radius", self.object_radius),
            ("stiffness", self.stiffness),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DynamicsError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// `D + D_o`, the center distance at which a robot touches the object.
    pub fn contact_distance(&self) -> f64 {
        self.robot_radius + self.object_radius
    }
}

/// Object position and velocity plus robot positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub object_position: VecN,
    pub object_velocity: VecN,
    pub robot_positions: Vec<VecN>,
}

/// Time derivative of a [`SystemState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub object_velocity: VecN,
    pub object_acceleration: VecN,
    pub robot_velocities: Vec<VecN>,
}

impl SystemState {
    pub fn dim(&self) -> usize {
        self.object_position.len()
    }

    pub fn robot_count(&self) -> usize {
        self.robot_positions.len()
    }

    /// `self + h * d`.
    pub fn advanced(&self, h: f64, d: &StateDerivative) -> Self {
        Self {
            object_position: &self.object_position + h * &d.object_velocity,
            object_velocity: &self.object_velocity + h * &d.object_acceleration,
            robot_positions: self
                .robot_positions
                .iter()
                .zip(&d.robot_velocities)
                .map(|(p, v)| p + h * v)
                .collect(),
        }
    }

    /// `p_i - p_o` for every robot.
    pub fn relative_positions(&self) -> impl Iterator<Item = VecN> + '_ {
        self.robot_positions
            .iter()
            .map(|p| p - &self.object_position)
    }
}

/// Force on the object from one robot at relative position `rel = p_i - p_o`.
///
/// `-k_f * max(D + D_o - |rel|, 0) * rel / |rel|`, identically zero once the
/// bodies separate.
pub fn contact_force(geom: &BodyGeometry, rel: &VecN) -> Result<VecN, DynamicsError> {
    let dist = rel.norm();
    if dist <= COINCIDENCE_TOL {
        return Err(DynamicsError::CenterCoincidence {
            robot: None,
            separation: dist,
        });
    }
    let penetration = (geom.contact_distance() - dist).max(0.0);
    if penetration == 0.0 {
        return Ok(VecN::zeros(rel.len()));
    }
    Ok(rel * (-geom.stiffness * penetration / dist))
}

/// Per-robot contact forces, in robot order.
pub fn contact_forces(
    geom: &BodyGeometry,
    state: &SystemState,
) -> Result<Vec<VecN>, DynamicsError> {
    state
        .relative_positions()
        .enumerate()
        .map(|(i, rel)| {
            contact_force(geom, &rel).map_err(|e| match e {
                DynamicsError::CenterCoincidence { separation, .. } => {
                    DynamicsError::CenterCoincidence {
                        robot: Some(i),
                        separation,
                    }
                }
                other => other,
            })
        })
        .collect()
}

/// Sum of the contact forces, i.e. the object acceleration.
pub fn net_force(geom: &BodyGeometry, state: &SystemState) -> Result<VecN, DynamicsError> {
    let forces = contact_forces(geom, state)?;
    Ok(forces
        .into_iter()
        .fold(VecN::zeros(state.dim()), |acc, f| acc + f))
}

pub fn state_derivative(
    geom: &BodyGeometry,
    state: &SystemState,
    robot_velocities: &[VecN],
) -> Result<StateDerivative, DynamicsError> {
    if robot_velocities.len() != state.robot_count() {
        return Err(DynamicsError::RobotCountMismatch {
            expected: state.robot_count(),
            found: robot_velocities.len(),
        });
    }
    Ok(StateDerivative {
        object_velocity: state.object_velocity.clone(),
        object_acceleration: net_force(geom, state)?,
        robot_velocities: robot_velocities.to_vec(),
    })
}

/// `|f(a) - f(b)| / sum_i |a_i - b_i|` for two stacks of relative positions.
pub fn force_difference_ratio(
    geom: &BodyGeometry,
    a: &[VecN],
    b: &[VecN],
) -> Result<Option<f64>, DynamicsError> {
    let mut df = VecN::zeros(a[0].len());
    let mut dx = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        df += contact_force(geom, ra)? - contact_force(geom, rb)?;
        dx += (ra - rb).norm();
    }
    Ok((dx > 0.0).then(|| df.norm() / dx))
}

/// Empirical Lipschitz constant of the net force in the relative positions,
/// restricted to separations `|p_i - p_o| >= separation_floor`.
///
/// Relative positions are drawn with radius uniform in
/// `[floor, 1.25 * max(floor, D + D_o)]` and isotropic direction. Even samples
/// pair two independent configurations; odd samples pair a configuration with
/// a perturbation of size `1e-3 * (D + D_o)`. The estimate is a lower bound.
pub fn lipschitz_estimate_f(
    geom: &BodyGeometry,
    dim: usize,
    robots: usize,
    separation_floor: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = 1.25 * separation_floor.max(geom.contact_distance());
    let h = 1e-3 * geom.contact_distance();

    let mut best: f64 = 0.0;
    for k in 0..samples {
        let a = (0..robots)
            .map(|_| random_direction(&mut rng, dim) * rng.random_range(separation_floor..=hi))
            .collect::<Vec<_>>();
        let b = if k % 2 == 0 {
            (0..robots)
                .map(|_| random_direction(&mut rng, dim) * rng.random_range(separation_floor..=hi))
                .collect::<Vec<_>>()
        } else {
            a.iter()
                .map(|r| {
                    let p = r + random_direction(&mut rng, dim) * rng.random_range(0.0..=h);
                    if p.norm() < separation_floor {
                        p.normalize() * separation_floor
                    } else {
                        p
                    }
                })
                .collect()
        };
        // Samples respect the floor, so coincidence cannot occur for floor > 0.
        if let Ok(Some(ratio)) = force_difference_ratio(geom, &a, &b) {
            best = best.max(ratio);
        }
    }
    best
}

pub(crate) fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> VecN {
    loop {
        let v = VecN::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}
