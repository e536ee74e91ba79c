#![allow(dead_code)]

use cotrans_core::simulation::ControlUpdate;
use cotrans_core::*;

pub fn v(x: &[f64]) -> VecN {
    VecN::from_column_slice(x)
}

pub fn set_geometry() -> BodyGeometry {
    BodyGeometry::new(0.2, 0.6, 30.0).unwrap()
}

pub fn set_initial() -> SystemState {
    SystemState {
        object_position: v(&[-8.0, 0.0]),
        object_velocity: v(&[0.0, 0.0]),
        robot_positions: vec![v(&[-7.0, 1.0]), v(&[-9.0, 1.0]), v(&[-9.0, -1.0])],
    }
}

/// Three robots at 120 degrees, k_v = 0.5, circular command with period 20.
pub fn transport(k_p: f64, amplitude: f64, dt: f64, t_end: f64) -> ScenarioConfig {
    ScenarioConfig {
        geom: set_geometry(),
        gains: ControllerGains::new(0.5, k_p, 0.01, DirectionSet::evenly_spaced(3).unwrap())
            .unwrap(),
        command: CommandSignal::Circular {
            amplitude,
            period: 20.0,
            dim: 2,
        },
        initial_state: set_initial(),
        dt,
        t_end,
        control_update: ControlUpdate::EveryStage,
        seed: 0,
    }
}

pub fn flatten(s: &SystemState) -> Vec<f64> {
    let mut out: Vec<f64> = s
        .object_position
        .iter()
        .chain(s.object_velocity.iter())
        .copied()
        .collect();
    for p in &s.robot_positions {
        out.extend(p.iter());
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
