use std::hint::black_box;

use cotrans_core::qp::assemble_qp;
use cotrans_core::simulation::ControlUpdate;
use cotrans_core::*;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn v(x: &[f64]) -> VecN {
    VecN::from_column_slice(x)
}

fn transport(t_end: f64, control_update: ControlUpdate) -> ScenarioConfig {
    ScenarioConfig {
        geom: BodyGeometry::new(0.2, 0.6, 30.0).unwrap(),
        gains: ControllerGains::new(0.5, 1.0, 0.01, DirectionSet::evenly_spaced(3).unwrap())
            .unwrap(),
        command: CommandSignal::Circular {
            amplitude: 1.0,
            period: 20.0,
            dim: 2,
        },
        initial_state: SystemState {
            object_position: v(&[-8.0, 0.0]),
            object_velocity: v(&[0.0, 0.0]),
            robot_positions: vec![v(&[-7.0, 1.0]), v(&[-9.0, 1.0]), v(&[-9.0, -1.0])],
        },
        dt: 1e-3,
        t_end,
        control_update,
        seed: 0,
    }
}

fn qp(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_qp");
    for n in [3usize, 6, 12] {
        let dirs = DirectionSet::evenly_spaced(n).unwrap();
        let prob = assemble_qp(&dirs, 30.0, 0.01, 0.5, &v(&[0.3, -0.7]), &v(&[0.1, 0.2]));
        group.bench_with_input(BenchmarkId::new("active_set", n), &prob, |b, p| {
            b.iter(|| solve_qp(black_box(p)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("oracle", n), &prob, |b, p| {
            b.iter(|| solve_qp_oracle(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn control(c: &mut Criterion) {
    let cfg = transport(1.0, ControlUpdate::EveryStage);
    c.bench_function("control_step", |b| {
        b.iter(|| {
            control_step(
                &cfg.gains,
                &cfg.geom,
                &cfg.command,
                black_box(&cfg.initial_state),
                0.0,
            )
            .unwrap()
        })
    });
}

fn simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_1s");
    group.sample_size(20);
    for (name, mode) in [
        ("every_stage", ControlUpdate::EveryStage),
        ("zero_order_hold", ControlUpdate::ZeroOrderHold),
    ] {
        let cfg = transport(1.0, mode);
        group.bench_function(name, |b| b.iter(|| run(black_box(&cfg)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, qp, control, simulate);
criterion_main!(benches);
