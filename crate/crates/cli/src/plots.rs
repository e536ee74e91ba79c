//! Static SVG figures of a run.

use std::f64::consts::PI;
use std::path::Path;

use cotrans_core::{BodyGeometry, TrajectoryLog};
use plotters::prelude::*;

const MAX_POINTS: usize = 2000;
const SIZE: (u32, u32) = (900, 600);

pub type PlotResult = Result<(), Box<dyn std::error::Error>>;

fn palette(i: usize) -> RGBColor {
    const COLORS: [RGBColor; 6] = [
        RGBColor(31, 119, 180),
        RGBColor(214, 39, 40),
        RGBColor(44, 160, 44),
        RGBColor(148, 103, 189),
        RGBColor(255, 127, 14),
        RGBColor(23, 190, 207),
    ];
    COLORS[i % COLORS.len()]
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn sampled(len: usize) -> impl Iterator<Item = usize> + Clone {
    let step = stride(len);
    (0..len)
        .step_by(step)
        .chain((len > 0 && !(len - 1).is_multiple_of(step)).then(|| len - 1))
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn circle(cx: f64, cy: f64, r: f64) -> Vec<(f64, f64)> {
    (0..=64)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / 64.0;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

/// Plane view of the paths with the bodies drawn at a few instants.
pub fn trajectory(path: &Path, log: &TrajectoryLog, geom: &BodyGeometry) -> PlotResult {
    let robots = log.states.first().map_or(0, |s| s.robot_count());
    let margin = geom.object_radius.max(geom.robot_radius);
    let xs = log.states.iter().flat_map(|s| {
        std::iter::once(s.object_position[0]).chain(s.robot_positions.iter().map(|p| p[0]))
    });
    let ys = log.states.iter().flat_map(|s| {
        std::iter::once(s.object_position[1]).chain(s.robot_positions.iter().map(|p| p[1]))
    });
    let (x0, x1) = range(xs);
    let (y0, y1) = range(ys);
    // Equal scale on both axes so circles stay round.
    let aspect = SIZE.0 as f64 / SIZE.1 as f64;
    let half = ((x1 - x0) / aspect).max(y1 - y0) / 2.0 + margin;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let (xr, yr) = (cx - half * aspect..cx + half * aspect, cy - half..cy + half);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Object and robot paths", ("sans-serif", 22))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(xr, yr)?;
    chart.configure_mesh().x_desc("x").y_desc("y").draw()?;

    let idx = sampled(log.len());
    chart
        .draw_series(LineSeries::new(
            idx.clone().map(|k| {
                (
                    log.states[k].object_position[0],
                    log.states[k].object_position[1],
                )
            }),
            BLACK.stroke_width(2),
        ))?
        .label("object")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLACK));
    for i in 0..robots {
        let c = palette(i);
        chart
            .draw_series(LineSeries::new(
                idx.clone().map(|k| {
                    let p = &log.states[k].robot_positions[i];
                    (p[0], p[1])
                }),
                c,
            ))?
            .label(format!("robot {}", i + 1))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
    }

    let snapshots = 6.min(log.len());
    for j in 0..snapshots {
        let k = if snapshots == 1 {
            0
        } else {
            j * (log.len() - 1) / (snapshots - 1)
        };
        let s = &log.states[k];
        let o = &s.object_position;
        chart.draw_series(std::iter::once(PathElement::new(
            circle(o[0], o[1], geom.object_radius),
            BLACK.mix(0.6),
        )))?;
        for (i, p) in s.robot_positions.iter().enumerate() {
            chart.draw_series(std::iter::once(PathElement::new(
                circle(p[0], p[1], geom.robot_radius),
                palette(i).mix(0.6),
            )))?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Several named series over time in one chart.
fn time_series(
    path: &Path,
    title: &str,
    y_desc: &str,
    times: &[f64],
    series: &[(String, Vec<f64>)],
) -> PlotResult {
    let idx = sampled(times.len());
    let (y0, y1) = range(
        series
            .iter()
            .flat_map(|(_, ys)| idx.clone().map(move |k| ys[k])),
    );
    let t1 = times.last().copied().unwrap_or(1.0).max(1e-9);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t1, y0..y1)?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .y_desc(y_desc)
        .draw()?;
    for (i, (name, ys)) in series.iter().enumerate() {
        let c = palette(i);
        chart
            .draw_series(LineSeries::new(idx.clone().map(|k| (times[k], ys[k])), c))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

pub fn errors(path: &Path, log: &TrajectoryLog) -> PlotResult {
    time_series(
        path,
        "Tracking errors",
        "norm",
        &log.times,
        &[
            ("|v_o - v_c|".to_string(), log.vel_error_norm.clone()),
            (
                "max_i |p_i - p_i*|".to_string(),
                log.pos_error_norm_max.clone(),
            ),
        ],
    )
}

pub fn object_velocity(path: &Path, log: &TrajectoryLog) -> PlotResult {
    let dim = log.states.first().map_or(0, |s| s.dim());
    let mut series = Vec::new();
    for (a, name) in ["x", "y", "z"].iter().enumerate().take(dim) {
        series.push((
            format!("v_o,{name}"),
            log.states.iter().map(|s| s.object_velocity[a]).collect(),
        ));
        series.push((
            format!("v_c,{name}"),
            log.command_velocity.iter().map(|v| v[a]).collect(),
        ));
    }
    time_series(
        path,
        "Object velocity and command",
        "velocity",
        &log.times,
        &series,
    )
}

pub fn robot_velocities(path: &Path, log: &TrajectoryLog) -> PlotResult {
    let (dim, robots) = log
        .states
        .first()
        .map_or((0, 0), |s| (s.dim(), s.robot_count()));
    let mut series = Vec::new();
    for i in 0..robots {
        for (a, name) in ["x", "y", "z"].iter().enumerate().take(dim) {
            series.push((
                format!("v_{},{name}", i + 1),
                log.robot_velocities.iter().map(|v| v[i][a]).collect(),
            ));
        }
    }
    time_series(
        path,
        "Robot velocity commands",
        "velocity",
        &log.times,
        &series,
    )
}
