//! CSV emitters. Numbers are written in shortest round-trip form.

use std::path::Path;

use cotrans_core::TrajectoryLog;

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn axis_names(prefix: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    AXES[..dim].iter().map(move |a| format!("{prefix}_{a}"))
}

fn write_rows(
    path: &Path,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn dims(log: &TrajectoryLog) -> (usize, usize) {
    log.states
        .first()
        .map_or((2, 0), |s| (s.dim(), s.robot_count()))
}

/// `t, p_o_*, v_o_*`, then per robot `p_i_*, p_star_i_*, s_star_i, force_i_*`.
pub fn write_trajectory(path: &Path, log: &TrajectoryLog) -> csv::Result<()> {
    let (dim, robots) = dims(log);
    let mut header = vec!["t".to_string()];
    header.extend(axis_names("p_o", dim));
    header.extend(axis_names("v_o", dim));
    for i in 1..=robots {
        header.extend(axis_names(&format!("p_{i}"), dim));
        header.extend(axis_names(&format!("p_star_{i}"), dim));
        header.push(format!("s_star_{i}"));
        header.extend(axis_names(&format!("force_{i}"), dim));
    }
    let rows = (0..log.len()).map(|k| {
        let s = &log.states[k];
        let mut row = vec![num(log.times[k])];
        row.extend(s.object_position.iter().map(|x| num(*x)));
        row.extend(s.object_velocity.iter().map(|x| num(*x)));
        for i in 0..robots {
            row.extend(s.robot_positions[i].iter().map(|x| num(*x)));
            row.extend(log.p_star[k][i].iter().map(|x| num(*x)));
            row.push(num(log.s_star[k][i]));
            row.extend(log.contact_forces[k][i].iter().map(|x| num(*x)));
        }
        row
    });
    write_rows(path, header, rows)
}

/// `t, vel_error_norm, pos_error_norm_max, qp_residual, saturated`.
pub fn write_errors(path: &Path, log: &TrajectoryLog) -> csv::Result<()> {
    let header = [
        "t",
        "vel_error_norm",
        "pos_error_norm_max",
        "qp_residual",
        "saturated",
    ]
    .map(String::from)
    .to_vec();
    let rows = (0..log.len()).map(|k| {
        vec![
            num(log.times[k]),
            num(log.vel_error_norm[k]),
            num(log.pos_error_norm_max[k]),
            num(log.qp_residual[k]),
            u8::from(log.saturation_flags[k]).to_string(),
        ]
    });
    write_rows(path, header, rows)
}

/// `t, v_c_*, v_o_*`, then the commanded velocity `v_i_*` of every robot.
pub fn write_velocities(path: &Path, log: &TrajectoryLog) -> csv::Result<()> {
    let (dim, robots) = dims(log);
    let mut header = vec!["t".to_string()];
    header.extend(axis_names("v_c", dim));
    header.extend(axis_names("v_o", dim));
    for i in 1..=robots {
        header.extend(axis_names(&format!("v_{i}"), dim));
    }
    let rows = (0..log.len()).map(|k| {
        let mut row = vec![num(log.times[k])];
        row.extend(log.command_velocity[k].iter().map(|x| num(*x)));
        row.extend(log.states[k].object_velocity.iter().map(|x| num(*x)));
        for v in &log.robot_velocities[k] {
            row.extend(v.iter().map(|x| num(*x)));
        }
        row
    });
    write_rows(path, header, rows)
}
