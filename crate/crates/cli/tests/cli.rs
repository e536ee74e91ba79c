use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cotrans::{parse_scenario, run_scenario, sweep, RunOptions, SweepParam};
use cotrans_core::{run, CommandSignal};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn cotrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotrans"))
        .args(args)
        .env("COTRANS_LOG", "error")
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("custom.scenario");
    fs::write(&path, body).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn bundled_set1_is_parsed_verbatim() {
    let cfg = parse_scenario(&scenario("paperset1.scenario")).unwrap();
    assert_eq!(cfg.geom.robot_radius, 0.2);
    assert_eq!(cfg.geom.object_radius, 0.6);
    assert_eq!(cfg.geom.stiffness, 30.0);
    assert_eq!(
        (cfg.gains.k_v, cfg.gains.k_p, cfg.gains.eps),
        (0.5, 1.0, 0.01)
    );
    assert_eq!(cfg.gains.dirs.len(), 3);
    assert_eq!(cfg.gains.dirs.get(0).as_slice(), &[1.0, 0.0]);
    assert_eq!(
        cfg.command,
        CommandSignal::Circular {
            amplitude: 1.0,
            period: 20.0,
            dim: 2
        }
    );
    assert_eq!(cfg.initial_state.object_position.as_slice(), &[-8.0, 0.0]);
    let robots: Vec<&[f64]> = cfg
        .initial_state
        .robot_positions
        .iter()
        .map(|p| p.as_slice())
        .collect();
    assert_eq!(robots, vec![&[-7.0, 1.0][..], &[-9.0, 1.0], &[-9.0, -1.0]]);
    assert_eq!((cfg.dt, cfg.t_end), (1e-3, 60.0));

    let cfg2 = parse_scenario(&scenario("paperset2.scenario")).unwrap();
    assert_eq!(cfg2.gains.k_p, 0.1);
}

#[test]
fn every_bundled_scenario_parses() {
    for entry in fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "scenario") {
            parse_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

#[test]
fn run_writes_manifest_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cotrans(&[
        "run",
        path_str(&scenario("equilibrium.scenario")),
        "-o",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let manifest = report["manifest"].as_array().unwrap();
    let names: Vec<&str> = manifest.iter().map(|v| v.as_str().unwrap()).collect();
    for f in [
        "trajectory.csv",
        "errors.csv",
        "velocities.csv",
        "trajectory.svg",
        "errors.svg",
        "object_velocity.svg",
        "robot_velocities.svg",
    ] {
        assert!(names.contains(&f), "{f} missing from manifest");
    }
    for name in names {
        assert!(out.join(name).is_file(), "{name} not written");
    }
    assert_eq!(report["completed"], true);
    assert_eq!(report["certificate"]["empirical"], true);
    assert!(report["metrics"]["vel_error"]["max"].as_f64().unwrap() < 1e-9);
    assert!(report["metrics"]["pos_error"]["max"].as_f64().unwrap() < 1e-9);
    assert_eq!(report["config"]["integration"]["dt"], 0.001);
}

#[test]
fn trajectory_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        t_end: Some(2.0),
        ..Default::default()
    };
    let path = scenario("paperset1.scenario");
    run_scenario(&path, dir.path(), &opts).unwrap();
    let mut cfg = parse_scenario(&path).unwrap();
    cfg.t_end = 2.0;
    let log = run(&cfg).unwrap().log;

    let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(header.len(), 1 + 4 + 3 * 7);
    assert_eq!(&header[..5], &["t", "p_o_x", "p_o_y", "v_o_x", "v_o_y"]);
    assert_eq!(
        &header[5..12],
        &[
            "p_1_x",
            "p_1_y",
            "p_star_1_x",
            "p_star_1_y",
            "s_star_1",
            "force_1_x",
            "force_1_y"
        ]
    );
    assert_eq!(rows.len(), log.len());
    let bits = |s: &str| s.parse::<f64>().unwrap().to_bits();
    for (k, row) in rows.iter().enumerate() {
        let st = &log.states[k];
        assert_eq!(bits(&row[0]), log.times[k].to_bits());
        assert_eq!(bits(&row[1]), st.object_position[0].to_bits());
        assert_eq!(bits(&row[4]), st.object_velocity[1].to_bits());
        for i in 0..3 {
            let c = 5 + 7 * i;
            assert_eq!(bits(&row[c]), st.robot_positions[i][0].to_bits());
            assert_eq!(bits(&row[c + 3]), log.p_star[k][i][1].to_bits());
            assert_eq!(bits(&row[c + 4]), log.s_star[k][i].to_bits());
            assert_eq!(bits(&row[c + 5]), log.contact_forces[k][i][0].to_bits());
        }
        for field in row {
            assert!(field.trim_start_matches('-').len() <= 24, "{field}");
        }
    }

    let (header, rows) = read_csv(&dir.path().join("errors.csv"));
    assert_eq!(
        header,
        [
            "t",
            "vel_error_norm",
            "pos_error_norm_max",
            "qp_residual",
            "saturated"
        ]
    );
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(bits(&row[1]), log.vel_error_norm[k].to_bits());
        assert_eq!(bits(&row[2]), log.pos_error_norm_max[k].to_bits());
        assert_eq!(bits(&row[3]), log.qp_residual[k].to_bits());
        assert_eq!(row[4], if log.saturation_flags[k] { "1" } else { "0" });
    }

    let (header, rows) = read_csv(&dir.path().join("velocities.csv"));
    assert_eq!(header.len(), 1 + 2 + 2 + 3 * 2);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(bits(&row[1]), log.command_velocity[k][0].to_bits());
        assert_eq!(bits(&row[5]), log.robot_velocities[k][0][0].to_bits());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cotrans(&[
            "run",
            path_str(&scenario("paperset1.scenario")),
            "-o",
            path_str(out),
            "--t-end",
            "3",
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["trajectory.csv", "errors.csv", "velocities.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = cotrans(&[
        "run",
        path_str(&scenario("paperset1.scenario")),
        "-o",
        path_str(dir.path()),
        "--dt",
        "5e-4",
        "--t-end",
        "1",
        "--seed",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["integration"]["dt"], 5e-4);
    assert_eq!(report["config"]["integration"]["seed"], 7);
    assert_eq!(report["steps_logged"], 2001);
    let (_, rows) = read_csv(&dir.path().join("errors.csv"));
    assert_eq!(rows[1][0], "0.0005");
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string(scenario("paperset1.scenario")).unwrap();
    let cases = [
        (base.replace("k_p = 1.0", "k_p = = 1.0"), "line 12"),
        (
            base.replace("k_p = 1.0", "k_p = 1.0\nk_d = 2.0"),
            "gains.k_d",
        ),
        (
            base.replace("stiffness = 30.0", "stiffness = -30.0"),
            "geometry.stiffness",
        ),
        (base.replace("k_p = 1.0", "k_p = 0.0"), "gains.k_p"),
        (base.replace("[-9.0, -1.0]", "[-8.0, 0.0]"), "object center"),
    ];
    for (body, needle) in cases {
        let path = write_scenario(dir.path(), &body);
        let o = cotrans(&[
            "run",
            path_str(&path),
            "-o",
            path_str(&dir.path().join("out")),
        ]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(1), "{err}");
        assert!(err.contains(needle), "expected `{needle}` in: {err}");
    }
    let o = cotrans(&["run"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cotrans(&[
        "sweep",
        path_str(&scenario("paperset1.scenario")),
        "--param",
        "k_i",
        "--values",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = cotrans(&["run", path_str(&dir.path().join("missing.scenario"))]);
    assert_eq!(o.status.code(), Some(3));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = cotrans(&[
        "run",
        path_str(&scenario("equilibrium.scenario")),
        "-o",
        path_str(&blocker.join("out")),
        "--t-end",
        "0.1",
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn check_reports_without_integrating() {
    let o = cotrans(&["check", path_str(&scenario("paperset1.scenario"))]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["validation"]["positively_spanning"], true);
    let dev = report["validation"]["initial_deviations"][0]
        .as_f64()
        .unwrap();
    assert!((dev - 1.0198).abs() < 1e-4);
    assert_eq!(report["certificate"]["empirical"], true);
    assert_eq!(report["estimates"]["delta_source"], "sampled");
    assert!(report.get("manifest").is_none());
}

#[test]
fn sweep_compares_gains() {
    let dir = tempfile::tempdir().unwrap();
    let o = cotrans(&[
        "sweep",
        path_str(&scenario("paperset1.scenario")),
        "--param",
        "k_p",
        "--values",
        "0.1,1.0",
        "-o",
        path_str(dir.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let (header, rows) = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(header[0], "k_p");
    let tail = header
        .iter()
        .position(|h| h == "vel_error_tail_mean")
        .unwrap();
    let rms = header
        .iter()
        .position(|h| h == "circle_rms_residual")
        .unwrap();
    assert_eq!(rows.len(), 2);
    let num = |r: &Vec<String>, c: usize| r[c].parse::<f64>().unwrap();
    assert!(num(&rows[0], tail) > num(&rows[1], tail));
    assert!(num(&rows[0], rms) > num(&rows[1], rms));
    assert!(dir.path().join("k_p_0.1/trajectory.csv").is_file());
    assert!(dir.path().join("k_p_1.0/report.json").is_file());
}

#[test]
fn dt_sweep_gives_a_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut path = scenario("paperset1.scenario");
    let body = fs::read_to_string(&path)
        .unwrap()
        .replace("t_end = 60.0", "t_end = 10.0");
    path = write_scenario(dir.path(), &body);
    let values = ["4e-3", "2e-3", "1e-3"].map(String::from);
    let rows = sweep(&path, SweepParam::Dt, &values, &dir.path().join("sweep")).unwrap();
    assert!(rows.iter().all(|r| r.succeeded()));
    let (header, table) = read_csv(&dir.path().join("sweep/summary.csv"));
    let c = header
        .iter()
        .position(|h| h == "final_state_diff_vs_last")
        .unwrap();
    let d0: f64 = table[0][c].parse().unwrap();
    let d1: f64 = table[1][c].parse().unwrap();
    let d2: f64 = table[2][c].parse().unwrap();
    assert_eq!(d2, 0.0);
    assert!(d0 > d1 && d1 > 0.0);
    assert!(d1 < 1e-4);
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("equilibrium.scenario");
    let o = cotrans(&[
        "sweep",
        path_str(&sc),
        "--param",
        "k_p",
        "--values",
        "",
        "-o",
        path_str(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(sweep(&sc, SweepParam::KP, &[], dir.path()).is_err());

    let values = ["-1", "2"].map(String::from);
    let mut body = fs::read_to_string(&sc).unwrap();
    body = body.replace("t_end = 10.0", "t_end = 0.5");
    let path = write_scenario(dir.path(), &body);
    let rows = sweep(&path, SweepParam::KP, &values, &dir.path().join("s")).unwrap();
    assert!(!rows[0].succeeded());
    assert!(rows[1].succeeded());
    let (_, table) = read_csv(&dir.path().join("s/summary.csv"));
    assert_eq!(table[0][1], "false");
    assert!(table[0][2].contains("k_p"));
    assert_eq!(table[1][1], "true");

    let o = cotrans(&[
        "sweep",
        path_str(&path),
        "--param",
        "k_p",
        "--values",
        "-1,2",
        "-o",
        path_str(&dir.path().join("t")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn slow_position_loop_reports_larger_error() {
    let dir = tempfile::tempdir().unwrap();
    let tail = |name: &str| {
        let out = dir.path().join(name);
        let r = run_scenario(&scenario(name), &out, &RunOptions::default()).unwrap();
        r.report.metrics.vel_error.tail_mean
    };
    assert!(tail("paperset2.scenario") > tail("paperset1.scenario"));
}
