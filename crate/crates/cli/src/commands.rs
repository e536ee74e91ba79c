use std::path::{Path, PathBuf};
use std::str::FromStr;

use cotrans_core::dynamics::lipschitz_estimate_f;
use cotrans_core::qp::{estimate_residual_ratio, estimate_solution_lipschitz, QpSampling};
use cotrans_core::simulation::DEMAND_FLOOR;
use cotrans_core::{
    certify_scenario, metrics, run, validate_scenario, GainCertificate, MetricsSummary,
    ScenarioConfig, SimError, ValidationReport,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::csv_out::{self, num};
use crate::plots;
use crate::scenario::{read_scenario, ScenarioFile};
use crate::CliError;

/// Half-width of the `(e, a_c)` box sampled for the allocation estimates.
pub const ESTIMATE_BOX: f64 = 2.0;
pub const ESTIMATE_SAMPLES: usize = 10_000;

/// Command-line overrides of the `[integration]` section.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
}

impl RunOptions {
    fn apply(&self, file: &mut ScenarioFile) {
        if let Some(dt) = self.dt {
            file.integration.dt = dt;
        }
        if let Some(t_end) = self.t_end {
            file.integration.t_end = t_end;
        }
        if let Some(seed) = self.seed {
            file.integration.seed = seed;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimates {
    pub lipschitz_force: f64,
    pub lipschitz_allocation: f64,
    pub delta: f64,
    /// `"run"` for the logged maximum residual ratio, `"sampled"` otherwise.
    pub delta_source: &'static str,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub config: ScenarioFile,
    pub completed: bool,
    pub failure: Option<String>,
    pub failure_time: Option<f64>,
    pub steps_logged: usize,
    pub validation: ValidationReport,
    pub metrics: MetricsSummary,
    pub estimates: Option<Estimates>,
    /// Built from sampled estimates; never a proof of stability.
    pub certificate: Option<GainCertificate>,
    pub warnings: Vec<String>,
    /// Files written next to `report.json`.
    pub manifest: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub config: ScenarioFile,
    pub validation: ValidationReport,
    pub estimates: Option<Estimates>,
    pub certificate: Option<GainCertificate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Final state flattened as `p_o, v_o, p_1, ..., p_N`.
    pub final_state: Vec<f64>,
}

fn hard_error(err: SimError) -> CliError {
    match err {
        SimError::HardInvalid(msg) => CliError::Config(msg),
        other => CliError::Runtime(other.to_string()),
    }
}

fn estimates(cfg: &ScenarioConfig, delta: Option<f64>) -> Result<Estimates, String> {
    let sampling = QpSampling {
        sample_box: ESTIMATE_BOX,
        samples: ESTIMATE_SAMPLES,
        seed: cfg.seed,
    };
    let (dirs, k_f) = (&cfg.gains.dirs, cfg.geom.stiffness);
    let lipschitz_allocation =
        estimate_solution_lipschitz(dirs, k_f, cfg.gains.eps, cfg.gains.k_v, sampling)
            .map_err(|e| e.to_string())?;
    let lipschitz_force = lipschitz_estimate_f(
        &cfg.geom,
        cfg.dim(),
        cfg.robot_count(),
        0.5 * cfg.geom.contact_distance(),
        ESTIMATE_SAMPLES,
        cfg.seed,
    );
    let (delta, delta_source) = match delta {
        Some(d) => (d, "run"),
        None => (
            estimate_residual_ratio(dirs, k_f, cfg.gains.eps, cfg.gains.k_v, sampling)
                .map_err(|e| e.to_string())?,
            "sampled",
        ),
    };
    Ok(Estimates {
        lipschitz_force,
        lipschitz_allocation,
        delta,
        delta_source,
        samples: ESTIMATE_SAMPLES,
    })
}

fn certify(
    cfg: &ScenarioConfig,
    delta: Option<f64>,
    warnings: &mut Vec<String>,
) -> (Option<Estimates>, Option<GainCertificate>) {
    let est = match estimates(cfg, delta) {
        Ok(e) => e,
        Err(msg) => {
            warnings.push(format!("Lipschitz estimation failed: {msg}"));
            return (None, None);
        }
    };
    match certify_scenario(
        cfg,
        est.delta,
        est.lipschitz_force,
        est.lipschitz_allocation,
    ) {
        Ok(cert) => {
            if !cert.small_gain_ok {
                warnings
                    .push("gains are not certified by the empirical small-gain test".to_string());
            }
            (Some(est), Some(cert))
        }
        Err(e) => {
            warnings.push(format!("certification skipped: {e}"));
            (Some(est), None)
        }
    }
}

fn prepare(path: &Path, opts: &RunOptions) -> Result<(ScenarioFile, ScenarioConfig), CliError> {
    let mut file = read_scenario(path)?;
    opts.apply(&mut file);
    let cfg = file.to_config()?;
    Ok((file, cfg))
}

/// Runs a scenario file and writes every output into `out_dir`.
pub fn run_scenario(
    path: &Path,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunOutcome, CliError> {
    let (file, cfg) = prepare(path, opts)?;
    run_config(&path.display().to_string(), file, &cfg, out_dir)
}

fn run_config(
    scenario: &str,
    file: ScenarioFile,
    cfg: &ScenarioConfig,
    out_dir: &Path,
) -> Result<RunOutcome, CliError> {
    let validation = validate_scenario(cfg).map_err(hard_error)?;
    let mut warnings = validation.warnings.clone();

    info!("integrating {} steps", cfg.step_count());
    let sim = run(cfg).map_err(hard_error)?;
    let summary = metrics(&sim.log);
    if summary.saturation_count > 0 {
        let first = sim
            .log
            .times
            .iter()
            .zip(&sim.log.saturation_flags)
            .find(|(_, s)| **s)
            .map(|(t, _)| *t)
            .unwrap_or(0.0);
        warnings.push(format!(
            "allocation saturated (s_i* >= D + D_o) at {} steps, first at t = {first}",
            summary.saturation_count
        ));
    }
    let any_demand = sim.log.demand_norm.iter().any(|u| *u > DEMAND_FLOOR);
    let delta = any_demand.then_some(summary.residual_ratio_max);
    let (estimates, certificate) = certify(cfg, delta, &mut warnings);

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut manifest = Vec::new();
    let mut emit = |name: &str, result: Result<(), String>| -> Result<(), CliError> {
        result.map_err(|e| CliError::io(out_dir.join(name), e))?;
        manifest.push(name.to_string());
        Ok(())
    };
    let log = &sim.log;
    emit(
        "trajectory.csv",
        csv_out::write_trajectory(&out_dir.join("trajectory.csv"), log).map_err(|e| e.to_string()),
    )?;
    emit(
        "errors.csv",
        csv_out::write_errors(&out_dir.join("errors.csv"), log).map_err(|e| e.to_string()),
    )?;
    emit(
        "velocities.csv",
        csv_out::write_velocities(&out_dir.join("velocities.csv"), log).map_err(|e| e.to_string()),
    )?;
    emit(
        "trajectory.svg",
        plots::trajectory(&out_dir.join("trajectory.svg"), log, &cfg.geom)
            .map_err(|e| e.to_string()),
    )?;
    emit(
        "errors.svg",
        plots::errors(&out_dir.join("errors.svg"), log).map_err(|e| e.to_string()),
    )?;
    emit(
        "object_velocity.svg",
        plots::object_velocity(&out_dir.join("object_velocity.svg"), log)
            .map_err(|e| e.to_string()),
    )?;
    emit(
        "robot_velocities.svg",
        plots::robot_velocities(&out_dir.join("robot_velocities.svg"), log)
            .map_err(|e| e.to_string()),
    )?;

    let report = RunReport {
        scenario: scenario.to_string(),
        config: file,
        completed: sim.completed(),
        failure: sim.failure.as_ref().map(|e| e.to_string()),
        failure_time: sim.failure.as_ref().and_then(SimError::time),
        steps_logged: log.len(),
        validation,
        metrics: summary,
        estimates,
        certificate,
        warnings,
        manifest,
    };
    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::io(&report_path, e))?;
    std::fs::write(&report_path, json + "\n").map_err(|e| CliError::io(&report_path, e))?;

    let final_state = log.states.last().map_or_else(Vec::new, |s| {
        let mut v: Vec<f64> = s
            .object_position
            .iter()
            .chain(s.object_velocity.iter())
            .copied()
            .collect();
        for p in &s.robot_positions {
            v.extend(p.iter());
        }
        v
    });
    Ok(RunOutcome {
        report,
        final_state,
    })
}

/// Validation and certification without integrating.
pub fn check(path: &Path) -> Result<CheckReport, CliError> {
    let (file, cfg) = prepare(path, &RunOptions::default())?;
    let validation = validate_scenario(&cfg).map_err(hard_error)?;
    let mut warnings = validation.warnings.clone();
    let (estimates, certificate) = certify(&cfg, None, &mut warnings);
    Ok(CheckReport {
        scenario: path.display().to_string(),
        config: file,
        validation,
        estimates,
        certificate,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    KP,
    KV,
    Eps,
    Dt,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::KP => "k_p",
            Self::KV => "k_v",
            Self::Eps => "eps",
            Self::Dt => "dt",
        }
    }

    fn apply(self, file: &mut ScenarioFile, value: f64) {
        match self {
            Self::KP => file.gains.k_p = value,
            Self::KV => file.gains.k_v = value,
            Self::Eps => file.gains.eps = value,
            Self::Dt => file.integration.dt = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k_p" => Ok(Self::KP),
            "k_v" => Ok(Self::KV),
            "eps" => Ok(Self::Eps),
            "dt" => Ok(Self::Dt),
            other => Err(format!(
                "unknown sweep parameter `{other}`; expected k_p, k_v, eps or dt"
            )),
        }
    }
}

/// One line of `summary.csv`.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub outcome: Result<RunOutcome, String>,
}

impl SweepRow {
    pub fn succeeded(&self) -> bool {
        self.outcome.as_ref().is_ok_and(|o| o.report.completed)
    }
}

/// Runs the scenario once per value, each into `out_dir/<param>_<value>`,
/// and writes `out_dir/summary.csv`.
pub fn sweep(
    path: &Path,
    param: SweepParam,
    values: &[String],
    out_dir: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    let values: Vec<&str> = values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Config(
            "sweep needs at least one value".to_string(),
        ));
    }
    let parsed = values
        .iter()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| CliError::Config(format!("sweep value `{v}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let base = read_scenario(path)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;

    let scenario = path.display().to_string();
    let rows: Vec<SweepRow> = values
        .par_iter()
        .zip(&parsed)
        .map(|(label, &value)| {
            let mut file = base.clone();
            param.apply(&mut file, value);
            let dir = out_dir.join(format!("{}_{label}", param.name()));
            let outcome = file
                .to_config()
                .map_err(CliError::from)
                .and_then(|cfg| run_config(&scenario, file.clone(), &cfg, &dir))
                .map_err(|e| e.to_string());
            if let Err(msg) = &outcome {
                warn!("{}={label}: {msg}", param.name());
            }
            SweepRow {
                value: label.to_string(),
                outcome,
            }
        })
        .collect();

    write_summary(&out_dir.join("summary.csv"), param, &rows)?;
    Ok(rows)
}

fn write_summary(path: &PathBuf, param: SweepParam, rows: &[SweepRow]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        param.name(),
        "completed",
        "failure",
        "vel_error_max",
        "vel_error_tail_mean",
        "pos_error_max",
        "pos_error_tail_mean",
        "circle_radius",
        "circle_rms_residual",
        "saturation_count",
        "residual_ratio_max",
        "small_gain_ok",
        "final_state_diff_vs_last",
    ])
    .map_err(io)?;
    let last = rows
        .last()
        .and_then(|r| r.outcome.as_ref().ok())
        .map(|o| &o.final_state);
    for row in rows {
        let record = match &row.outcome {
            Ok(o) => {
                let m = &o.report.metrics;
                let fit = m.circle_fit;
                let diff = last
                    .filter(|l| l.len() == o.final_state.len())
                    .map(|l| {
                        num(l
                            .iter()
                            .zip(&o.final_state)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max))
                    })
                    .unwrap_or_default();
                vec![
                    row.value.clone(),
                    o.report.completed.to_string(),
                    o.report.failure.clone().unwrap_or_default(),
                    num(m.vel_error.max),
                    num(m.vel_error.tail_mean),
                    num(m.pos_error.max),
                    num(m.pos_error.tail_mean),
                    fit.map(|f| num(f.radius)).unwrap_or_default(),
                    fit.map(|f| num(f.rms_residual)).unwrap_or_default(),
                    m.saturation_count.to_string(),
                    num(m.residual_ratio_max),
                    o.report
                        .certificate
                        .as_ref()
                        .map(|c| c.small_gain_ok.to_string())
                        .unwrap_or_default(),
                    diff,
                ]
            }
            Err(msg) => {
                let mut r = vec![row.value.clone(), "false".to_string(), msg.clone()];
                r.resize(13, String::new());
                r
            }
        };
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}
