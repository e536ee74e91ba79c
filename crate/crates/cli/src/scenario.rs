//! Scenario files.
//!
//! A scenario is a TOML document with five sections:
//!
//! ```toml
//! [geometry]
//! robot_radius = 0.2
//! object_radius = 0.6
//! stiffness = 30.0
//! directions = "evenly_spaced(3)"   # or [[1.0, 0.0], [0.0, 1.0], ...]
//!
//! [gains]
//! k_v = 0.5
//! k_p = 1.0
//! eps = 0.01                        # optional
//!
//! [command]
//! kind = "circular"                 # "zero", "constant" (needs `velocity`) or "circular"
//! amplitude = 1.0
//! period = 20.0
//!
//! [initial]
//! object_position = [-8.0, 0.0]
//! object_velocity = [0.0, 0.0]      # optional, defaults to rest
//! robot_positions = [[-7.0, 1.0], [-9.0, 1.0], [-9.0, -1.0]]
//!
//! [integration]                     # optional section
//! dt = 0.001
//! t_end = 60.0
//! seed = 0
//! control = "stage"                 # or "zoh"
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use cotrans_core::controller::DEFAULT_EPS;
use cotrans_core::simulation::{ControlUpdate, DEFAULT_DT, DEFAULT_T_END};
use cotrans_core::{
    BodyGeometry, CommandSignal, ControllerGains, DirectionSet, ScenarioConfig, SystemState, VecN,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{key}`: {message}")]
    Schema { key: String, message: String },
}

impl ScenarioError {
    fn schema(key: &str, message: impl Into<String>) -> Self {
        Self::Schema {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub geometry: GeometrySection,
    pub gains: GainsSection,
    pub command: CommandSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub integration: IntegrationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub robot_radius: f64,
    pub object_radius: f64,
    pub stiffness: f64,
    pub directions: Directions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Directions {
    Keyword(String),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub k_v: f64,
    pub k_p: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Zero,
    Constant,
    Circular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSection {
    pub kind: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub object_position: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_velocity: Option<Vec<f64>>,
    pub robot_positions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ControlMode {
    #[default]
    #[serde(rename = "stage")]
    Stage,
    #[serde(rename = "zoh")]
    Zoh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub control: ControlMode,
}

impl Default for IntegrationSection {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            seed: 0,
            control: ControlMode::Stage,
        }
    }
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_t_end() -> f64 {
    DEFAULT_T_END
}

pub fn read_scenario(path: &Path) -> Result<ScenarioFile, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Reads and converts a scenario file.
pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    read_scenario(path)?.to_config()
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioFile, ScenarioError> {
    if let Err(err) = text.parse::<toml::Table>() {
        return Err(ScenarioError::Parse {
            line: err.span().map_or(1, |s| line_of(text, s.start)),
            message: err.message().to_string(),
        });
    }
    toml::from_str(text).map_err(|err| {
        let key = err
            .span()
            .map(|s| key_at(text, s.start))
            .or_else(|| missing_field(err.message()))
            .unwrap_or_else(|| "<document>".to_string());
        ScenarioError::Schema {
            key,
            message: err.message().to_string(),
        }
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// `section.key` for the entry whose span starts at `offset`.
fn key_at(text: &str, offset: usize) -> String {
    let offset = offset.min(text.len());
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split('=').next().unwrap_or("").trim();
    let section = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(['[', ']']).trim());
    let trimmed = line.trim();
    if trimmed.starts_with('[') {
        return trimmed.trim_matches(['[', ']']).trim().to_string();
    }
    match section {
        Some(s) if !key.is_empty() => format!("{s}.{key}"),
        Some(s) => s.to_string(),
        None => key.to_string(),
    }
}

fn missing_field(message: &str) -> Option<String> {
    let rest = message.split("missing field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

fn vector(key: &str, values: &[f64], dim: usize) -> Result<VecN, ScenarioError> {
    if values.len() != dim {
        return Err(ScenarioError::schema(
            key,
            format!("expected {dim} components, found {}", values.len()),
        ));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(ScenarioError::schema(key, "components must be finite"));
    }
    Ok(VecN::from_column_slice(values))
}

fn positive(key: &str, value: f64) -> Result<f64, ScenarioError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ScenarioError::schema(
            key,
            format!("must be positive, got {value}"),
        ))
    }
}

fn evenly_spaced_count(keyword: &str) -> Option<usize> {
    keyword
        .trim()
        .strip_prefix("evenly_spaced(")?
        .strip_suffix(')')?
        .trim()
        .parse()
        .ok()
}

impl ScenarioFile {
    pub fn to_config(&self) -> Result<ScenarioConfig, ScenarioError> {
        let dim = self.initial.object_position.len();
        if !(2..=3).contains(&dim) {
            return Err(ScenarioError::schema(
                "initial.object_position",
                format!("dimension must be 2 or 3, got {dim}"),
            ));
        }

        let g = &self.geometry;
        let geom = BodyGeometry {
            robot_radius: positive("geometry.robot_radius", g.robot_radius)?,
            object_radius: positive("geometry.object_radius", g.object_radius)?,
            stiffness: positive("geometry.stiffness", g.stiffness)?,
        };

        let dirs = match &g.directions {
            Directions::Keyword(word) => {
                let count = evenly_spaced_count(word).ok_or_else(|| {
                    ScenarioError::schema(
                        "geometry.directions",
                        format!("unknown keyword `{word}`, expected evenly_spaced(N)"),
                    )
                })?;
                if dim != 2 {
                    return Err(ScenarioError::schema(
                        "geometry.directions",
                        "evenly_spaced(N) is only defined in the plane; list 3D directions explicitly",
                    ));
                }
                DirectionSet::evenly_spaced(count)
            }
            Directions::Explicit(rows) => rows
                .iter()
                .map(|r| vector("geometry.directions", r, dim))
                .collect::<Result<Vec<_>, _>>()
                .map(DirectionSet::new)?,
        }
        .map_err(|e| ScenarioError::schema("geometry.directions", e.to_string()))?;

        let gains = ControllerGains {
            k_v: positive("gains.k_v", self.gains.k_v)?,
            k_p: positive("gains.k_p", self.gains.k_p)?,
            eps: positive("gains.eps", self.gains.eps)?,
            dirs,
        };

        let c = &self.command;
        let command = match c.kind {
            CommandKind::Zero => CommandSignal::Zero { dim },
            CommandKind::Constant => {
                let v = c.velocity.as_ref().ok_or_else(|| {
                    ScenarioError::schema("command.velocity", "required for kind = \"constant\"")
                })?;
                CommandSignal::Constant {
                    velocity: vector("command.velocity", v, dim)?,
                }
            }
            CommandKind::Circular => {
                let amplitude = c.amplitude.ok_or_else(|| {
                    ScenarioError::schema("command.amplitude", "required for kind = \"circular\"")
                })?;
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(ScenarioError::schema(
                        "command.amplitude",
                        format!("must be nonnegative, got {amplitude}"),
                    ));
                }
                let period = c.period.ok_or_else(|| {
                    ScenarioError::schema("command.period", "required for kind = \"circular\"")
                })?;
                CommandSignal::Circular {
                    amplitude,
                    period: positive("command.period", period)?,
                    dim,
                }
            }
        };

        let init = &self.initial;
        let robot_positions = init
            .robot_positions
            .iter()
            .map(|p| vector("initial.robot_positions", p, dim))
            .collect::<Result<Vec<_>, _>>()?;
        if robot_positions.len() != gains.dirs.len() {
            return Err(ScenarioError::schema(
                "initial.robot_positions",
                format!(
                    "{} robots but {} directions",
                    robot_positions.len(),
                    gains.dirs.len()
                ),
            ));
        }
        let initial_state = SystemState {
            object_position: vector("initial.object_position", &init.object_position, dim)?,
            object_velocity: match &init.object_velocity {
                Some(v) => vector("initial.object_velocity", v, dim)?,
                None => VecN::zeros(dim),
            },
            robot_positions,
        };

        let integ = &self.integration;
        let dt = positive("integration.dt", integ.dt)?;
        let t_end = positive("integration.t_end", integ.t_end)?;
        if t_end < dt {
            return Err(ScenarioError::schema(
                "integration.t_end",
                format!("must be at least dt = {dt}, got {t_end}"),
            ));
        }

        Ok(ScenarioConfig {
            geom,
            gains,
            command,
            initial_state,
            dt,
            t_end,
            control_update: match integ.control {
                ControlMode::Stage => ControlUpdate::EveryStage,
                ControlMode::Zoh => ControlUpdate::ZeroOrderHold,
            },
            seed: integ.seed,
        })
    }
}
