//! Experiment configuration files (TOML, strict schema).

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rdsw_core::limit_laws::ObservableKind;
use rdsw_core::{gallery, CocycleSpec, MapSpec, Observable, PhaseSpace, Point, ProjectivePoint, SquareMatrix, SystemSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Stationary,
    Sync,
    Limits,
    Lyapunov,
    Ld,
    Cocycle,
    Ulam,
    Verify,
    Gallery,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.to_possible_value().expect("no skipped variants");
        f.write_str(s.get_name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorChoice {
    #[default]
    Transfer,
    LaplaceMarkov,
}

/// A point given as a coordinate in `[0, 1]` or as a vector in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointInput {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub burn_in: Option<usize>,
    pub samples: Option<usize>,
    pub x: Option<PointInput>,
    pub y: Option<PointInput>,
    pub x0: Option<f64>,
    pub n: Option<usize>,
    pub replicas: Option<usize>,
    pub alpha: Option<f64>,
    pub observable: Option<ObservableKind>,
    pub holder_alpha: Option<f64>,
    pub holder_const: Option<f64>,
    pub scale: Option<f64>,
    pub offset: Option<f64>,
    pub lil_n_max: Option<usize>,
    pub lil_replicas: Option<usize>,
    pub epsilons: Option<Vec<f64>>,
    pub horizons: Option<Vec<usize>>,
    pub gamma_hat: Option<f64>,
    pub deltas: Option<Vec<f64>>,
    pub k_cells: Option<usize>,
    pub operator: Option<OperatorChoice>,
    pub eigenvalues: Option<usize>,
    pub write_matrix: Option<bool>,
    pub radius: Option<f64>,
    pub lc_n: Option<usize>,
    pub lc_replicas: Option<usize>,
    pub case: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineSystem {
    maps: Vec<MapSpec>,
    probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineCocycle {
    matrices: Vec<SquareMatrix>,
    probs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<CommandName>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    #[serde(default)]
    format: Format,
    threads: Option<usize>,
    system: Option<toml::Value>,
    cocycle: Option<toml::Value>,
    #[serde(default)]
    params: Params,
}

/// Validated configuration; gallery ids and inline definitions are already
/// resolved.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Option<CommandName>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
    pub system: Option<SystemSpec>,
    pub cocycle: Option<CocycleSpec>,
    pub params: Params,
    /// The parsed file, echoed into the manifest.
    pub echo: toml::Table,
}

fn config_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.display().to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(path, e.to_string()))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_error(path, e.to_string()))?;
        let echo: toml::Table = toml::from_str(text).map_err(|e| config_error(path, e.to_string()))?;
        let system = raw
            .system
            .map(resolve_system)
            .transpose()
            .map_err(|m| config_error(path, format!("system: {m}")))?;
        let cocycle = raw
            .cocycle
            .map(resolve_cocycle)
            .transpose()
            .map_err(|m| config_error(path, format!("cocycle: {m}")))?;
        if raw.threads == Some(0) {
            return Err(config_error(path, "threads: must be >= 1"));
        }
        Ok(Self {
            command: raw.command,
            seed: raw.seed,
            output: raw.output,
            format: raw.format,
            threads: raw.threads,
            system,
            cocycle,
            params: raw.params,
            echo,
        })
    }

    /// Configuration for commands run without a file.
    pub fn empty() -> Self {
        Self {
            command: None,
            seed: None,
            output: None,
            format: Format::Csv,
            threads: None,
            system: None,
            cocycle: None,
            params: Params::default(),
            echo: toml::Table::new(),
        }
    }

    pub fn require_system(&self) -> Result<&SystemSpec, CliError> {
        self.system.as_ref().ok_or(CliError::Missing("system"))
    }

    pub fn require_cocycle(&self) -> Result<&CocycleSpec, CliError> {
        self.cocycle.as_ref().ok_or(CliError::Missing("cocycle"))
    }

    /// The observable of the `limits` command; coordinate by default.
    pub fn observable(&self, space: PhaseSpace) -> Result<Observable, CliError> {
        let p = &self.params;
        let kind = p.observable.clone().unwrap_or(ObservableKind::Coordinate);
        let default_const = match kind {
            ObservableKind::Coordinate => Some(1.0),
            ObservableKind::Cos2pi | ObservableKind::Sin2pi => Some(std::f64::consts::TAU),
            ObservableKind::Constant { .. } | ObservableKind::SymbolIndicator { .. } => Some(0.0),
            ObservableKind::CustomTabulated { .. } => None,
        };
        let holder_const = p
            .holder_const
            .or(default_const)
            .ok_or_else(|| CliError::Invalid("params.holder_const is required for tabulated observables".into()))?;
        let h = Observable::new(kind, p.holder_alpha.unwrap_or(1.0), holder_const, space)
            .map_err(|e| CliError::Invalid(format!("params.observable: {e}")))?;
        Ok(h.affine(p.scale.unwrap_or(1.0), p.offset.unwrap_or(0.0)))
    }
}

fn resolve_system(v: toml::Value) -> Result<SystemSpec, String> {
    match v {
        toml::Value::String(id) => gallery::system(&id).map_err(|e| e.to_string()),
        other => {
            let inline: InlineSystem = other.try_into().map_err(|e: toml::de::Error| e.message().to_string())?;
            match inline.probs {
                Some(p) => SystemSpec::new(inline.maps, p),
                None => SystemSpec::uniform(inline.maps),
            }
            .map_err(|e| e.to_string())
        }
    }
}

fn resolve_cocycle(v: toml::Value) -> Result<CocycleSpec, String> {
    match v {
        toml::Value::String(id) => gallery::cocycle(&id).map_err(|e| e.to_string()),
        other => {
            let inline: InlineCocycle = other.try_into().map_err(|e: toml::de::Error| e.message().to_string())?;
            let n = inline.matrices.len().max(1);
            let probs = inline.probs.unwrap_or_else(|| vec![1.0 / n as f64; n]);
            CocycleSpec::new(inline.matrices, probs).map_err(|e| e.to_string())
        }
    }
}

/// Resolves a point parameter against the phase space of `sys`.
pub fn system_point(sys: &SystemSpec, p: &PointInput, name: &str) -> Result<Point, CliError> {
    let bad = |e: rdsw_core::Error| CliError::Invalid(format!("params.{name}: {e}"));
    match p {
        PointInput::Scalar(x) => sys.point(*x).map_err(bad),
        PointInput::Vector(v) => {
            let q = ProjectivePoint::new(v).map_err(bad)?;
            let pt = Point::Projective(q);
            sys.space().check(&pt).map_err(bad)?;
            Ok(pt)
        }
    }
}

/// A direction in the cocycle's space: an angle in radians (plane only) or
/// a vector.
pub fn projective_point(p: &PointInput, name: &str) -> Result<ProjectivePoint, CliError> {
    match p {
        PointInput::Scalar(theta) => Ok(ProjectivePoint::from_angle(*theta)),
        PointInput::Vector(v) => {
            ProjectivePoint::new(v).map_err(|e| CliError::Invalid(format!("params.{name}: {e}")))
        }
    }
}

/// Scalar coordinate of a one-dimensional point parameter.
pub fn scalar(p: &PointInput, name: &str) -> Result<f64, CliError> {
    match p {
        PointInput::Scalar(x) => Ok(*x),
        PointInput::Vector(_) => Err(CliError::Invalid(format!("params.{name}: expected a coordinate"))),
    }
}
