//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use circlebreak::map::MapDocument;
use circlebreak::real::Precision;
use circlebreak::stochastic::NoiseModel;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRange {
    pub min: usize,
    pub max: usize,
}

impl Default for LevelRange {
    fn default() -> Self {
        LevelRange { min: 2, max: 12 }
    }
}

impl LevelRange {
    pub fn iter(&self) -> std::ops::RangeInclusive<usize> {
        self.min..=self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Auto(Auto),
}

impl Param {
    pub fn value(&self) -> Option<f64> {
        match self {
            Param::Value(v) => Some(*v),
            Param::Auto(_) => None,
        }
    }
}

/// σ_n = C₁ n^{−τ}; either constant may be "auto".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSchedule {
    #[serde(rename = "C1")]
    pub c1: Param,
    pub tau: Param,
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        SigmaSchedule {
            c1: Param::Auto(Auto::Auto),
            tau: Param::Auto(Auto::Auto),
        }
    }
}

fn default_z0() -> Vec<f64> {
    vec![0.1]
}

fn default_betas() -> Vec<f64> {
    vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
}

fn default_depth() -> usize {
    10
}

fn default_noise() -> NoiseModel {
    NoiseModel::uniform(1.0)
}

fn default_replicas() -> usize {
    10_000
}

fn default_l() -> usize {
    4
}

fn default_max_tube_level() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub map: MapDocument,
    pub seed: u64,
    #[serde(default = "default_z0")]
    pub z0: Vec<f64>,
    #[serde(default, alias = "m_range")]
    pub levels: LevelRange,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub sigma: SigmaSchedule,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_l")]
    pub l: usize,
    #[serde(default = "default_max_tube_level")]
    pub max_tube_level: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Deepest level each precision mode resolves for golden-type maps.
pub fn max_supported_level(p: Precision) -> usize {
    match p {
        Precision::Double => 24,
        Precision::Extended => 40,
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.levels.min > self.levels.max {
            return bad(format!("levels.min {} exceeds levels.max {}", self.levels.min, self.levels.max));
        }
        let limit = max_supported_level(self.map.precision);
        if self.levels.max > limit || self.depth > limit {
            return bad(format!("levels up to {limit} are supported in {:?} precision", self.map.precision));
        }
        if self.z0.is_empty() || self.z0.iter().any(|z| !z.is_finite()) {
            return bad("z0 must list at least one finite base point".into());
        }
        if self.depth == 0 {
            return bad("depth must be positive".into());
        }
        if self.replicas < 2 {
            return bad("replicas must be at least 2".into());
        }
        self.noise.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(c1) = self.sigma.c1.value() {
            if !(c1 > 0.0) {
                return bad(format!("σ schedule C1 = {c1} gives σ = 0; the run would be deterministic"));
            }
        }
        Ok(())
    }
}
