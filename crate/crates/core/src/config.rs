//! Run configuration: every knob of every stage, loadable from TOML.

use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::env::EnvConfig;
use crate::episode::{RewardConfig, TaskConstants};
use crate::error::{Error, Result};
use crate::gmm::{GmmConfig, DEFAULT_WINDOWS};
use crate::heightfield::TerrainSpec;
use crate::ppo::PpoConfig;
use crate::robot::RobotParams;
use crate::telemetry::CollectParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub terrain: TerrainSpec,
    pub robot: RobotParams,
    pub task: TaskConstants,
    pub rewards: RewardConfig,
    pub train: TrainConfig,
    pub telemetry: TelemetryConfig,
    pub gmm: SweepConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Iterations between intermediate checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub initial_flat: PpoConfig,
    /// Missing keys fall back to this stage's defaults, not the flat stage's.
    #[serde(deserialize_with = "general_with_defaults")]
    pub general: PpoConfig,
}

fn general_default() -> PpoConfig {
    PpoConfig { n_envs: 8, ..PpoConfig::default() }
}

fn general_with_defaults<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PpoConfig, D::Error> {
    let overrides = toml::Table::deserialize(d)?;
    let mut base = toml::Table::try_from(general_default()).map_err(D::Error::custom)?;
    base.extend(overrides);
    base.try_into().map_err(D::Error::custom)
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { checkpoint_every: 20, initial_flat: PpoConfig::default(), general: general_default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TelemetryConfig {
    pub n_steps: usize,
    pub discard: usize,
    /// Step between consecutive rolling windows.
    pub stride: usize,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        let c = CollectParams::default();
        Self { n_steps: c.n_steps, discard: c.discard, stride: 1 }
    }
}

impl TelemetryConfig {
    pub fn collect_params(&self) -> CollectParams {
        CollectParams { n_steps: self.n_steps, discard: self.discard }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub windows: Vec<usize>,
    pub max_iter: usize,
    pub tol: f64,
    pub sigma_floor: f64,
    pub restarts: usize,
    /// Bins of the rolling-std histogram in the report.
    pub histogram_bins: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let g = GmmConfig::default();
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
            max_iter: g.max_iter,
            tol: g.tol,
            sigma_floor: g.sigma_floor,
            restarts: g.restarts,
            histogram_bins: 40,
        }
    }
}

impl SweepConfig {
    pub fn gmm(&self, seed: u64) -> GmmConfig {
        GmmConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            sigma_floor: self.sigma_floor,
            restarts: self.restarts,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Episodes per model and area in the cross-evaluation table.
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 50 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig { robot: self.robot, task: self.task, rewards: self.rewards }
    }

    pub fn validate(&self) -> Result<()> {
        self.terrain.validate()?;
        self.env().validate()?;
        self.train.initial_flat.validate()?;
        self.train.general.validate()?;
        if self.telemetry.discard > self.telemetry.n_steps {
            return Err(Error::Config("telemetry discard exceeds n_steps".into()));
        }
        if self.telemetry.stride == 0 {
            return Err(Error::Config("telemetry stride must be positive".into()));
        }
        let retained = self.telemetry.n_steps - self.telemetry.discard;
        if self.gmm.windows.is_empty() || self.gmm.windows.iter().any(|&w| w < 2 || w > retained) {
            return Err(Error::Config(format!("windows must lie in [2, {retained}], got {:?}", self.gmm.windows)));
        }
        if self.gmm.histogram_bins == 0 || self.eval.episodes == 0 {
            return Err(Error::Config("histogram_bins and eval episodes must be positive".into()));
        }
        self.gmm.gmm(0).validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert_eq!(c.train.initial_flat.n_envs, 9);
        assert_eq!(c.train.general.n_envs, 8);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("seed = 7\n[train.general]\ntotal_steps = 1000\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.train.general.total_steps, 1000);
        assert_eq!(c.train.general.n_envs, 8);
        assert_eq!(c.terrain, TerrainSpec::default());
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.gmm.windows = vec![10, 1000];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn committed_default_file_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
    }
}
