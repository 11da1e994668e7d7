//! Experiment configuration file (JSON, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container;
use crate::dynamics::{DecoherenceSpec, IntegratorConfig};
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::operators::PotentialSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub n_points: usize,
    pub dt: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        // tω0 from 0 to 20 inclusive
        Self { n_points: 401, dt: 0.05 }
    }
}

impl TrajectoryConfig {
    pub fn horizon(&self) -> f64 {
        (self.n_points - 1) as f64 * self.dt
    }

    /// Number of samples per observable covering `[0, traj_len]`.
    pub fn slice_len(&self, traj_len: f64) -> Result<usize> {
        if !(traj_len >= 0.0 && traj_len.is_finite()) {
            return Err(Error::Config(format!("trajectory length must be >= 0, got {traj_len}")));
        }
        let n = (traj_len / self.dt + 1e-9).floor() as usize + 1;
        if n > self.n_points {
            return Err(Error::Config(format!(
                "trajectory length {traj_len} needs {n} samples but only {} are stored",
                self.n_points
            )));
        }
        Ok(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_count: usize,
    pub val_count: usize,
    pub seed: u64,
    /// Rank of the Ginibre factor; `None` samples full-rank states.
    #[serde(default)]
    pub rank: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { train_count: 2000, val_count: 1000, seed: 1, rank: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            _ => Err(Error::Config(format!("split must be 'train' or 'val', got '{s}'"))),
        }
    }
}

impl DatasetConfig {
    /// Global state indices: training states first, validation states after them.
    pub fn index_range(&self, split: Split) -> std::ops::Range<u64> {
        let t = self.train_count as u64;
        match split {
            Split::Train => 0..t,
            Split::Val => t..t + self.val_count as u64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub gamma: f64,
    pub d: usize,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub simulation: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(potential: PotentialSpec, gamma: f64, d: usize) -> Self {
        Self {
            potential,
            gamma,
            d,
            trajectory: TrajectoryConfig::default(),
            dataset: DatasetConfig::default(),
            training: TrainConfig::default(),
            simulation: IntegratorConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        DecoherenceSpec::new(self.gamma)?;
        if self.d < 1 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.trajectory.n_points < 2 || !(self.trajectory.dt > 0.0) {
            return Err(Error::Config("trajectory needs n_points >= 2 and dt > 0".into()));
        }
        if self.dataset.train_count == 0 || self.dataset.val_count == 0 {
            return Err(Error::Config("dataset counts must be positive".into()));
        }
        if let Some(r) = self.dataset.rank {
            if r == 0 || r > self.d {
                return Err(Error::Config(format!("rank {r} must be in 1..={}", self.d)));
            }
        }
        self.training.validate()?;
        self.simulation.validate()?;
        Ok(())
    }

    pub fn decoherence(&self) -> DecoherenceSpec {
        DecoherenceSpec { gamma: self.gamma }
    }

    pub fn rank(&self) -> usize {
        self.dataset.rank.unwrap_or(self.d)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// SHA-256 of the compact JSON form of the resolved config.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        container::sha256_hex(text.as_bytes())
    }
}
