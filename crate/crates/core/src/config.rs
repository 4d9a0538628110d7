//! Run configuration: one TOML file drives every pipeline stage. Each
//! command writes the fully resolved config next to its outputs so a run
//! can be reproduced from the sidecar alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conflict::ScanParams;
use crate::data::synthetic::IntersectionSpec;
use crate::data::ColumnMapping;
use crate::error::{Error, Result};
use crate::predict::lstm::train::TrainConfig;
use crate::{IN_STEPS, OUT_STEPS, STRIDE_FRAMES};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Csv {
        path: PathBuf,
        mapping: ColumnMapping,
    },
    Synthetic {
        n_vehicles: usize,
        noise_std_ft: f64,
        seed: u64,
        #[serde(default)]
        spec: IntersectionSpec,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Waypoints at or below this speed count as stationary.
    pub speed_eps_mph: f64,
    /// Minimum length of a moving run to keep, in frames.
    pub min_run_frames: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { speed_eps_mph: 0.5, min_run_frames: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowConfig {
    pub in_steps: usize,
    pub out_steps: usize,
    pub stride_frames: i64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { in_steps: IN_STEPS, out_steps: OUT_STEPS, stride_frames: STRIDE_FRAMES }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.3, seed: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    ConstantVelocity,
    Probabilistic,
    LstmSeq2seq,
}

impl std::fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PredictorKind::ConstantVelocity => "constant_velocity",
            PredictorKind::Probabilistic => "probabilistic",
            PredictorKind::LstmSeq2seq => "lstm_seq2seq",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictConfig {
    /// Predictor used during the conflict scan.
    pub predictor: PredictorKind,
    #[serde(flatten)]
    pub scan: ScanParams,
    /// Heatmap cell size, feet.
    pub heatmap_cell_ft: f64,
}

impl Default for ConflictConfig {
    fn default() -> Self {
        ConflictConfig {
            predictor: PredictorKind::ConstantVelocity,
            scan: ScanParams::default(),
            heatmap_cell_ft: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub filter: FilterConfig,
    pub window: WindowConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    /// Predictors evaluated by the comparison report, in table order.
    pub predictors: Vec<PredictorKind>,
    pub conflict: ConflictConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::Synthetic {
                n_vehicles: 60,
                noise_std_ft: 0.2,
                seed: 11,
                spec: IntersectionSpec::default(),
            },
            filter: FilterConfig::default(),
            window: WindowConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            predictors: vec![
                PredictorKind::ConstantVelocity,
                PredictorKind::Probabilistic,
                PredictorKind::LstmSeq2seq,
            ],
            conflict: ConflictConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.test_fraction must be in (0,1), got {}",
                self.split.test_fraction
            )));
        }
        if self.window.in_steps == 0 || self.window.out_steps == 0 {
            return Err(Error::Config("window steps must be positive".into()));
        }
        if self.window.stride_frames < 1 {
            return Err(Error::Config("window.stride_frames must be >= 1".into()));
        }
        if self.filter.min_run_frames == 0 {
            return Err(Error::Config("filter.min_run_frames must be >= 1".into()));
        }
        if self.conflict.heatmap_cell_ft <= 0.0 {
            return Err(Error::Config("conflict.heatmap_cell_ft must be positive".into()));
        }
        if self.predictors.is_empty() {
            return Err(Error::Config("predictors list is empty".into()));
        }
        if let DataConfig::Synthetic { n_vehicles, noise_std_ft, .. } = &self.data {
            if *n_vehicles == 0 {
                return Err(Error::Config("data.n_vehicles must be positive".into()));
            }
            if !noise_std_ft.is_finite() || *noise_std_ft < 0.0 {
                return Err(Error::Config("data.noise_std_ft must be non-negative".into()));
            }
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Short content hash of the resolved config, used to stamp reports.
    pub fn fingerprint(&self) -> Result<String> {
        let text = self.to_toml()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
    }

    /// Writes the fully resolved config into the output directory.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join("resolved_config.toml");
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }
}
