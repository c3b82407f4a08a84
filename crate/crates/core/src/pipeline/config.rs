use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionStrategy, WeatherCondition};
use crate::metrics::ObjectiveConfig;
use crate::prior::{GateMode, Region, DEFAULT_EMBED_DIM, DEFAULT_KEY_DIM};
use crate::scenes::CorruptionModel;
use crate::tensor::optim::AdamConfig;
use crate::voxel::GridSpec;

/// Which of the three mechanisms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub instvlm: bool,
    pub weathfusion: bool,
    pub daga: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self { instvlm: true, weathfusion: true, daga: true }
    }
}

impl Toggles {
    /// All eight combinations, all-off first.
    pub fn all_combinations() -> Vec<Toggles> {
        (0..8u8).map(|m| Toggles { instvlm: m & 4 != 0, weathfusion: m & 2 != 0, daga: m & 1 != 0 }).collect()
    }

    pub fn label(&self) -> String {
        let on = |b: bool| if b { "on" } else { "off" };
        format!("instvlm={} weathfusion={} daga={}", on(self.instvlm), on(self.weathfusion), on(self.daga))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Channels of each branch volume after its projection head.
    pub channels: usize,
    pub embed_dim: usize,
    pub key_dim: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub gate_mode: GateMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { channels: 8, embed_dim: DEFAULT_EMBED_DIM, key_dim: DEFAULT_KEY_DIM, lora_rank: 4, lora_alpha: 8.0, gate_mode: GateMode::Voxel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { adam: AdamConfig::default(), steps: 200, batch_size: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub toggles: Toggles,
    pub fusion: FusionStrategy,
    /// Conditions the training and evaluation scenes are drawn from.
    pub weather_mix: Vec<WeatherCondition>,
    pub train_scenes_per_condition: usize,
    pub eval_scenes_per_condition: usize,
    pub region: Region,
    pub train: TrainConfig,
    pub objective: ObjectiveConfig,
    pub corruption: CorruptionModel,
    pub model: ModelConfig,
    pub encoder_seed: u64,
    /// Precomputed prompt embeddings; the stub encoder is used when absent.
    pub embedding_table: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridSpec::desk(1),
            toggles: Toggles::default(),
            fusion: FusionStrategy::Weathfusion,
            weather_mix: vec![WeatherCondition::ClearDay, WeatherCondition::Rain, WeatherCondition::Night],
            train_scenes_per_condition: 2,
            eval_scenes_per_condition: 2,
            region: Region::Usa,
            train: TrainConfig::default(),
            objective: ObjectiveConfig::default(),
            corruption: CorruptionModel::default(),
            model: ModelConfig::default(),
            encoder_seed: 0,
            embedding_table: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.objective.daga.validate()?;
        self.corruption.validate()?;
        if self.weather_mix.is_empty() {
            return Err(Error::Config("weather mix is empty".into()));
        }
        if self.train_scenes_per_condition == 0 || self.eval_scenes_per_condition == 0 {
            return Err(Error::Config("scene counts must be >= 1".into()));
        }
        if self.train.batch_size != 1 {
            return Err(Error::Config(format!("only batch size 1 is supported, got {}", self.train.batch_size)));
        }
        if !(self.train.adam.lr > 0.0 && self.train.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.train.adam.lr)));
        }
        let m = self.model;
        if m.channels == 0 || m.embed_dim == 0 || m.key_dim == 0 {
            return Err(Error::Config("model dims must be positive".into()));
        }
        if !(self.objective.lambda_daga >= 0.0) {
            return Err(Error::Config("lambda_daga must be >= 0".into()));
        }
        Ok(())
    }

    /// Fusion actually built: with the weather toggle off, weighted fusion
    /// degrades to plain concatenation.
    pub fn effective_fusion(&self) -> FusionStrategy {
        match self.fusion {
            FusionStrategy::Weathfusion if !self.toggles.weathfusion => FusionStrategy::Concat,
            f => f,
        }
    }
}
