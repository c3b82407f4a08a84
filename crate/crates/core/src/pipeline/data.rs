use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::fusion::{weather_prompt, WeatherCondition, WeatherContext};
use crate::prior::{build_instance_prompt, stack_rows, PromptSpec, StubEncoder, TableEncoder, TextEncoder};
use crate::scalar::Real;
use crate::scenes::{apply_corruption, class_names, generate_scene, Observation, SceneSpec, LIDAR_FEATURE_DIM};
use crate::tensor::Tensor;
use crate::voxel::{lss_splat, voxelize};

use super::config::ExperimentConfig;
use super::model::SceneInputs;

/// A generated (and possibly corrupted) scene with its layout.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub obs: Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
}

/// Seed of the `index`-th scene of a condition and split.
pub fn scene_seed(base: u64, condition: WeatherCondition, index: usize, split: Split) -> u64 {
    let cond = WeatherCondition::ALL.iter().position(|&c| c == condition).unwrap_or(0) as u64;
    let split = match split {
        Split::Train => 0u64,
        Split::Eval => 1,
    };
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (split << 56) ^ (cond << 40) ^ index as u64
}

pub fn make_scene(cfg: &ExperimentConfig, condition: WeatherCondition, seed: u64) -> Result<Scene> {
    let ctx = WeatherContext::new(condition, cfg.region);
    let spec = SceneSpec::random(seed, ctx, cfg.grid);
    let clean = generate_scene(&spec)?;
    let obs = apply_corruption(&clean, &cfg.corruption, &ctx, spec.lidar.origin, seed)?;
    Ok(Scene { spec, obs })
}

/// Scenes of one split, grouped condition by condition in mix order.
pub fn make_split(cfg: &ExperimentConfig, split: Split) -> Result<Vec<Scene>> {
    let per = match split {
        Split::Train => cfg.train_scenes_per_condition,
        Split::Eval => cfg.eval_scenes_per_condition,
    };
    let mut out = Vec::new();
    for &c in &cfg.weather_mix {
        for i in 0..per {
            out.push(make_scene(cfg, c, scene_seed(cfg.seed, c, i, split))?);
        }
    }
    Ok(out)
}

pub fn make_encoder(cfg: &ExperimentConfig) -> Result<Box<dyn TextEncoder>> {
    let enc: Box<dyn TextEncoder> = match &cfg.embedding_table {
        Some(path) => Box::new(TableEncoder::from_json_file(path)?),
        None => Box::new(StubEncoder { dim: cfg.model.embed_dim, seed: cfg.encoder_seed }),
    };
    if enc.dim() != cfg.model.embed_dim {
        return Err(Error::Config(format!("encoder dim {} differs from model embed dim {}", enc.dim(), cfg.model.embed_dim)));
    }
    Ok(enc)
}

/// Instance prompt of frame `t` given the classes predicted at `t − 1`.
pub fn instance_prompt(cfg: &ExperimentConfig, predicted: &BTreeSet<usize>, t: usize) -> Result<PromptSpec> {
    build_instance_prompt(&class_names(), predicted, cfg.region, t)
}

pub fn encode_tokens<T: Real>(encoder: &dyn TextEncoder, prompt: &PromptSpec) -> Result<Tensor<T>> {
    stack_rows(&encoder.encode_all(&prompt.token_texts())?)
}

/// Splat, voxelize and encode one scene under a given instance prompt.
pub fn prepare<T: Real>(scene: &Scene, encoder: &dyn TextEncoder, prompt: &PromptSpec) -> Result<SceneInputs<T>> {
    let grid = scene.spec.grid;
    let camera = lss_splat(&scene.obs.image_features.cast(), &scene.obs.depth_probs.cast(), &scene.spec.camera, &grid)?;
    let lidar = voxelize(&scene.obs.points, &grid.with_channels(LIDAR_FEATURE_DIM))?;
    let tokens = encode_tokens(encoder, prompt)?;
    let weather = encoder.encode(&weather_prompt(&scene.obs.weather).text())?.to_row();
    Ok(SceneInputs { camera, lidar, tokens, weather })
}

/// Raw `[1×E]` embedding of a condition's weather prompt.
pub fn weather_embedding<T: Real>(cfg: &ExperimentConfig, encoder: &dyn TextEncoder, condition: WeatherCondition) -> Result<Tensor<T>> {
    let ctx = WeatherContext::new(condition, cfg.region);
    Ok(encoder.encode(&weather_prompt(&ctx).text())?.to_row())
}
