use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::fusion::{fuse_addition, fuse_concat, fuse_conv3d, fuse_weathfusion, FusionStrategy, GatingHead};
use crate::prior::{InstanceAttention, LoraAdapter};
use crate::scalar::Real;
use crate::scenes::{CAMERA_FEATURE_DIM, CLASS_NAMES, LIDAR_FEATURE_DIM};
use crate::tensor::nn::{Bound, Conv3d, Linear, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};
use crate::voxel::{GridVar, VoxelGrid};

use super::config::{ExperimentConfig, ModelConfig, Toggles};

/// Parameter handles of the dual-branch occupancy network.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Layers {
    /// Frozen per-channel input scales, fitted on the training set.
    pub cam_scale: ParamId,
    pub pts_scale: ParamId,
    pub cam_proj: Linear,
    pub pts_proj: Linear,
    /// Shared adapter on every text embedding, present with either prior.
    pub lora: Option<LoraAdapter>,
    pub attn_cam: Option<InstanceAttention>,
    pub attn_pts: Option<InstanceAttention>,
    pub gating: Option<GatingHead>,
    pub conv: Option<Conv3d>,
    pub head: Linear,
}

/// Parameters plus the architecture they were built for.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Model<T> {
    pub store: ParamStore<T>,
    pub layers: Layers,
    pub model: ModelConfig,
    pub toggles: Toggles,
    pub fusion: FusionStrategy,
}

/// Cached, parameter-free inputs of one scene.
#[derive(Debug, Clone)]
pub struct SceneInputs<T> {
    pub camera: VoxelGrid<T>,
    pub lidar: VoxelGrid<T>,
    /// `[T×E]` raw instance-prompt embeddings.
    pub tokens: Tensor<T>,
    /// `[1×E]` raw weather-prompt embedding.
    pub weather: Tensor<T>,
}

pub struct ForwardOutput {
    /// `[classes+1, X, Y, Z]`.
    pub logits: GridVar,
    /// Projected branch volumes before the text prior.
    pub v_cam: GridVar,
    pub v_pts: GridVar,
    /// `[1×2]` camera and LiDAR weights when the weather gate is active.
    pub weights: Option<Var>,
}

pub fn num_classes() -> usize {
    CLASS_NAMES.len()
}

impl<T: Real> Model<T> {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d6f_6465_6c00);
        let m = cfg.model;
        let c = m.channels;
        let fusion = cfg.effective_fusion();
        let mut store = ParamStore::new();
        let cam_scale = store.add("cam_scale", Tensor::full(&[CAMERA_FEATURE_DIM], T::one()), false);
        let pts_scale = store.add("pts_scale", Tensor::full(&[LIDAR_FEATURE_DIM], T::one()), false);
        let cam_proj = Linear::new(&mut store, "cam_proj", CAMERA_FEATURE_DIM, c, &mut rng);
        let pts_proj = Linear::new(&mut store, "pts_proj", LIDAR_FEATURE_DIM, c, &mut rng);
        let gated = fusion == FusionStrategy::Weathfusion;
        let lora = if cfg.toggles.instvlm || gated {
            Some(LoraAdapter::identity(&mut store, "lora", m.embed_dim, m.lora_rank, m.lora_alpha, &mut rng)?)
        } else {
            None
        };
        let (attn_cam, attn_pts) = if cfg.toggles.instvlm {
            let mut mk = |name: &str| InstanceAttention::new(&mut store, name, c, m.embed_dim, m.key_dim, m.gate_mode, &mut rng);
            (Some(mk("attn_cam")), Some(mk("attn_pts")))
        } else {
            (None, None)
        };
        let gating = gated.then(|| GatingHead::new(&mut store, "gating", m.embed_dim, &mut rng));
        let conv = (fusion == FusionStrategy::Conv3d).then(|| Conv3d::new(&mut store, "fuse_conv", 2 * c, c, &mut rng));
        let fused = match fusion {
            FusionStrategy::Addition | FusionStrategy::Conv3d => c,
            FusionStrategy::Concat | FusionStrategy::Weathfusion => 2 * c,
        };
        let head = Linear::new(&mut store, "head", fused, num_classes() + 1, &mut rng);
        Ok(Self {
            store,
            layers: Layers { cam_scale, pts_scale, cam_proj, pts_proj, lora, attn_cam, attn_pts, gating, conv, head },
            model: m,
            toggles: cfg.toggles,
            fusion,
        })
    }

    /// Sets each input channel's scale to the inverse of its RMS over all
    /// voxels of `scenes`, leaving empty voxels at zero.
    pub fn fit_input_scales<'a>(&mut self, scenes: impl IntoIterator<Item = &'a SceneInputs<T>>) -> Result<()>
    where
        T: 'a,
    {
        let mut cam = vec![0.0; CAMERA_FEATURE_DIM];
        let mut pts = vec![0.0; LIDAR_FEATURE_DIM];
        let mut count = 0usize;
        for s in scenes {
            accumulate(&s.camera, &mut cam)?;
            accumulate(&s.lidar, &mut pts)?;
            count += s.camera.spec.voxels();
        }
        if count == 0 {
            return Err(crate::error::Error::Config("no scenes to fit input scales on".into()));
        }
        for (id, sums) in [(self.layers.cam_scale, cam), (self.layers.pts_scale, pts)] {
            let scale: Vec<T> = sums.iter().map(|&s| {
                let rms = (s / count as f64).sqrt();
                T::lit(if rms > 1e-12 { 1.0 / rms } else { 1.0 })
            }).collect();
            *self.store.get_mut(id) = Tensor::new(&[scale.len()], scale)?;
        }
        Ok(())
    }

    /// Pins both relevance gates to `sigmoid(bias)`.
    pub fn force_prior_gates(&mut self, bias: f64) {
        for a in [self.layers.attn_cam, self.layers.attn_pts].into_iter().flatten() {
            a.force_gate(&mut self.store, bias);
        }
    }

    fn project(&self, tape: &mut Tape<T>, bound: &Bound, scale: ParamId, lin: &Linear, grid: &VoxelGrid<T>) -> Result<GridVar> {
        let g = grid.record(tape);
        let x = g.channels_by_voxels(tape)?;
        let x = tape.mul_col(x, bound.var(scale))?;
        let y = lin.forward_channels(tape, bound, x)?;
        GridVar::from_channels(tape, g.spec, y)
    }

    fn embed(&self, tape: &mut Tape<T>, bound: &Bound, raw: &Tensor<T>) -> Result<Var> {
        let x = tape.constant(raw.clone());
        match &self.layers.lora {
            Some(l) => l.forward(tape, bound, x),
            None => Ok(x),
        }
    }

    /// Branch projection, per-branch text prior, fusion and the occupancy
    /// head. Disabled modules are bypassed.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, inputs: &SceneInputs<T>) -> Result<ForwardOutput> {
        if !inputs.camera.spec.same_extent(&inputs.lidar.spec) {
            return Err(shape_err("camera and LiDAR grids cover different voxels"));
        }
        let l = &self.layers;
        let v_cam = self.project(tape, bound, l.cam_scale, &l.cam_proj, &inputs.camera)?;
        let v_pts = self.project(tape, bound, l.pts_scale, &l.pts_proj, &inputs.lidar)?;
        let (mut f_cam, mut f_pts) = (v_cam, v_pts);
        if let (Some(ac), Some(ap)) = (&l.attn_cam, &l.attn_pts) {
            let tokens = self.embed(tape, bound, &inputs.tokens)?;
            f_cam = ac.forward(tape, bound, v_cam, tokens)?.grid;
            f_pts = ap.forward(tape, bound, v_pts, tokens)?.grid;
        }
        let mut weights = None;
        let fused = match self.fusion {
            FusionStrategy::Addition => fuse_addition(tape, f_cam, f_pts)?,
            FusionStrategy::Concat => fuse_concat(tape, f_cam, f_pts)?,
            FusionStrategy::Conv3d => fuse_conv3d(tape, bound, l.conv.as_ref().expect("conv fusion layer"), f_cam, f_pts)?,
            FusionStrategy::Weathfusion => {
                let p = self.embed(tape, bound, &inputs.weather)?;
                let gate = l.gating.as_ref().expect("gating head").forward(tape, bound, p)?;
                weights = Some(gate.weights);
                fuse_weathfusion(tape, f_cam, f_pts, gate.weights, None)?
            }
        };
        let x = fused.channels_by_voxels(tape)?;
        let y = l.head.forward_channels(tape, bound, x)?;
        let logits = GridVar::from_channels(tape, fused.spec, y)?;
        Ok(ForwardOutput { logits, v_cam, v_pts, weights })
    }

    /// Forward pass on a fresh tape, returning plain logits and weights.
    pub fn predict(&self, inputs: &SceneInputs<T>) -> Result<(Tensor<T>, Option<[f64; 2]>)> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, inputs)?;
        let w = out.weights.map(|w| {
            let d = tape.value(w).data();
            [d[0].as_f64(), d[1].as_f64()]
        });
        Ok((tape.value(out.logits.var).clone(), w))
    }

    /// Camera and LiDAR weights for a raw `[1×E]` weather embedding.
    pub fn fusion_weights(&self, weather: &Tensor<T>) -> Result<Option<[f64; 2]>> {
        let Some(g) = &self.layers.gating else { return Ok(None) };
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let p = self.embed(&mut tape, &bound, weather)?;
        let out = g.forward(&mut tape, &bound, p)?;
        let d = tape.value(out.weights).data();
        Ok(Some([d[0].as_f64(), d[1].as_f64()]))
    }
}

fn accumulate<T: Real>(grid: &VoxelGrid<T>, sums: &mut [f64]) -> Result<()> {
    if grid.spec.channels != sums.len() {
        return Err(shape_err(format!("expected {} input channels, got {}", sums.len(), grid.spec.channels)));
    }
    let n = grid.spec.voxels();
    for (c, chunk) in grid.features.data().chunks(n).enumerate() {
        sums[c] += chunk.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
    }
    Ok(())
}
