use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::daga::{daga_loss, DagaConfig};
use crate::error::{Error, Result};
use crate::fusion::{fuse_addition, fuse_concat, fuse_conv3d, fuse_weathfusion, GatingHead};
use crate::metrics::{total_loss, ObjectiveConfig, OccupancyLabels, VoxelLabel};
use crate::prior::{GateMode, InstanceAttention};
use crate::tensor::nn::{uniform, Bound, Conv3d, Linear, ParamStore};
use crate::tensor::{LovaszClasses, Tape, Tensor, Var};
use crate::voxel::{vertical_gradient, CameraModel, GridSpec, GridVar, SplatPlan};

use super::{check, GradCheck};

/// Random instances per op.
pub const SUITE_SEEDS: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub seeds: u64,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
    pub elapsed_s: f64,
}

impl SuiteReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }
}

const NAMES: [&str; 16] = [
    "softmax",
    "sigmoid",
    "matmul",
    "cross_entropy",
    "lovasz_softmax",
    "lss_splat",
    "vertical_gradient",
    "gated_cross_attention",
    "gate_weights",
    "fuse_addition",
    "fuse_concat",
    "fuse_conv3d",
    "fuse_weathfusion",
    "daga_loss",
    "total_loss",
    "lora_project",
];

pub fn suite_names() -> Vec<&'static str> {
    NAMES.to_vec()
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    uniform(shape, 1.0, rng)
}

/// `Σ w ⊙ y` with a fixed random `w`, so every output entry matters.
fn project(tape: &mut Tape<f64>, y: Var, rng_seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x77);
    let w = tape.constant(rand_t(tape.shape(y), &mut rng));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn params(store: &ParamStore<f64>) -> Vec<Tensor<f64>> {
    store.iter().map(|(_, p)| p.value.clone()).collect()
}

fn tiny_grid(dims: [usize; 3], channels: usize) -> GridSpec {
    GridSpec::new([[0.0, 1.0]; 3], dims, channels).expect("valid grid")
}

fn labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..classes)).collect()
}

/// One named check on the instance drawn from `seed`.
pub fn run_case(name: &str, seed: u64, h: f64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match name {
        "softmax" => check(&[rand_t(&[3, 4], &mut rng)], h, |t, v| {
            let y = t.softmax(v[0], 1)?;
            project(t, y, seed)
        }),
        "sigmoid" => check(&[rand_t(&[3, 4], &mut rng)], h, |t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y, seed)
        }),
        "matmul" => check(&[rand_t(&[3, 4], &mut rng), rand_t(&[4, 2], &mut rng)], h, |t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y, seed)
        }),
        "cross_entropy" => {
            let mut y = labels(6, 3, &mut rng);
            y[5] = 3;
            check(&[rand_t(&[6, 3], &mut rng).scale(2.0)], h, move |t, v| t.cross_entropy(v[0], &y, Some(3)))
        }
        "lovasz_softmax" => {
            let y = labels(6, 3, &mut rng);
            check(&[rand_t(&[6, 3], &mut rng).scale(2.0)], h, move |t, v| {
                let p = t.softmax(v[0], 1)?;
                t.lovasz_softmax(p, &y, None, LovaszClasses::PresentOrPredicted)
            })
        }
        "lss_splat" => {
            let cam = CameraModel {
                fx: 1.0,
                fy: 1.0,
                cx: 1.5,
                cy: 1.0,
                width: 3,
                height: 2,
                rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                translation: [0.0; 3],
                depth_bins: vec![1.5, 2.5, 3.5],
            };
            let grid = GridSpec::new([[-2.0, 2.0], [-2.0, 2.0], [0.0, 4.0]], [2, 2, 4], 1)?;
            let plan = SplatPlan::new(&cam, &grid)?;
            check(&[rand_t(&[2, 2, 3], &mut rng), rand_t(&[3, 2, 3], &mut rng)], h, move |t, v| {
                let probs = t.softmax(v[1], 0)?;
                let g = plan.splat(t, v[0], probs)?;
                project(t, g.var, seed)
            })
        }
        "vertical_gradient" => {
            let spec = tiny_grid([2, 2, 3], 2);
            check(&[rand_t(&spec.feature_shape(), &mut rng)], h, move |t, v| {
                let d = vertical_gradient(t, GridVar { spec, var: v[0] })?;
                project(t, d, seed)
            })
        }
        "gated_cross_attention" => {
            let mode = if seed.is_multiple_of(2) { GateMode::Voxel } else { GateMode::Channel };
            let mut store = ParamStore::new();
            let attn = InstanceAttention::new(&mut store, "a", 3, 4, 2, mode, &mut rng);
            let spec = tiny_grid([2, 1, 2], 3);
            let mut inputs = vec![rand_t(&spec.feature_shape(), &mut rng), rand_t(&[2, 4], &mut rng)];
            inputs.extend(params(&store));
            check(&inputs, h, move |t, v| {
                let bound = Bound::from_vars(v[2..].to_vec());
                let out = attn.forward(t, &bound, GridVar { spec, var: v[0] }, v[1])?;
                project(t, out.grid.var, seed)
            })
        }
        "gate_weights" => {
            let mut store = ParamStore::new();
            let head = GatingHead::new(&mut store, "g", 5, &mut rng);
            let mut inputs = vec![rand_t(&[1, 5], &mut rng)];
            inputs.extend(params(&store));
            check(&inputs, h, move |t, v| {
                let bound = Bound::from_vars(v[1..].to_vec());
                let out = head.forward(t, &bound, v[0])?;
                project(t, out.weights, seed)
            })
        }
        "fuse_addition" | "fuse_concat" => {
            let spec = tiny_grid([2, 2, 2], 2);
            let concat = name == "fuse_concat";
            check(&[rand_t(&spec.feature_shape(), &mut rng), rand_t(&spec.feature_shape(), &mut rng)], h, move |t, v| {
                let (a, b) = (GridVar { spec, var: v[0] }, GridVar { spec, var: v[1] });
                let g = if concat { fuse_concat(t, a, b)? } else { fuse_addition(t, a, b)? };
                project(t, g.var, seed)
            })
        }
        "fuse_conv3d" => {
            let spec = tiny_grid([2, 3, 2], 2);
            let mut store = ParamStore::new();
            let conv = Conv3d::new(&mut store, "c", 4, 2, &mut rng);
            let mut inputs = vec![rand_t(&spec.feature_shape(), &mut rng), rand_t(&spec.feature_shape(), &mut rng)];
            inputs.extend(params(&store));
            check(&inputs, h, move |t, v| {
                let bound = Bound::from_vars(v[2..].to_vec());
                let g = fuse_conv3d(t, &bound, &conv, GridVar { spec, var: v[0] }, GridVar { spec, var: v[1] })?;
                project(t, g.var, seed)
            })
        }
        "fuse_weathfusion" => {
            let spec = tiny_grid([2, 2, 2], 2);
            let mut store = ParamStore::new();
            let proj = Linear::new(&mut store, "p", 4, 2, &mut rng);
            let mut inputs =
                vec![rand_t(&spec.feature_shape(), &mut rng), rand_t(&spec.feature_shape(), &mut rng), rand_t(&[1, 2], &mut rng)];
            inputs.extend(params(&store));
            let with_proj = seed.is_multiple_of(2);
            check(&inputs, h, move |t, v| {
                let bound = Bound::from_vars(v[3..].to_vec());
                let w = t.softmax(v[2], 1)?;
                let p = with_proj.then_some((&proj, &bound));
                let g = fuse_weathfusion(t, GridVar { spec, var: v[0] }, GridVar { spec, var: v[1] }, w, p)?;
                project(t, g.var, seed)
            })
        }
        "daga_loss" => {
            let spec = tiny_grid([2, 2, 4], 3);
            let cfg = DagaConfig { beta: 0.5 + rng.random::<f64>(), ..DagaConfig::default() };
            check(&[rand_t(&spec.feature_shape(), &mut rng), rand_t(&spec.feature_shape(), &mut rng)], h, move |t, v| {
                Ok(daga_loss(t, GridVar { spec, var: v[0] }, GridVar { spec, var: v[1] }, &cfg)?.total)
            })
        }
        "total_loss" => {
            let classes = 3;
            let spec = tiny_grid([2, 2, 2], 2);
            let raw: Vec<VoxelLabel> = (0..spec.voxels())
                .map(|_| match rng.random_range(0..=classes) {
                    c if c == classes => VoxelLabel::Empty,
                    c => VoxelLabel::Class(c as u16),
                })
                .collect();
            let gt = OccupancyLabels::new(spec.dims(), classes, raw)?;
            let cfg = ObjectiveConfig::default();
            let logit_shape = spec.with_channels(classes + 1).feature_shape();
            check(
                &[rand_t(&logit_shape, &mut rng).scale(2.0), rand_t(&spec.feature_shape(), &mut rng), rand_t(&spec.feature_shape(), &mut rng)],
                h,
                move |t, v| {
                    let branches = Some((GridVar { spec, var: v[1] }, GridVar { spec, var: v[2] }));
                    Ok(total_loss(t, v[0], &gt, branches, &cfg)?.total)
                },
            )
        }
        "lora_project" => {
            let mut store = ParamStore::new();
            let base = rand_t(&[3, 4], &mut rng);
            let lora = crate::prior::LoraAdapter::new(&mut store, "l", base, 2, 4.0, &mut rng)?;
            *store.get_mut(lora.b) = rand_t(&[3, 2], &mut rng);
            let mut inputs = vec![rand_t(&[2, 4], &mut rng)];
            inputs.extend(params(&store));
            check(&inputs, h, move |t, v| {
                let bound = Bound::from_vars(v[1..].to_vec());
                let y = lora.forward(t, &bound, v[0])?;
                project(t, y, seed)
            })
        }
        other => Err(Error::Lookup(format!("no gradient check named {other:?}"))),
    }
}

/// Every named check over [`SUITE_SEEDS`] seeds, keeping the worst error.
pub fn run_suite(h: f64) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut entries = Vec::new();
    for name in NAMES {
        let mut e = SuiteEntry { name: name.into(), seeds: SUITE_SEEDS, max_rel_err: 0.0, max_abs_err: 0.0, entries: 0 };
        for seed in 0..SUITE_SEEDS {
            let r = run_case(name, seed, h)?;
            e.max_rel_err = e.max_rel_err.max(r.max_rel_err);
            e.max_abs_err = e.max_abs_err.max(r.max_abs_err);
            e.entries += r.entries;
        }
        entries.push(e);
    }
    Ok(SuiteReport { entries, elapsed_s: started.elapsed().as_secs_f64() })
}
