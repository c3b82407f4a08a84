//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxfuse_core::prior::{GateMode, InstanceAttention};
use voxfuse_core::tensor::nn::ParamStore;
use voxfuse_core::tensor::{LovaszClasses, Tape, Tensor};
use voxfuse_core::voxel::{GridSpec, GridVar};

/// Jaccard loss of a mispredicted set `m` for ground-truth set `gt`.
fn jaccard_loss(gt: &BTreeSet<usize>, m: &BTreeSet<usize>) -> f64 {
    let union: BTreeSet<usize> = gt.union(m).copied().collect();
    if union.is_empty() {
        0.0
    } else {
        m.len() as f64 / union.len() as f64
    }
}

/// Lovász extension of the Jaccard loss, per class, with the set function
/// evaluated explicitly on every prefix of the error ordering.
pub fn lovasz_oracle(probs: &[Vec<f64>], labels: &[usize], variant: LovaszClasses) -> f64 {
    let classes = probs[0].len();
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..classes {
        let gt: BTreeSet<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let predicted = probs.iter().any(|p| p[c] > 0.0);
        let include = match variant {
            LovaszClasses::Present => !gt.is_empty(),
            LovaszClasses::PresentOrPredicted => !gt.is_empty() || predicted,
            LovaszClasses::All => true,
        };
        if !include {
            continue;
        }
        let err: Vec<f64> = (0..labels.len()).map(|i| if labels[i] == c { 1.0 - probs[i][c] } else { probs[i][c] }).collect();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| err[b].total_cmp(&err[a]));
        let mut prefix = BTreeSet::new();
        let mut prev = 0.0;
        let mut value = 0.0;
        for &i in &order {
            prefix.insert(i);
            let cur = jaccard_loss(&gt, &prefix);
            value += err[i] * (cur - prev);
            prev = cur;
        }
        total += value;
        used += 1;
    }
    total / used as f64
}

/// Plain IoU per class from argmax predictions.
pub fn iou_from_counts(tp: u64, fp: u64, fn_: u64) -> Option<f64> {
    let d = tp + fp + fn_;
    (d > 0).then(|| tp as f64 / d as f64)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Depth-weighted alignment loss written out voxel by voxel for a
/// `[C×X×Y×Z]` pair with one slice per z layer.
pub fn daga_oracle(cam: &[f64], pts: &[f64], dims: [usize; 4], beta: f64, lambda_sharp: f64) -> f64 {
    let [c, nx, ny, nz] = dims;
    let at = |f: &[f64], ch: usize, x: usize, y: usize, z: usize| f[((ch * nx + x) * ny + y) * nz + z];
    let intensity = |f: &[f64], x: usize, y: usize, z: usize| {
        let sq: f64 = (0..c).map(|ch| at(f, ch, x, y, z).powi(2)).sum();
        sigmoid(sq.sqrt())
    };
    let mut align = 0.0;
    for z in 0..nz {
        let w = 1.0 / (1.0 + beta * z as f64 / nz as f64);
        let mut mse = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                mse += (intensity(cam, x, y, z) - intensity(pts, x, y, z)).powi(2);
            }
        }
        align += w * mse / (nx * ny) as f64;
    }
    align /= nz as f64;
    let mut sharp = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz - 1 {
                let gc = intensity(cam, x, y, z + 1) - intensity(cam, x, y, z);
                let gp = intensity(pts, x, y, z + 1) - intensity(pts, x, y, z);
                sharp += (gc - gp).abs();
            }
        }
    }
    sharp /= (nx * ny * (nz - 1)) as f64;
    align + lambda_sharp * sharp
}

pub struct AttentionParams {
    pub wq: Vec<Vec<f64>>,
    pub bq: Vec<f64>,
    pub wk: Vec<Vec<f64>>,
    pub bk: Vec<f64>,
    pub wv: Vec<Vec<f64>>,
    pub bv: Vec<f64>,
    /// One row per gate output: 1 for a voxel gate, C for a channel gate.
    pub wg: Vec<Vec<f64>>,
    pub bg: Vec<f64>,
}

fn affine(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    w.iter().zip(b).map(|(row, bi)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + bi).collect()
}

/// Step-by-step gated cross-attention: `voxels[n]` is the feature vector of
/// voxel `n`, `tokens[t]` a text embedding. Returns output vectors per voxel.
pub fn attention_oracle(voxels: &[Vec<f64>], tokens: &[Vec<f64>], p: &AttentionParams) -> Vec<Vec<f64>> {
    let dk = p.bq.len() as f64;
    let keys: Vec<Vec<f64>> = tokens.iter().map(|e| affine(&p.wk, &p.bk, e)).collect();
    let values: Vec<Vec<f64>> = tokens.iter().map(|e| affine(&p.wv, &p.bv, e)).collect();
    voxels
        .iter()
        .map(|x| {
            let q = affine(&p.wq, &p.bq, x);
            let scores: Vec<f64> = keys.iter().map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / dk.sqrt()).collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let mut attended = vec![0.0; x.len()];
            for (t, v) in values.iter().enumerate() {
                for (ch, val) in v.iter().enumerate() {
                    attended[ch] += e[t] / z * val;
                }
            }
            let g: Vec<f64> = affine(&p.wg, &p.bg, x).into_iter().map(sigmoid).collect();
            (0..x.len()).map(|ch| attended[ch] * if g.len() == 1 { g[0] } else { g[ch] } + x[ch]).collect()
        })
        .collect()
}

pub fn random_probs(n: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..c).map(|_| (rng.random::<f64>() * 4.0 - 2.0).exp()).collect();
            // exact zeros exercise the predicted-class rule
            if c > 1 && rng.random_bool(0.3) {
                row[rng.random_range(0..c)] = 0.0;
            }
            let s: f64 = row.iter().sum();
            row.iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn tape_lovasz(probs: &[Vec<f64>], labels: &[usize], variant: LovaszClasses) -> f64 {
    let c = probs[0].len();
    let flat: Vec<f64> = probs.iter().flatten().copied().collect();
    let mut tape = Tape::<f64>::new();
    let p = tape.constant(Tensor::from_f64(&[probs.len(), c], &flat).unwrap());
    let l = tape.lovasz_softmax(p, labels, None, variant).unwrap();
    tape.value(l).item()
}

pub fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    let cols = t.shape()[1];
    t.data().chunks(cols).map(|r| r.to_vec()).collect()
}

pub fn mat(rows: &[&[f64]]) -> Tensor<f64> {
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::new(&[rows.len(), rows[0].len()], flat).unwrap()
}

/// Tape output and oracle output for one attention instance, voxel-major.
pub fn attention_pair(store: &ParamStore<f64>, attn: &InstanceAttention, x: &Tensor<f64>, spec: GridSpec, tokens: &Tensor<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let g = GridVar { spec, var: tape.constant(x.clone()) };
    let t = tape.constant(tokens.clone());
    let out = attn.forward(&mut tape, &bound, g, t).unwrap();
    let n = spec.voxels();
    let c = spec.channels;
    let got_flat = tape.value(out.grid.var).data().to_vec();
    let got: Vec<Vec<f64>> = (0..n).map(|v| (0..c).map(|ch| got_flat[ch * n + v]).collect()).collect();
    let voxels: Vec<Vec<f64>> = (0..n).map(|v| (0..c).map(|ch| x.data()[ch * n + v]).collect()).collect();
    let vec = |id| store.get(id).data().to_vec();
    let p = AttentionParams {
        wq: rows(store.get(attn.query.weight)),
        bq: vec(attn.query.bias),
        wk: rows(store.get(attn.key.weight)),
        bk: vec(attn.key.bias),
        wv: rows(store.get(attn.value.weight)),
        bv: vec(attn.value.bias),
        wg: rows(store.get(attn.gate.weight)),
        bg: vec(attn.gate.bias),
    };
    (got, attention_oracle(&voxels, &rows(tokens), &p))
}

/// Tape and oracle outputs on a fixed 2-voxel, 2-token instance.
pub fn hand_attention(mode: GateMode) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let spec = GridSpec::new([[0.0, 1.0]; 3], [2, 1, 1], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let attn = InstanceAttention::new(&mut store, "a", 2, 3, 2, mode, &mut rng);
    *store.get_mut(attn.query.weight) = mat(&[&[1.0, -0.5], &[0.25, 2.0]]);
    *store.get_mut(attn.query.bias) = Tensor::from_f64(&[2], &[0.1, -0.2]).unwrap();
    *store.get_mut(attn.key.weight) = mat(&[&[0.5, 0.0, -1.0], &[1.5, 0.5, 0.0]]);
    *store.get_mut(attn.key.bias) = Tensor::from_f64(&[2], &[0.0, 0.3]).unwrap();
    *store.get_mut(attn.value.weight) = mat(&[&[1.0, 1.0, 0.0], &[0.0, -1.0, 2.0]]);
    *store.get_mut(attn.value.bias) = Tensor::from_f64(&[2], &[0.5, 0.0]).unwrap();
    match mode {
        GateMode::Voxel => {
            *store.get_mut(attn.gate.weight) = mat(&[&[0.7, -0.3]]);
            *store.get_mut(attn.gate.bias) = Tensor::from_f64(&[1], &[0.2]).unwrap();
        }
        GateMode::Channel => {
            *store.get_mut(attn.gate.weight) = mat(&[&[0.7, -0.3], &[-1.0, 0.4]]);
            *store.get_mut(attn.gate.bias) = Tensor::from_f64(&[2], &[0.2, -0.1]).unwrap();
        }
    }
    // voxel 0 = (1, 2), voxel 1 = (−1, 0.5)
    let x = Tensor::from_f64(&[2, 2, 1, 1], &[1.0, -1.0, 2.0, 0.5]).unwrap();
    let tokens = mat(&[&[1.0, 0.0, 0.5], &[-0.5, 1.0, 1.0]]);
    attention_pair(&store, &attn, &x, spec, &tokens)
}
