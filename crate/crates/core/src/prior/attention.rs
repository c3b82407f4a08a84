use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::scalar::Real;
use crate::tensor::nn::{Bound, Linear, ParamStore};
use crate::tensor::{Tape, Tensor, Var};
use crate::voxel::GridVar;

pub const DEFAULT_KEY_DIM: usize = 16;

/// Granularity of the relevance gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// One scalar per voxel, broadcast over channels.
    #[default]
    Voxel,
    /// One scalar per voxel and channel.
    Channel,
}

/// Gated cross-attention from voxel queries to text tokens:
/// `F = softmax(Q·Kᵀ/√d_k)·V_text ⊙ gate(V) + V`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InstanceAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub gate: Linear,
    pub channels: usize,
    pub embed_dim: usize,
    pub key_dim: usize,
    pub gate_mode: GateMode,
}

pub struct AttentionOutput {
    pub grid: GridVar,
    /// `[N×T]` attention weights, one row per voxel.
    pub attention: Var,
    /// `[1×N]` or `[C×N]` gate values.
    pub gate: Var,
}

impl InstanceAttention {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        embed_dim: usize,
        key_dim: usize,
        gate_mode: GateMode,
        rng: &mut impl Rng,
    ) -> Self {
        let gate_out = match gate_mode {
            GateMode::Voxel => 1,
            GateMode::Channel => channels,
        };
        Self {
            query: Linear::new(store, &format!("{name}.query"), channels, key_dim, rng),
            key: Linear::new(store, &format!("{name}.key"), embed_dim, key_dim, rng),
            value: Linear::new(store, &format!("{name}.value"), embed_dim, channels, rng),
            gate: Linear::new(store, &format!("{name}.gate"), channels, gate_out, rng),
            channels,
            embed_dim,
            key_dim,
            gate_mode,
        }
    }

    /// Pins the gate to `sigmoid(bias)` regardless of the input.
    pub fn force_gate<T: Real>(&self, store: &mut ParamStore<T>, bias: f64) {
        let w = store.get(self.gate.weight).shape().to_vec();
        *store.get_mut(self.gate.weight) = Tensor::zeros(&w);
        let b = store.get(self.gate.bias).shape().to_vec();
        *store.get_mut(self.gate.bias) = Tensor::full(&b, T::lit(bias));
    }

    /// `tokens` is a `[T×E]` matrix of text embeddings.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, grid: GridVar, tokens: Var) -> Result<AttentionOutput> {
        if grid.spec.channels != self.channels {
            return Err(shape_err(format!("attention built for {} channels, grid has {}", self.channels, grid.spec.channels)));
        }
        match *tape.shape(tokens) {
            [t, e] if t >= 1 && e == self.embed_dim => {}
            ref s => return Err(shape_err(format!("text tokens must be [T×{}] with T >= 1, got {s:?}", self.embed_dim))),
        }
        let x = grid.channels_by_voxels(tape)?;
        let q = self.query.forward_channels(tape, bound, x)?;
        let q = tape.transpose(q)?;
        let k = self.key.forward(tape, bound, tokens)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, T::lit(1.0 / (self.key_dim as f64).sqrt()));
        let attention = tape.softmax(scores, 1)?;
        let v_text = self.value.forward(tape, bound, tokens)?;
        let attended = tape.matmul(attention, v_text)?;
        let attended = tape.transpose(attended)?;

        let gate_logits = self.gate.forward_channels(tape, bound, x)?;
        let gate = tape.sigmoid(gate_logits);
        let gate_full = match self.gate_mode {
            GateMode::Channel => gate,
            GateMode::Voxel => {
                let ones = tape.constant(Tensor::full(&[self.channels, 1], T::one()));
                tape.matmul(ones, gate)?
            }
        };
        let injected = tape.mul(attended, gate_full)?;
        let out = tape.add(injected, x)?;
        let grid = GridVar::from_channels(tape, grid.spec, out)?;
        Ok(AttentionOutput { grid, attention, gate })
    }
}
