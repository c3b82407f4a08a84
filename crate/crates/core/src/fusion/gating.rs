use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::scalar::Real;
use crate::tensor::nn::{Bound, Linear, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Hidden width of the gating MLP.
pub const GATE_HIDDEN: usize = 32;

/// Camera and LiDAR weights; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_cam: f64,
    pub w_pts: f64,
}

impl FusionWeights {
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        match t.data() {
            [c, p] => Ok(Self { w_cam: c.as_f64(), w_pts: p.as_f64() }),
            _ => Err(shape_err(format!("fusion weights need two entries, got {:?}", t.shape()))),
        }
    }
}

/// `softmax(logits · alpha)` evaluated directly.
pub fn fusion_weights(logits: [f64; 2], alpha: f64) -> FusionWeights {
    let (a, b) = (logits[0] * alpha, logits[1] * alpha);
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    FusionWeights { w_cam: ea / (ea + eb), w_pts: eb / (ea + eb) }
}

/// Two-layer MLP from a weather embedding to modality logits, with a
/// learnable inverse temperature `alpha = softplus(alpha_raw)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GatingHead {
    pub hidden: Linear,
    pub out: Linear,
    pub alpha_raw: ParamId,
    pub embed_dim: usize,
}

pub struct GateOutput {
    /// `[1×2]` raw logits.
    pub logits: Var,
    /// `[1]` inverse temperature.
    pub alpha: Var,
    /// `[1×2]` camera and LiDAR weights.
    pub weights: Var,
}

impl GatingHead {
    /// `alpha_raw` starts at `ln(e − 1)` so that `alpha = 1`.
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, embed_dim: usize, rng: &mut impl Rng) -> Self {
        let hidden = Linear::new(store, &format!("{name}.hidden"), embed_dim, GATE_HIDDEN, rng);
        let out = Linear::new(store, &format!("{name}.out"), GATE_HIDDEN, 2, rng);
        let raw = (std::f64::consts::E - 1.0).ln();
        let alpha_raw = store.add(format!("{name}.alpha_raw"), Tensor::scalar(T::lit(raw)), true);
        Self { hidden, out, alpha_raw, embed_dim }
    }

    /// `p_weath` is a `[1×E]` row.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, p_weath: Var) -> Result<GateOutput> {
        if tape.shape(p_weath) != [1, self.embed_dim] {
            return Err(shape_err(format!("gating head expects [1×{}], got {:?}", self.embed_dim, tape.shape(p_weath))));
        }
        let h = self.hidden.forward(tape, bound, p_weath)?;
        let h = tape.relu(h);
        let logits = self.out.forward(tape, bound, h)?;
        let alpha = tape.softplus(bound.var(self.alpha_raw));
        let scaled = tape.mul_scalar(logits, alpha)?;
        let weights = tape.softmax(scaled, 1)?;
        Ok(GateOutput { logits, alpha, weights })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_weights() {
        assert_eq!(fusion_weights([0.0, 0.0], 7.0), FusionWeights { w_cam: 0.5, w_pts: 0.5 });
        let w = fusion_weights([2f64.ln(), 0.0], 1.0);
        assert!((w.w_cam - 2.0 / 3.0).abs() < 1e-15 && (w.w_pts - 1.0 / 3.0).abs() < 1e-15);
        assert!(fusion_weights([1.0, 0.0], 20.0).w_cam > 0.99);
    }

    #[test]
    fn head_dims_and_initial_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let head = GatingHead::new(&mut store, "g", 12, &mut rng);
        assert_eq!(store.get(head.hidden.weight).shape(), &[32, 12]);
        assert_eq!(store.get(head.out.weight).shape(), &[2, 32]);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let p = tape.constant(crate::tensor::nn::uniform(&[1, 12], 1.0, &mut rng));
        let out = head.forward(&mut tape, &b, p).unwrap();
        assert!((tape.value(out.alpha).item() - 1.0).abs() < 1e-15);
        let w = FusionWeights::from_tensor(tape.value(out.weights)).unwrap();
        assert!((w.w_cam + w.w_pts - 1.0).abs() < 1e-12);
        let bad = tape.constant(Tensor::zeros(&[1, 5]));
        assert!(head.forward(&mut tape, &b, bad).is_err());
    }
}
