use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::nn::{uniform, Bound, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Frozen projection `W` plus a trainable rank-`r` correction:
/// `y = W·x + (alpha/r)·B·(A·x)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub base: ParamId,
    pub a: ParamId,
    pub b: ParamId,
    pub rank: usize,
    pub alpha: f64,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl LoraAdapter {
    /// `A ~ U(±1/√in)`, `B = 0`, so the adapter starts as the base map.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        base: Tensor<T>,
        rank: usize,
        alpha: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (out_dim, in_dim) = match *base.shape() {
            [o, i] => (o, i),
            ref s => return Err(shape_err(format!("LoRA base must be a matrix, got {s:?}"))),
        };
        if rank == 0 || rank > in_dim.min(out_dim) {
            return Err(Error::Config(format!("LoRA rank {rank} outside 1..={}", in_dim.min(out_dim))));
        }
        let base = store.add(format!("{name}.base"), base, false);
        let a = store.add(format!("{name}.a"), uniform(&[rank, in_dim], 1.0 / (in_dim as f64).sqrt(), rng), true);
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[out_dim, rank]), true);
        Ok(Self { base, a, b, rank, alpha, in_dim, out_dim })
    }

    /// Square adapter over a frozen identity.
    pub fn identity<T: Real>(store: &mut ParamStore<T>, name: &str, dim: usize, rank: usize, alpha: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::new(store, name, Tensor::eye(dim), rank, alpha, rng)
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// Row batch `x[T×in] → [T×out]`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        match *tape.shape(x) {
            [_, i] if i == self.in_dim => {}
            ref s => return Err(shape_err(format!("LoRA expects [T×{}], got {s:?}", self.in_dim))),
        }
        let wt = tape.transpose(bound.var(self.base))?;
        let frozen = tape.matmul(x, wt)?;
        let at = tape.transpose(bound.var(self.a))?;
        let low = tape.matmul(x, at)?;
        let bt = tape.transpose(bound.var(self.b))?;
        let delta = tape.matmul(low, bt)?;
        let delta = tape.scale(delta, T::lit(self.scale()));
        tape.add(frozen, delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_hand_instance() {
        // W = I, A = [1 2], B = [1; -1], alpha = 2, r = 1, x = [1 1]
        // Ax = 3, y = x + 2·[3, −3] = [7, −5]
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let lora = LoraAdapter::identity(&mut store, "l", 2, 1, 2.0, &mut rng).unwrap();
        *store.get_mut(lora.a) = Tensor::from_f64(&[1, 2], &[1.0, 2.0]).unwrap();
        *store.get_mut(lora.b) = Tensor::from_f64(&[2, 1], &[1.0, -1.0]).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.constant(Tensor::from_f64(&[1, 2], &[1.0, 1.0]).unwrap());
        let y = lora.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0, -5.0]);
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert!(tape.grad(bound.var(lora.base)).is_none());
        assert!(tape.grad(bound.var(lora.a)).is_some());
    }

    #[test]
    fn invalid_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        assert!(LoraAdapter::identity(&mut store, "l", 2, 3, 1.0, &mut rng).is_err());
        assert!(LoraAdapter::identity(&mut store, "l", 2, 0, 1.0, &mut rng).is_err());
    }
}
