//! Parameter storage and the layers built from it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::scalar::Real;

use super::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Frozen parameters are bound as constants and never updated.
    pub trainable: bool,
}

/// Owns every parameter of a model. Layers hold [`ParamId`]s into it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

/// Tape handles for every parameter of a store, valid for one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Handles in store order, for callers that record parameters themselves.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        self.params.push(Param { name: name.into(), value, trainable });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Records every parameter on `tape`: trainable ones as gradient leaves,
    /// frozen ones as constants.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| if p.trainable { tape.leaf(p.value.clone()) } else { tape.constant(p.value.clone()) })
            .collect();
        Bound { vars }
    }

    /// Gradients after `tape.backward`, one slot per parameter.
    pub fn grads(&self, tape: &Tape<T>, bound: &Bound) -> Vec<Option<Tensor<T>>> {
        bound.vars.iter().map(|&v| tape.grad(v).cloned()).collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.numel()).sum()
    }
}

/// Uniform `U(-bound, bound)` initialisation.
pub fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape, data).expect("shape/product")
}

/// Affine map `y = W·x + b` with `W: [out×in]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Default initialisation `U(±1/√in)` for weight and bias.
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(&[out_dim, in_dim], bound, rng), true);
        let bias = store.add(format!("{name}.bias"), uniform(&[out_dim], bound, rng), true);
        Self { weight, bias, in_dim, out_dim }
    }

    /// Explicit weight and bias, for hand-built instances.
    pub fn from_tensors<T: Real>(store: &mut ParamStore<T>, name: &str, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (out_dim, in_dim) = match *weight.shape() {
            [o, i] => (o, i),
            ref s => return Err(shape_err(format!("linear weight must be a matrix, got {s:?}"))),
        };
        if bias.shape() != [out_dim] {
            return Err(shape_err(format!("linear bias {:?} does not match {out_dim} outputs", bias.shape())));
        }
        let weight = store.add(format!("{name}.weight"), weight, true);
        let bias = store.add(format!("{name}.bias"), bias, true);
        Ok(Self { weight, bias, in_dim, out_dim })
    }

    /// Row-major batch: `x[M×in] → [M×out]`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let wt = tape.transpose(bound.var(self.weight))?;
        let y = tape.matmul(x, wt)?;
        tape.add_row(y, bound.var(self.bias))
    }

    /// Channel-major features: `x[in×N] → [out×N]`, a pointwise projection
    /// over every voxel.
    pub fn forward_channels<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(bound.var(self.weight), x)?;
        tape.add_col(y, bound.var(self.bias))
    }
}

/// `3×3×3` zero-padded convolution over `[C×X×Y×Z]` volumes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv3d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((in_channels * 27) as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(&[out_channels, in_channels, 3, 3, 3], bound, rng), true);
        let bias = store.add(format!("{name}.bias"), uniform(&[out_channels], bound, rng), true);
        Self { weight, bias, in_channels, out_channels }
    }

    /// Square layer whose kernel copies each input channel through its
    /// centre tap, with zero bias.
    pub fn identity<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        let mut w = Tensor::zeros(&[channels, channels, 3, 3, 3]);
        for c in 0..channels {
            w.set(&[c, c, 1, 1, 1], T::one());
        }
        let weight = store.add(format!("{name}.weight"), w, true);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[channels]), true);
        Self { weight, bias, in_channels: channels, out_channels: channels }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        tape.conv3d(x, bound.var(self.weight), bound.var(self.bias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frozen_params_receive_no_gradient() {
        let mut store = ParamStore::<f64>::new();
        let frozen = store.add("w", Tensor::scalar(2.0), false);
        let live = store.add("v", Tensor::scalar(3.0), true);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let y = tape.mul(b.var(frozen), b.var(live)).unwrap();
        tape.backward(y).unwrap();
        let g = store.grads(&tape, &b);
        assert!(g[0].is_none());
        assert_eq!(g[1].as_ref().unwrap().item(), 2.0);
    }

    #[test]
    fn linear_row_and_channel_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::<f64>::new();
        let lin = Linear::new(&mut store, "l", 3, 2, &mut rng);
        let x = uniform::<f64>(&[4, 3], 1.0, &mut rng);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let xr = tape.constant(x.clone());
        let yr = lin.forward(&mut tape, &b, xr).unwrap();
        let xc = tape.transpose(xr).unwrap();
        let yc = lin.forward_channels(&mut tape, &b, xc).unwrap();
        let yc = tape.transpose(yc).unwrap();
        assert!(tape.value(yr).max_abs_diff(tape.value(yc)) < 1e-14);
    }
}
