//! Differentiable primitives recorded on the tape.

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

use super::{axis_split, same_shape, Tape, Tensor, Var};

/// Guard below which [`Tape::l2_normalize`] treats a vector as zero.
pub const NORMALIZE_EPS: f64 = 1e-12;

fn matmul_raw<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose_raw<T: Real>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Real>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.iter().enumerate().filter(|&(i, _)| i != axis).map(|(_, &n)| n).collect();
    if s.is_empty() {
        s.push(1);
    }
    s
}

fn matrix_dims(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match *shape {
        [m, n] => Ok((m, n)),
        _ => Err(shape_err(format!("{what} expects a matrix, got shape {shape:?}"))),
    }
}

impl<T: Real> Tape<T> {
    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var {
        // df(x, y) is the local derivative given input x and output y
        let value = self.value(a).map(f);
        self.record(value, &[a], move |ctx| {
            let x = ctx.inputs[0].data();
            let y = ctx.output.data();
            let g = ctx.grad.data();
            let d = (0..x.len()).map(|i| g[i] * df(x[i], y[i])).collect();
            vec![Some(Tensor::new(ctx.grad.shape(), d).expect("same shape"))]
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.record(value, &[a, b], |ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.record(value, &[a, b], |ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.record(value, &[a, b], |ctx| {
            let ga = ctx.needs[0].then(|| ctx.grad.zip_map(ctx.inputs[1], |g, y| g * y).expect("same shape"));
            let gb = ctx.needs[1].then(|| ctx.grad.zip_map(ctx.inputs[0], |g, x| g * x).expect("same shape"));
            vec![ga, gb]
        }))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).scale(c);
        self.record(value, &[a], move |ctx| vec![Some(ctx.grad.scale(c))])
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.record(value, &[a], |ctx| vec![Some(ctx.grad.clone())])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let original = self.shape(a).to_vec();
        Ok(self.record(value, &[a], move |ctx| vec![Some(ctx.grad.reshape(&original).expect("same numel"))]))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.record(value, &[a], |ctx| vec![Some(Tensor::full(ctx.inputs[0].shape(), ctx.grad.item()))])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::lit(self.value(a).numel() as f64);
        let value = Tensor::scalar(self.value(a).sum() / n);
        self.record(value, &[a], move |ctx| vec![Some(Tensor::full(ctx.inputs[0].shape(), ctx.grad.item() / n))])
    }

    /// Sums over `axis`, removing it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(a, axis, false)
    }

    /// Averages over `axis`, removing it.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(a, axis, true)
    }

    fn reduce_axis(&mut self, a: Var, axis: usize, average: bool) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis)?;
        let norm = if average { T::one() / T::lit(n as f64) } else { T::one() };
        let x = self.value(a).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += x[base + i];
                }
            }
        }
        for v in &mut out {
            *v *= norm;
        }
        let value = Tensor::new(&reduced_shape(&shape, axis), out)?;
        Ok(self.record(value, &[a], move |ctx| {
            let g = ctx.grad.data();
            let mut d = vec![T::zero(); outer * n * inner];
            for o in 0..outer {
                for k in 0..n {
                    for i in 0..inner {
                        d[(o * n + k) * inner + i] = g[o * inner + i] * norm;
                    }
                }
            }
            vec![Some(Tensor::new(&shape, d).expect("input shape"))]
        }))
    }

    /// `[M×K]·[K×N] → [M×N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_dims(self.shape(a), "matmul")?;
        let (k2, n) = matrix_dims(self.shape(b), "matmul")?;
        if k != k2 {
            return Err(shape_err(format!("matmul inner dims differ: [{m}x{k}]·[{k2}x{n}]")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.record(value, &[a, b], move |ctx| {
            let g = ctx.grad.data();
            // dA = dC·Bᵀ, dB = Aᵀ·dC
            let ga = ctx.needs[0].then(|| {
                let bt = transpose_raw(ctx.inputs[1].data(), k, n);
                Tensor::new(&[m, k], matmul_raw(g, &bt, m, n, k)).expect("dA shape")
            });
            let gb = ctx.needs[1].then(|| {
                let at = transpose_raw(ctx.inputs[0].data(), m, k);
                Tensor::new(&[k, n], matmul_raw(&at, g, k, m, n)).expect("dB shape")
            });
            vec![ga, gb]
        }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.shape(a), "transpose")?;
        let value = Tensor::new(&[n, m], transpose_raw(self.value(a).data(), m, n))?;
        Ok(self.record(value, &[a], move |ctx| {
            vec![Some(Tensor::new(&[m, n], transpose_raw(ctx.grad.data(), n, m)).expect("shape"))]
        }))
    }

    /// `a[M×N] + b[N]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.shape(a), "add_row")?;
        if self.shape(b) != [n] {
            return Err(shape_err(format!("add_row: bias {:?} does not match [{m}x{n}]", self.shape(b))));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.record(value, &[a, b], move |ctx| {
            let gb = ctx.needs[1].then(|| {
                let mut s = vec![T::zero(); n];
                for row in ctx.grad.data().chunks(n) {
                    for (acc, &g) in s.iter_mut().zip(row) {
                        *acc += g;
                    }
                }
                Tensor::new(&[n], s).expect("bias shape")
            });
            vec![Some(ctx.grad.clone()), gb]
        }))
    }

    /// `a[M×N] + b[M]` broadcast over columns.
    pub fn add_col(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.shape(a), "add_col")?;
        if self.shape(b) != [m] {
            return Err(shape_err(format!("add_col: bias {:?} does not match [{m}x{n}]", self.shape(b))));
        }
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for (row, &bv) in out.chunks_mut(n).zip(&bias) {
            for o in row {
                *o += bv;
            }
        }
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.record(value, &[a, b], move |ctx| {
            let gb = ctx.needs[1].then(|| {
                let s = ctx.grad.data().chunks(n).map(|row| row.iter().copied().sum()).collect();
                Tensor::new(&[m], s).expect("bias shape")
            });
            vec![Some(ctx.grad.clone()), gb]
        }))
    }

    /// `a[M×N] ⊙ b[M]`: each row scaled by its own factor.
    pub fn mul_col(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = matrix_dims(self.shape(a), "mul_col")?;
        if self.shape(b) != [m] {
            return Err(shape_err(format!("mul_col: factors {:?} do not match [{m}x{n}]", self.shape(b))));
        }
        let f = self.value(b).data();
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .zip(f)
            .flat_map(|(row, &s)| row.iter().map(move |&x| x * s))
            .collect();
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.record(value, &[a, b], move |ctx| {
            let g = ctx.grad.data();
            let ga = ctx.needs[0].then(|| {
                let f = ctx.inputs[1].data();
                let d = g.chunks(n).zip(f).flat_map(|(row, &s)| row.iter().map(move |&x| x * s)).collect();
                Tensor::new(&[m, n], d).expect("shape")
            });
            let gb = ctx.needs[1].then(|| {
                let x = ctx.inputs[0].data();
                let d = g
                    .chunks(n)
                    .zip(x.chunks(n))
                    .map(|(gr, xr)| gr.iter().zip(xr).map(|(&a, &b)| a * b).sum())
                    .collect();
                Tensor::new(&[m], d).expect("shape")
            });
            vec![ga, gb]
        }))
    }

    /// Multiplies every element of `a` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(shape_err(format!("mul_scalar: factor has shape {:?}", self.shape(s))));
        }
        let c = self.value(s).item();
        let value = self.value(a).scale(c);
        Ok(self.record(value, &[a, s], |ctx| {
            let c = ctx.inputs[1].item();
            let ga = ctx.needs[0].then(|| ctx.grad.scale(c));
            let gs = ctx.needs[1].then(|| {
                let dot = ctx.grad.data().iter().zip(ctx.inputs[0].data()).map(|(&g, &x)| g * x).sum();
                Tensor::new(ctx.inputs[1].shape(), vec![dot]).expect("shape")
            });
            vec![ga, gs]
        }))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, |x, _| sigmoid(x))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), |_, y| y)
    }

    /// Softmax along `axis`, stabilized by subtracting the axis maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis)?;
        let x = self.value(a).data();
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidValue("softmax input contains NaN".into()));
        }
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let max = (0..n).map(|k| x[at(k)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for k in 0..n {
                    let e = (x[at(k)] - max).exp();
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..n {
                    out[at(k)] /= z;
                }
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.record(value, &[a], move |ctx| {
            let y = ctx.output.data();
            let g = ctx.grad.data();
            let mut d = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * n + k) * inner + i;
                    let dot: T = (0..n).map(|k| g[at(k)] * y[at(k)]).sum();
                    for k in 0..n {
                        d[at(k)] = y[at(k)] * (g[at(k)] - dot);
                    }
                }
            }
            vec![Some(Tensor::new(&shape, d).expect("shape"))]
        }))
    }

    /// Euclidean norm over `axis`, removing it. The zero vector has norm 0
    /// and receives a zero subgradient.
    pub fn norm_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis)?;
        let x = self.value(a).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let s: T = (0..n).map(|k| x[(o * n + k) * inner + i].powi(2)).sum();
                out[o * inner + i] = s.sqrt();
            }
        }
        let value = Tensor::new(&reduced_shape(&shape, axis), out)?;
        Ok(self.record(value, &[a], move |ctx| {
            let x = ctx.inputs[0].data();
            let y = ctx.output.data();
            let g = ctx.grad.data();
            let mut d = vec![T::zero(); x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let nrm = y[o * inner + i];
                    if nrm > T::zero() {
                        let s = g[o * inner + i] / nrm;
                        for k in 0..n {
                            let at = (o * n + k) * inner + i;
                            d[at] = s * x[at];
                        }
                    }
                }
            }
            vec![Some(Tensor::new(&shape, d).expect("shape"))]
        }))
    }

    /// Scales each vector along `axis` to unit length; vectors shorter than
    /// [`NORMALIZE_EPS`] are divided by the epsilon, so zero stays zero.
    pub fn l2_normalize(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis)?;
        let eps = T::lit(NORMALIZE_EPS);
        let x = self.value(a).data();
        let mut out = vec![T::zero(); x.len()];
        let mut denoms = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let s: T = (0..n).map(|k| x[(o * n + k) * inner + i].powi(2)).sum();
                let dn = s.sqrt().max(eps);
                denoms[o * inner + i] = dn;
                for k in 0..n {
                    let at = (o * n + k) * inner + i;
                    out[at] = x[at] / dn;
                }
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.record(value, &[a], move |ctx| {
            let y = ctx.output.data();
            let g = ctx.grad.data();
            let mut d = vec![T::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let dn = denoms[o * inner + i];
                    let at = |k: usize| (o * n + k) * inner + i;
                    if dn > eps {
                        let dot: T = (0..n).map(|k| y[at(k)] * g[at(k)]).sum();
                        for k in 0..n {
                            d[at(k)] = (g[at(k)] - y[at(k)] * dot) / dn;
                        }
                    } else {
                        for k in 0..n {
                            d[at(k)] = g[at(k)] / dn;
                        }
                    }
                }
            }
            vec![Some(Tensor::new(&shape, d).expect("shape"))]
        }))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or_else(|| shape_err("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        let mut extents = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(shape_err(format!("concat along {axis}: {s:?} incompatible with {base:?}")));
            }
            extents.push(s[axis]);
        }
        let (outer, _, inner) = axis_split(&base, axis)?;
        let total: usize = extents.iter().sum();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &e) in parts.iter().zip(&extents) {
                let x = self.value(p).data();
                out.extend_from_slice(&x[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.record(value, parts, move |ctx| {
            let g = ctx.grad.data();
            let mut offset = 0;
            let mut grads = Vec::with_capacity(extents.len());
            for (j, &e) in extents.iter().enumerate() {
                if ctx.needs[j] {
                    let mut d = Vec::with_capacity(outer * e * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        d.extend_from_slice(&g[start..start + e * inner]);
                    }
                    grads.push(Some(Tensor::new(ctx.inputs[j].shape(), d).expect("part shape")));
                } else {
                    grads.push(None);
                }
                offset += e;
            }
            grads
        }))
    }

    /// Contiguous sub-range `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis)?;
        if len == 0 || start + len > n {
            return Err(shape_err(format!("narrow [{start}, {}) outside extent {n}", start + len)));
        }
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let s = (o * n + start) * inner;
            out.extend_from_slice(&x[s..s + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let value = Tensor::new(&out_shape, out)?;
        Ok(self.record(value, &[a], move |ctx| {
            let g = ctx.grad.data();
            let mut d = vec![T::zero(); outer * n * inner];
            for o in 0..outer {
                let s = (o * n + start) * inner;
                d[s..s + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(Tensor::new(&shape, d).expect("shape"))]
        }))
    }

    /// Forward difference `x[k+1] − x[k]` along `axis`; that extent shrinks by one.
    pub fn diff(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis)?;
        if n < 2 {
            return Err(shape_err(format!("difference along axis {axis} needs extent >= 2, got {n}")));
        }
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(outer * (n - 1) * inner);
        for o in 0..outer {
            for k in 0..n - 1 {
                for i in 0..inner {
                    out.push(x[(o * n + k + 1) * inner + i] - x[(o * n + k) * inner + i]);
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = n - 1;
        let value = Tensor::new(&out_shape, out)?;
        Ok(self.record(value, &[a], move |ctx| {
            let g = ctx.grad.data();
            let mut d = vec![T::zero(); outer * n * inner];
            for o in 0..outer {
                for k in 0..n - 1 {
                    for i in 0..inner {
                        let gv = g[(o * (n - 1) + k) * inner + i];
                        d[(o * n + k + 1) * inner + i] += gv;
                        d[(o * n + k) * inner + i] -= gv;
                    }
                }
            }
            vec![Some(Tensor::new(&shape, d).expect("shape"))]
        }))
    }

    /// Mean squared error, shape `[1]`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.shape(a), self.shape(b))?;
        let n = T::lit(self.value(a).numel() as f64);
        let s: T = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| (x - y).powi(2)).sum();
        Ok(self.record(Tensor::scalar(s / n), &[a, b], move |ctx| {
            let c = ctx.grad.item() * T::lit(2.0) / n;
            let d = ctx.inputs[0].zip_map(ctx.inputs[1], |x, y| c * (x - y)).expect("same shape");
            let gb = ctx.needs[1].then(|| d.scale(-T::one()));
            vec![Some(d), gb]
        }))
    }

    /// Mean absolute error, shape `[1]`. Zero differences get a zero subgradient.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.shape(a), self.shape(b))?;
        let n = T::lit(self.value(a).numel() as f64);
        let s: T = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| (x - y).abs()).sum();
        Ok(self.record(Tensor::scalar(s / n), &[a, b], move |ctx| {
            let c = ctx.grad.item() / n;
            let d = ctx
                .inputs[0]
                .zip_map(ctx.inputs[1], |x, y| {
                    let diff = x - y;
                    if diff > T::zero() {
                        c
                    } else if diff < T::zero() {
                        -c
                    } else {
                        T::zero()
                    }
                })
                .expect("same shape");
            let gb = ctx.needs[1].then(|| d.scale(-T::one()));
            vec![Some(d), gb]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::eye(2));
        let x = tape.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let y = tape.matmul(eye, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));

        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let ones = tape.constant(t(&[2, 1], &[1., 1.]));
        let c = tape.matmul(a, ones).unwrap();
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::<f64>::zeros(&[2, 3]));
        let b = tape.constant(Tensor::<f64>::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_hand_values() {
        let mut tape = Tape::new();
        let z = tape.constant(t(&[2], &[0.0, 0.0]));
        let s = tape.softmax(z, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

        let x = tape.constant(t(&[2], &[2f64.ln(), 0.0]));
        let s = tape.softmax(x, 0).unwrap();
        let v = tape.value(s).data();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-12 && (v[1] - 1.0 / 3.0).abs() < 1e-12);

        let big = tape.constant(t(&[2], &[1000.0, 0.0]));
        let s = tape.softmax(big, 0).unwrap();
        let v = tape.value(s).data();
        assert!(v.iter().all(|x| x.is_finite()));
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1] < 1e-300);
    }

    #[test]
    fn softmax_nan_is_invalid() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[f64::NAN, 0.0]));
        assert!(matches!(tape.softmax(x, 0), Err(Error::InvalidValue(_))));
    }

    #[test]
    fn softmax_middle_axis_sums_to_one() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        let x = tape.constant(t(&[2, 3, 4], &data));
        let s = tape.softmax(x, 1).unwrap();
        let y = tape.value(s);
        for o in 0..2 {
            for i in 0..4 {
                let total: f64 = (0..3).map(|k| y.get(&[o, k, i])).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_limits() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[0.0, -800.0, 800.0]));
        let y = tape.sigmoid(x);
        let v = tape.value(y).data();
        assert_eq!(v[0], 0.5);
        assert!(v[1] >= 0.0 && v[1] < 1e-300);
        assert_eq!(v[2], 1.0);
    }

    #[test]
    fn l2_normalize_hand_and_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[3.0, 4.0]));
        let y = tape.l2_normalize(x, 0).unwrap();
        let v = tape.value(y).data();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let z = tape.constant(t(&[3], &[0.0, 0.0, 0.0]));
        let y = tape.l2_normalize(z, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn mse_and_concat_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let m = tape.mse(a, a).unwrap();
        assert_eq!(tape.value(m).item(), 0.0);

        let b = tape.constant(Tensor::zeros(&[3, 2]));
        let c = tape.concat(&[a, b], 0).unwrap();
        assert_eq!(tape.shape(c), &[5, 2]);
        assert!(tape.concat(&[a, b], 1).is_err());
    }

    #[test]
    fn diff_needs_two_entries() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 1], &[1., 2.]));
        assert!(tape.diff(a, 1).is_err());
        let d = tape.diff(a, 0).unwrap();
        assert_eq!(tape.value(d).data(), &[1.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(-1000.0f64) >= 0.0);
    }
}
