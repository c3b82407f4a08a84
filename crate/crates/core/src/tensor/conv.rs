use crate::error::{shape_err, Result};
use crate::scalar::Real;

use super::{Tape, Tensor, Var};

const K: usize = 3;

impl<T: Real> Tape<T> {
    /// Zero-padded, stride-1 `3×3×3` convolution.
    ///
    /// `x: [Cin×X×Y×Z]`, `weight: [Cout×Cin×3×3×3]`, `bias: [Cout]` → `[Cout×X×Y×Z]`.
    pub fn conv3d(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let [cin, nx, ny, nz] = match *self.shape(x) {
            [a, b, c, d] => [a, b, c, d],
            ref s => return Err(shape_err(format!("conv3d input must be [C×X×Y×Z], got {s:?}"))),
        };
        let cout = match *self.shape(weight) {
            [o, i, 3, 3, 3] if i == cin => o,
            ref s => return Err(shape_err(format!("conv3d kernel {s:?} does not match {cin} input channels"))),
        };
        if self.shape(bias) != [cout] {
            return Err(shape_err(format!("conv3d bias {:?} does not match {cout} outputs", self.shape(bias))));
        }
        let dims = Dims { cin, cout, nx, ny, nz };
        let out = dims.forward(self.value(x).data(), self.value(weight).data(), self.value(bias).data());
        let value = Tensor::new(&[cout, nx, ny, nz], out)?;
        Ok(self.record(value, &[x, weight, bias], move |ctx| {
            let g = ctx.grad.data();
            let xin = ctx.inputs[0].data();
            let w = ctx.inputs[1].data();
            let mut gx = ctx.needs[0].then(|| vec![T::zero(); xin.len()]);
            let mut gw = ctx.needs[1].then(|| vec![T::zero(); w.len()]);
            dims.for_each_tap(|o, i, tap, src, dst| {
                let gv = g[o * dims.voxels() + dst];
                if let Some(gx) = gx.as_mut() {
                    gx[i * dims.voxels() + src] += w[(o * cin + i) * 27 + tap] * gv;
                }
                if let Some(gw) = gw.as_mut() {
                    gw[(o * cin + i) * 27 + tap] += xin[i * dims.voxels() + src] * gv;
                }
            });
            let gb = ctx.needs[2].then(|| {
                let s = g.chunks(dims.voxels()).map(|c| c.iter().copied().sum()).collect();
                Tensor::new(&[cout], s).expect("bias shape")
            });
            vec![
                gx.map(|d| Tensor::new(ctx.inputs[0].shape(), d).expect("x shape")),
                gw.map(|d| Tensor::new(ctx.inputs[1].shape(), d).expect("w shape")),
                gb,
            ]
        }))
    }
}

#[derive(Clone, Copy)]
struct Dims {
    cin: usize,
    cout: usize,
    nx: usize,
    ny: usize,
    nz: usize,
}

impl Dims {
    fn voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Visits every (output channel, input channel, tap, source voxel, output voxel)
    /// with the source inside the grid.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let (nx, ny, nz) = (self.nx as isize, self.ny as isize, self.nz as isize);
        for o in 0..self.cout {
            for i in 0..self.cin {
                for ix in 0..nx {
                    for iy in 0..ny {
                        for iz in 0..nz {
                            let dst = ((ix * ny + iy) * nz + iz) as usize;
                            for tap in 0..27 {
                                let (dx, dy, dz) = ((tap / 9) as isize - 1, ((tap / 3) % 3) as isize - 1, (tap % K) as isize - 1);
                                let (sx, sy, sz) = (ix + dx, iy + dy, iz + dz);
                                if sx < 0 || sy < 0 || sz < 0 || sx >= nx || sy >= ny || sz >= nz {
                                    continue;
                                }
                                let src = ((sx * ny + sy) * nz + sz) as usize;
                                f(o, i, tap, src, dst);
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward<T: Real>(&self, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
        let n = self.voxels();
        let mut out = vec![T::zero(); self.cout * n];
        for (o, chunk) in out.chunks_mut(n).enumerate() {
            chunk.iter_mut().for_each(|v| *v = b[o]);
        }
        self.for_each_tap(|o, i, tap, src, dst| {
            out[o * n + dst] += w[(o * self.cin + i) * 27 + tap] * x[i * n + src];
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut tape = Tape::<f64>::new();
        let c = 2;
        let data: Vec<f64> = (0..c * 27).map(|i| i as f64 * 0.1).collect();
        let x = tape.constant(Tensor::new(&[c, 3, 3, 3], data).unwrap());
        let mut w = Tensor::zeros(&[c, c, 3, 3, 3]);
        for o in 0..c {
            w.set(&[o, o, 1, 1, 1], 1.0);
        }
        let w = tape.constant(w);
        let b = tape.constant(Tensor::zeros(&[c]));
        let y = tape.conv3d(x, w, b).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn box_kernel_counts_neighbours() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[1, 3, 3, 3], 1.0));
        let w = tape.constant(Tensor::full(&[1, 1, 3, 3, 3], 1.0));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.conv3d(x, w, b).unwrap();
        let v = tape.value(y);
        assert_eq!(v.get(&[0, 1, 1, 1]), 27.0);
        assert_eq!(v.get(&[0, 0, 0, 0]), 8.0);
        assert_eq!(v.get(&[0, 0, 1, 1]), 18.0);
    }
}
