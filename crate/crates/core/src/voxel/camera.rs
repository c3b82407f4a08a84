use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::{Tape, Tensor, Var};

use super::{GridSpec, GridVar, VoxelGrid};

/// Tolerance on the per-pixel depth distribution mass.
pub const DEPTH_MASS_TOL: f64 = 1e-6;

/// Pinhole camera with a rigid `camera ← world` transform and a set of
/// discrete depth hypotheses along the optical axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Rows of the world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub depth_bins: Vec<f64>,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalized(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

impl CameraModel {
    /// Camera at `eye` looking at `target`, image x to the right and y down.
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        size: (usize, usize),
        horizontal_fov_deg: f64,
        depth_bins: Vec<f64>,
    ) -> Result<Self> {
        let (width, height) = size;
        let forward = normalized([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]]);
        let right = normalized(cross(forward, up));
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let translation = [0, 1, 2].map(|r| -dot(rotation[r], eye));
        let fx = (width as f64 / 2.0) / (horizontal_fov_deg.to_radians() / 2.0).tan();
        let cam = Self {
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
            depth_bins,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!("focal lengths must be positive, got ({}, {})", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image must have at least one pixel".into()));
        }
        let r = self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot(r[i], r[j]) - expected).abs() > 1e-9 {
                    return Err(Error::Config("rotation is not orthonormal".into()));
                }
            }
        }
        if self.depth_bins.is_empty()
            || self.depth_bins[0] <= 0.0
            || self.depth_bins.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("depth bins must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Camera centre in world coordinates.
    pub fn position(&self) -> [f64; 3] {
        self.camera_to_world([0.0; 3])
    }

    pub fn camera_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.translation[0], p[1] - self.translation[1], p[2] - self.translation[2]];
        let r = self.rotation;
        [0, 1, 2].map(|c| r[0][c] * d[0] + r[1][c] * d[1] + r[2][c] * d[2])
    }

    pub fn world_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|r| dot(self.rotation[r], p) + self.translation[r])
    }

    /// World point seen through the centre of pixel `(u, v)` at optical-axis depth `depth`.
    pub fn unproject(&self, u: usize, v: usize, depth: f64) -> [f64; 3] {
        let x = (u as f64 + 0.5 - self.cx) / self.fx * depth;
        let y = (v as f64 + 0.5 - self.cy) / self.fy * depth;
        self.camera_to_world([x, y, depth])
    }

    /// Unit world-space direction of the ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: usize, v: usize) -> [f64; 3] {
        let p = self.unproject(u, v, 1.0);
        let o = self.position();
        normalized([p[0] - o[0], p[1] - o[1], p[2] - o[2]])
    }
}

/// Precomputed voxel target of every `(depth bin, pixel)` pair for one
/// camera and grid. Geometry is fixed, so the splat is bilinear in
/// features and depth probabilities.
#[derive(Debug, Clone)]
pub struct SplatPlan {
    pub grid: GridSpec,
    pub width: usize,
    pub height: usize,
    pub bins: usize,
    /// `targets[bin * pixels + pixel]`, `None` when outside the grid.
    targets: Vec<Option<u32>>,
}

impl SplatPlan {
    pub fn new(camera: &CameraModel, grid: &GridSpec) -> Result<Arc<Self>> {
        camera.validate()?;
        grid.validate()?;
        let mut targets = Vec::with_capacity(camera.depth_bins.len() * camera.pixels());
        for &depth in &camera.depth_bins {
            for v in 0..camera.height {
                for u in 0..camera.width {
                    let p = camera.unproject(u, v, depth);
                    targets.push(grid.voxel_index(p).map(|i| grid.flat_index(i) as u32));
                }
            }
        }
        Ok(Arc::new(Self { grid: *grid, width: camera.width, height: camera.height, bins: camera.depth_bins.len(), targets }))
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn target(&self, bin: usize, pixel: usize) -> Option<usize> {
        self.targets[bin * self.pixels() + pixel].map(|t| t as usize)
    }

    /// Lifts `features[F×H×W]` along `depth_probs[D×H×W]` and sum-pools the
    /// products into a `[F×nx×ny×nz]` grid. Out-of-grid mass is dropped.
    pub fn splat<T: Real>(self: &Arc<Self>, tape: &mut Tape<T>, features: Var, depth_probs: Var) -> Result<GridVar> {
        let f = match *tape.shape(features) {
            [f, h, w] if h == self.height && w == self.width => f,
            ref s => {
                return Err(shape_err(format!("image features {s:?} do not match a {}x{} image", self.height, self.width)))
            }
        };
        if tape.shape(depth_probs) != [self.bins, self.height, self.width] {
            return Err(shape_err(format!(
                "depth probabilities {:?} do not match [{}x{}x{}]",
                tape.shape(depth_probs),
                self.bins,
                self.height,
                self.width
            )));
        }
        let pixels = self.pixels();
        let probs = tape.value(depth_probs).data();
        for p in 0..pixels {
            let mut mass = 0.0;
            for d in 0..self.bins {
                let v = probs[d * pixels + p].as_f64();
                if v.is_nan() || v < 0.0 {
                    return Err(Error::Contract(format!("negative depth probability at pixel {p}")));
                }
                mass += v;
            }
            if mass > 1.0 + DEPTH_MASS_TOL {
                return Err(Error::Contract(format!("depth distribution at pixel {p} has mass {mass}")));
            }
        }

        let voxels = self.grid.voxels();
        let feats = tape.value(features).data();
        let mut out = vec![T::zero(); f * voxels];
        for d in 0..self.bins {
            for p in 0..pixels {
                let Some(v) = self.target(d, p) else { continue };
                let w = probs[d * pixels + p];
                if w == T::zero() {
                    continue;
                }
                for c in 0..f {
                    out[c * voxels + v] += feats[c * pixels + p] * w;
                }
            }
        }
        let spec = self.grid.with_channels(f);
        let value = Tensor::new(&spec.feature_shape(), out)?;
        let plan = Arc::clone(self);
        let var = tape.record(value, &[features, depth_probs], move |ctx| {
            let g = ctx.grad.data();
            let feats = ctx.inputs[0].data();
            let probs = ctx.inputs[1].data();
            let mut gf = ctx.needs[0].then(|| vec![T::zero(); feats.len()]);
            let mut gp = ctx.needs[1].then(|| vec![T::zero(); probs.len()]);
            for d in 0..plan.bins {
                for p in 0..pixels {
                    let Some(v) = plan.target(d, p) else { continue };
                    let w = probs[d * pixels + p];
                    let mut acc = T::zero();
                    for c in 0..f {
                        let gv = g[c * voxels + v];
                        if let Some(gf) = gf.as_mut() {
                            gf[c * pixels + p] += w * gv;
                        }
                        acc += feats[c * pixels + p] * gv;
                    }
                    if let Some(gp) = gp.as_mut() {
                        gp[d * pixels + p] += acc;
                    }
                }
            }
            vec![
                gf.map(|d| Tensor::new(ctx.inputs[0].shape(), d).expect("feature shape")),
                gp.map(|d| Tensor::new(ctx.inputs[1].shape(), d).expect("prob shape")),
            ]
        });
        Ok(GridVar { spec, var })
    }
}

/// One-shot splat of plain tensors into a grid.
pub fn lss_splat<T: Real>(
    features: &Tensor<T>,
    depth_probs: &Tensor<T>,
    camera: &CameraModel,
    grid: &GridSpec,
) -> Result<VoxelGrid<T>> {
    let plan = SplatPlan::new(camera, grid)?;
    let mut tape = Tape::new();
    let f = tape.constant(features.clone());
    let p = tape.constant(depth_probs.clone());
    let out = plan.splat(&mut tape, f, p)?;
    Ok(out.to_grid(&tape))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_camera(size: (usize, usize), bins: Vec<f64>) -> CameraModel {
        CameraModel {
            fx: 1.0,
            fy: 1.0,
            cx: size.0 as f64 / 2.0,
            cy: size.1 as f64 / 2.0,
            width: size.0,
            height: size.1,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            depth_bins: bins,
        }
    }

    fn deep_grid(channels: usize) -> GridSpec {
        GridSpec::new([[-4.0, 4.0], [-4.0, 4.0], [0.0, 16.0]], [8, 8, 16], channels).unwrap()
    }

    #[test]
    fn principal_pixel_lands_on_axis() {
        let cam = identity_camera((1, 1), vec![10.0]);
        let grid = deep_grid(1);
        let feats = Tensor::<f64>::from_f64(&[1, 1, 1], &[2.5]).unwrap();
        let probs = Tensor::<f64>::from_f64(&[1, 1, 1], &[1.0]).unwrap();
        let out = lss_splat(&feats, &probs, &cam, &grid).unwrap();
        let idx = grid.voxel_index([0.0, 0.0, 10.0]).unwrap();
        assert_eq!(out.voxel(idx), vec![2.5]);
        assert_eq!(out.features.sum(), 2.5);
    }

    #[test]
    fn zero_probabilities_give_zero_grid() {
        let cam = identity_camera((3, 2), vec![2.0, 5.0]);
        let grid = deep_grid(2);
        let feats = Tensor::<f64>::full(&[2, 2, 3], 1.0);
        let probs = Tensor::<f64>::zeros(&[2, 2, 3]);
        let out = lss_splat(&feats, &probs, &cam, &grid).unwrap();
        assert!(out.features.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overfull_depth_column_is_rejected() {
        let cam = identity_camera((1, 1), vec![2.0, 5.0]);
        let feats = Tensor::<f64>::full(&[1, 1, 1], 1.0);
        let probs = Tensor::<f64>::from_f64(&[2, 1, 1], &[0.7, 0.4]).unwrap();
        assert!(matches!(lss_splat(&feats, &probs, &cam, &deep_grid(1)), Err(Error::Contract(_))));
    }

    #[test]
    fn look_at_axes() {
        let cam = CameraModel::look_at([-5.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], (4, 4), 90.0, vec![1.0]).unwrap();
        let p = cam.world_to_camera([0.0, 0.0, 0.0]);
        assert!((p[2] - 5.0).abs() < 1e-12 && p[0].abs() < 1e-12 && p[1].abs() < 1e-12);
        let back = cam.camera_to_world(p);
        assert!(back.iter().all(|c| c.abs() < 1e-12));
        // world +z is image-up, i.e. negative camera y
        assert!(cam.world_to_camera([-5.0, 0.0, 1.0])[1] < 0.0);
    }

    #[test]
    fn bad_bins_rejected() {
        assert!(identity_camera((1, 1), vec![2.0, 2.0]).validate().is_err());
        assert!(identity_camera((1, 1), vec![0.0, 1.0]).validate().is_err());
    }
}
