//! Metric voxel grids and the operations that fill and slice them.

mod camera;
mod io;
mod points;
mod slicing;

pub use camera::{lss_splat, CameraModel, SplatPlan};
pub use io::{read_grid_json, read_voxf, write_grid_json, write_voxf, VOXF_MAGIC, VOXF_VERSION};
pub use points::{voxelize, Point, PointCloud};
pub use slicing::{depth_slices, vertical_gradient, DepthAxis};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::{Tape, Tensor, Var};

/// Axis-aligned metric extent and resolution of a dense voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub channels: usize,
}

impl GridSpec {
    pub fn new(ranges: [[f64; 2]; 3], dims: [usize; 3], channels: usize) -> Result<Self> {
        let spec = Self {
            x_range: ranges[0],
            y_range: ranges[1],
            z_range: ranges[2],
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            channels,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 200×200×16 over [−50, 50]² × [−5, 3] m.
    pub fn full_scale(channels: usize) -> Self {
        Self::new([[-50.0, 50.0], [-50.0, 50.0], [-5.0, 3.0]], [200, 200, 16], channels).expect("valid")
    }

    /// 20×20×8 over [−10, 10]² × [−2, 2] m: 1 m columns, 0.5 m layers.
    pub fn desk(channels: usize) -> Self {
        Self::new([[-10.0, 10.0], [-10.0, 10.0], [-2.0, 2.0]], [20, 20, 8], channels).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("x", self.x_range), ("y", self.y_range), ("z", self.z_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[1] > r[0]) {
                return Err(Error::Config(format!("{name} range {r:?} is degenerate")));
            }
        }
        if self.nx == 0 || self.ny == 0 || self.nz == 0 || self.channels == 0 {
            return Err(Error::Config(format!(
                "grid counts must be >= 1, got {}x{}x{} with {} channels",
                self.nx, self.ny, self.nz, self.channels
            )));
        }
        Ok(())
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn ranges(&self) -> [[f64; 2]; 3] {
        [self.x_range, self.y_range, self.z_range]
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        let d = self.dims();
        let r = self.ranges();
        [0, 1, 2].map(|a| (r[a][1] - r[a][0]) / d[a] as f64)
    }

    /// `[C, nx, ny, nz]`.
    pub fn feature_shape(&self) -> [usize; 4] {
        [self.channels, self.nx, self.ny, self.nz]
    }

    /// True when the two grids cover the same voxels (channels may differ).
    pub fn same_extent(&self, other: &Self) -> bool {
        self.ranges() == other.ranges() && self.dims() == other.dims()
    }

    /// Voxel containing `p`; the upper boundary of each range is exclusive.
    pub fn voxel_index(&self, p: [f64; 3]) -> Option<[usize; 3]> {
        let r = self.ranges();
        let d = self.dims();
        let size = self.voxel_size();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let x = p[a];
            if !(x >= r[a][0] && x < r[a][1]) {
                return None;
            }
            let i = ((x - r[a][0]) / size[a]).floor() as usize;
            idx[a] = i.min(d[a] - 1);
        }
        Some(idx)
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.ny + idx[1]) * self.nz + idx[2]
    }

    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        [flat / (self.ny * self.nz), (flat / self.nz) % self.ny, flat % self.nz]
    }

    /// Metric centre of a voxel.
    pub fn center(&self, idx: [usize; 3]) -> [f64; 3] {
        let r = self.ranges();
        let size = self.voxel_size();
        [0, 1, 2].map(|a| r[a][0] + (idx[a] as f64 + 0.5) * size[a])
    }
}

/// Dense `C×nx×ny×nz` feature volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid<T> {
    pub spec: GridSpec,
    pub features: Tensor<T>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(spec: GridSpec, features: Tensor<T>) -> Result<Self> {
        spec.validate()?;
        if features.shape() != spec.feature_shape() {
            return Err(shape_err(format!(
                "features {:?} do not match grid {:?}",
                features.shape(),
                spec.feature_shape()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidValue("grid features must be finite".into()));
        }
        Ok(Self { spec, features })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, features: Tensor::zeros(&spec.feature_shape()) }
    }

    /// Feature vector of one voxel.
    pub fn voxel(&self, idx: [usize; 3]) -> Vec<T> {
        let n = self.spec.voxels();
        let flat = self.spec.flat_index(idx);
        (0..self.spec.channels).map(|c| self.features.data()[c * n + flat]).collect()
    }

    pub fn record(&self, tape: &mut Tape<T>) -> GridVar {
        GridVar { spec: self.spec, var: tape.constant(self.features.clone()) }
    }
}

/// A voxel grid living on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GridVar {
    pub spec: GridSpec,
    pub var: Var,
}

impl GridVar {
    pub fn new<T: Real>(tape: &Tape<T>, spec: GridSpec, var: Var) -> Result<Self> {
        if tape.shape(var) != spec.feature_shape() {
            return Err(shape_err(format!("value {:?} does not match grid {:?}", tape.shape(var), spec.feature_shape())));
        }
        Ok(Self { spec, var })
    }

    pub fn to_grid<T: Real>(&self, tape: &Tape<T>) -> VoxelGrid<T> {
        VoxelGrid { spec: self.spec, features: tape.value(self.var).clone() }
    }

    /// `[C, N]` view with voxels flattened.
    pub fn channels_by_voxels<T: Real>(&self, tape: &mut Tape<T>) -> Result<Var> {
        tape.reshape(self.var, &[self.spec.channels, self.spec.voxels()])
    }

    /// Wraps a `[C, N]` matrix back into a grid with the same extent.
    pub fn from_channels<T: Real>(tape: &mut Tape<T>, like: GridSpec, flat: Var) -> Result<Self> {
        let c = tape.shape(flat)[0];
        let spec = like.with_channels(c);
        let var = tape.reshape(flat, &spec.feature_shape())?;
        Ok(Self { spec, var })
    }
}
