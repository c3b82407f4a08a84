use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::nn::{Bound, Conv3d, Linear};
use crate::tensor::{Tape, Var};
use crate::voxel::GridVar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    Addition,
    Concat,
    Conv3d,
    #[default]
    Weathfusion,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 4] = [Self::Addition, Self::Concat, Self::Conv3d, Self::Weathfusion];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Addition => "addition",
            Self::Concat => "concat",
            Self::Conv3d => "conv3d",
            Self::Weathfusion => "weathfusion",
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion strategy {s:?}")))
    }
}

fn check_extent(cam: &GridVar, pts: &GridVar) -> Result<()> {
    if !cam.spec.same_extent(&pts.spec) {
        return Err(shape_err("camera and LiDAR grids cover different voxels"));
    }
    Ok(())
}

pub fn fuse_addition<T: Real>(tape: &mut Tape<T>, cam: GridVar, pts: GridVar) -> Result<GridVar> {
    check_extent(&cam, &pts)?;
    if cam.spec.channels != pts.spec.channels {
        return Err(shape_err(format!(
            "addition fusion needs equal channels, got {} and {}",
            cam.spec.channels, pts.spec.channels
        )));
    }
    let var = tape.add(cam.var, pts.var)?;
    Ok(GridVar { spec: cam.spec, var })
}

pub fn fuse_concat<T: Real>(tape: &mut Tape<T>, cam: GridVar, pts: GridVar) -> Result<GridVar> {
    check_extent(&cam, &pts)?;
    let var = tape.concat(&[cam.var, pts.var], 0)?;
    Ok(GridVar { spec: cam.spec.with_channels(cam.spec.channels + pts.spec.channels), var })
}

/// Channel concat followed by one `3×3×3` convolution.
pub fn fuse_conv3d<T: Real>(tape: &mut Tape<T>, bound: &Bound, conv: &Conv3d, cam: GridVar, pts: GridVar) -> Result<GridVar> {
    let cat = fuse_concat(tape, cam, pts)?;
    if conv.in_channels != cat.spec.channels {
        return Err(shape_err(format!("conv expects {} channels, concat has {}", conv.in_channels, cat.spec.channels)));
    }
    let var = conv.forward(tape, bound, cat.var)?;
    Ok(GridVar { spec: cat.spec.with_channels(conv.out_channels), var })
}

/// `concat(w_cam·V_cam, w_pts·V_pts)`, optionally followed by a pointwise
/// projection. `weights` holds `[w_cam, w_pts]` in any two-element shape.
pub fn fuse_weathfusion<T: Real>(
    tape: &mut Tape<T>,
    cam: GridVar,
    pts: GridVar,
    weights: Var,
    projection: Option<(&Linear, &Bound)>,
) -> Result<GridVar> {
    check_extent(&cam, &pts)?;
    if tape.value(weights).numel() != 2 {
        return Err(shape_err(format!("fusion weights must have two entries, got {:?}", tape.shape(weights))));
    }
    let flat = tape.reshape(weights, &[2])?;
    let w_cam = tape.narrow(flat, 0, 0, 1)?;
    let w_pts = tape.narrow(flat, 0, 1, 1)?;
    let cam_w = tape.mul_scalar(cam.var, w_cam)?;
    let pts_w = tape.mul_scalar(pts.var, w_pts)?;
    let fused = fuse_concat(tape, GridVar { spec: cam.spec, var: cam_w }, GridVar { spec: pts.spec, var: pts_w })?;
    match projection {
        None => Ok(fused),
        Some((proj, bound)) => {
            let x = fused.channels_by_voxels(tape)?;
            let y = proj.forward_channels(tape, bound, x)?;
            GridVar::from_channels(tape, fused.spec, y)
        }
    }
}
