//! Depth-aware geometric alignment between camera and LiDAR volumes.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::{Tape, Var};
use crate::voxel::{depth_slices, DepthAxis, GridVar};

/// Order of the two steps that turn a feature vector into an intensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityOrder {
    /// `sigmoid(‖v‖₂)`.
    #[default]
    NormThenSigmoid,
    /// `‖sigmoid(v)‖₂`.
    SigmoidThenNorm,
}

/// Volume the vertical sharpness term differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharpnessInput {
    #[default]
    Intensity,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DagaConfig {
    pub beta: f64,
    /// Number of depth layers; `None` uses the full extent of the depth axis.
    pub depth_slices: Option<usize>,
    pub lambda_sharp: f64,
    pub depth_axis: DepthAxis,
    pub intensity_order: IntensityOrder,
    pub sharpness_on: SharpnessInput,
}

impl Default for DagaConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            depth_slices: None,
            lambda_sharp: 0.1,
            depth_axis: DepthAxis::Z,
            intensity_order: IntensityOrder::NormThenSigmoid,
            sharpness_on: SharpnessInput::Intensity,
        }
    }
}

impl DagaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lambda_sharp >= 0.0 && self.lambda_sharp.is_finite()) {
            return Err(Error::Config(format!("lambda_sharp must be finite and >= 0, got {}", self.lambda_sharp)));
        }
        if self.depth_slices == Some(0) {
            return Err(Error::Config("depth slice count must be >= 1".into()));
        }
        Ok(())
    }

    /// Slice count for a depth axis of the given extent.
    pub fn slice_count(&self, extent: usize) -> usize {
        self.depth_slices.unwrap_or(extent)
    }
}

/// `W(d) = 1 / (1 + β·d/D)` for `0 ≤ d < D`.
pub fn depth_weight(d: usize, slices: usize, beta: f64) -> Result<f64> {
    if d >= slices {
        return Err(Error::OutOfRange(format!("depth index {d} outside 0..{slices}")));
    }
    Ok(1.0 / (1.0 + beta * (d as f64 / slices as f64)))
}

/// Per-voxel scalar intensity `[X×Y×Z]` of a `[C×X×Y×Z]` grid.
pub fn intensity<T: Real>(tape: &mut Tape<T>, grid: GridVar, order: IntensityOrder) -> Result<Var> {
    match order {
        IntensityOrder::NormThenSigmoid => {
            let n = tape.norm_axis(grid.var, 0)?;
            Ok(tape.sigmoid(n))
        }
        IntensityOrder::SigmoidThenNorm => {
            let s = tape.sigmoid(grid.var);
            tape.norm_axis(s, 0)
        }
    }
}

/// Mean absolute difference of the forward differences along `axis`.
pub fn sharpness_loss<T: Real>(tape: &mut Tape<T>, a: Var, b: Var, axis: usize) -> Result<Var> {
    if tape.shape(a) != tape.shape(b) {
        return Err(shape_err(format!("sharpness inputs differ: {:?} vs {:?}", tape.shape(a), tape.shape(b))));
    }
    let ga = tape.diff(a, axis)?;
    let gb = tape.diff(b, axis)?;
    tape.l1(ga, gb)
}

pub struct DagaTerms {
    pub total: Var,
    /// Depth-weighted slice MSE averaged over slices.
    pub alignment: Var,
    /// Unweighted sharpness term.
    pub sharpness: Var,
}

pub fn daga_loss<T: Real>(tape: &mut Tape<T>, cam: GridVar, pts: GridVar, cfg: &DagaConfig) -> Result<DagaTerms> {
    cfg.validate()?;
    if cam.spec != pts.spec {
        return Err(shape_err("alignment needs camera and LiDAR grids with identical specs"));
    }
    if cam.spec.nz < 2 {
        return Err(shape_err(format!("alignment needs nz >= 2, got {}", cam.spec.nz)));
    }
    let i_cam = intensity(tape, cam, cfg.intensity_order)?;
    let i_pts = intensity(tape, pts, cfg.intensity_order)?;

    let axis = cfg.depth_axis.spatial_index();
    let count = cfg.slice_count(cam.spec.dims()[axis]);
    let cam_slices = depth_slices(tape, i_cam, axis, count)?;
    let pts_slices = depth_slices(tape, i_pts, axis, count)?;
    let mut weighted = Vec::with_capacity(count);
    for (d, (&c, &p)) in cam_slices.iter().zip(&pts_slices).enumerate() {
        let mse = tape.mse(c, p)?;
        weighted.push(tape.scale(mse, T::lit(depth_weight(d, count, cfg.beta)?)));
    }
    let stacked = tape.concat(&weighted, 0)?;
    let alignment = tape.mean(stacked);

    let sharpness = match cfg.sharpness_on {
        SharpnessInput::Intensity => sharpness_loss(tape, i_cam, i_pts, 2)?,
        SharpnessInput::Raw => sharpness_loss(tape, cam.var, pts.var, 3)?,
    };
    let sharp_scaled = tape.scale(sharpness, T::lit(cfg.lambda_sharp));
    let total = tape.add(alignment, sharp_scaled)?;
    Ok(DagaTerms { total, alignment, sharpness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::voxel::GridSpec;

    #[test]
    fn depth_weight_values() {
        assert_eq!(depth_weight(0, 10, 3.7).unwrap(), 1.0);
        assert_eq!(depth_weight(5, 10, 1.0).unwrap(), 2.0 / 3.0);
        assert_eq!(depth_weight(9, 10, 0.0).unwrap(), 1.0);
        assert!(depth_weight(10, 10, 1.0).is_err());
    }

    #[test]
    fn intensity_hand_values() {
        let spec = GridSpec::new([[0.0, 1.0]; 3], [1, 1, 2], 1).unwrap();
        let mut tape = Tape::<f64>::new();
        let g = GridVar { spec, var: tape.constant(Tensor::from_f64(&[1, 1, 1, 2], &[0.0, 3.0]).unwrap()) };
        let i = intensity(&mut tape, g, IntensityOrder::NormThenSigmoid).unwrap();
        assert_eq!(tape.shape(i), &[1, 1, 2]);
        assert_eq!(tape.value(i).data()[0], 0.5);
        assert!((tape.value(i).data()[1] - 1.0 / (1.0 + (-3f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn sharpness_hand_instance() {
        // diffs: a = [1, 2], b = [0, -1] → mean |·| = (1 + 3)/2
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::from_f64(&[1, 1, 3], &[0.0, 1.0, 3.0]).unwrap());
        let b = tape.constant(Tensor::from_f64(&[1, 1, 3], &[5.0, 5.0, 4.0]).unwrap());
        let l = sharpness_loss(&mut tape, a, b, 2).unwrap();
        assert_eq!(tape.value(l).item(), 2.0);
        let shifted = tape.add_scalar(a, 7.0);
        let z = sharpness_loss(&mut tape, a, shifted, 2).unwrap();
        assert_eq!(tape.value(z).item(), 0.0);
    }

    #[test]
    fn identical_grids_have_zero_loss() {
        let spec = GridSpec::new([[0.0, 1.0]; 3], [2, 2, 4], 2).unwrap();
        let mut tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..spec.feature_shape().iter().product()).map(|i| (i as f64 * 0.37).sin()).collect();
        let v = tape.constant(Tensor::new(&spec.feature_shape(), data).unwrap());
        let g = GridVar { spec, var: v };
        let terms = daga_loss(&mut tape, g, g, &DagaConfig::default()).unwrap();
        assert_eq!(tape.value(terms.total).item(), 0.0);
    }

    #[test]
    fn invalid_configs() {
        assert!(DagaConfig { beta: -1.0, ..Default::default() }.validate().is_err());
        assert!(DagaConfig { depth_slices: Some(0), ..Default::default() }.validate().is_err());
        assert!(DagaConfig { lambda_sharp: f64::NAN, ..Default::default() }.validate().is_err());
    }
}
