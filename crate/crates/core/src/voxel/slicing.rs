use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::scalar::Real;
use crate::tensor::{Tape, Var};

use super::GridVar;

/// Spatial axis along which depth layers are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthAxis {
    X,
    Y,
    #[default]
    Z,
}

impl DepthAxis {
    /// Position among the three spatial axes.
    pub fn spatial_index(self) -> usize {
        match self {
            DepthAxis::X => 0,
            DepthAxis::Y => 1,
            DepthAxis::Z => 2,
        }
    }
}

/// Splits `x` into `count` contiguous layers along `axis`, mean-pooling
/// each group of `extent / count` entries. The axis is removed from every
/// returned slice.
pub fn depth_slices<T: Real>(tape: &mut Tape<T>, x: Var, axis: usize, count: usize) -> Result<Vec<Var>> {
    let shape = tape.shape(x).to_vec();
    let extent = *shape.get(axis).ok_or_else(|| shape_err(format!("axis {axis} out of range for {shape:?}")))?;
    if count == 0 || count > extent {
        return Err(shape_err(format!("cannot take {count} depth slices from extent {extent}")));
    }
    if extent % count != 0 {
        return Err(shape_err(format!("{count} depth slices do not evenly divide extent {extent}")));
    }
    let group = extent / count;
    (0..count)
        .map(|d| {
            let layer = tape.narrow(x, axis, d * group, group)?;
            tape.mean_axis(layer, axis)
        })
        .collect()
}

/// Forward difference along the grid's z axis: `[C×X×Y×Z] → [C×X×Y×(Z−1)]`.
pub fn vertical_gradient<T: Real>(tape: &mut Tape<T>, grid: GridVar) -> Result<Var> {
    if grid.spec.nz < 2 {
        return Err(shape_err(format!("vertical gradient needs nz >= 2, got {}", grid.spec.nz)));
    }
    tape.diff(grid.var, 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::voxel::GridSpec;

    #[test]
    fn full_extent_gives_raw_slices() {
        let mut tape = Tape::<f64>::new();
        let data: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let x = tape.constant(Tensor::new(&[2, 4], data).unwrap());
        let s = depth_slices(&mut tape, x, 1, 4).unwrap();
        assert_eq!(tape.value(s[2]).data(), &[2.0, 6.0]);
    }

    #[test]
    fn single_slice_is_axis_mean() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[2, 4], &[1., 2., 3., 6., 0., 0., 4., 4.]).unwrap());
        let s = depth_slices(&mut tape, x, 1, 1).unwrap();
        assert_eq!(tape.value(s[0]).data(), &[3.0, 2.0]);
    }

    #[test]
    fn pairwise_means() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[1, 4], &[1., 3., 10., 20.]).unwrap());
        let s = depth_slices(&mut tape, x, 1, 2).unwrap();
        assert_eq!(tape.value(s[0]).data(), &[2.0]);
        assert_eq!(tape.value(s[1]).data(), &[15.0]);
    }

    #[test]
    fn too_many_or_uneven_slices() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[2, 4]));
        assert!(depth_slices(&mut tape, x, 1, 5).is_err());
        assert!(depth_slices(&mut tape, x, 1, 3).is_err());
        assert!(depth_slices(&mut tape, x, 1, 0).is_err());
    }

    #[test]
    fn ramp_has_constant_gradient() {
        let spec = GridSpec::new([[0.0, 1.0]; 3], [2, 1, 4], 1).unwrap();
        let mut tape = Tape::<f64>::new();
        let slope = 0.75;
        let data: Vec<f64> = (0..8).map(|i| (i % 4) as f64 * slope + (i / 4) as f64).collect();
        let v = tape.constant(Tensor::new(&spec.feature_shape(), data).unwrap());
        let g = vertical_gradient(&mut tape, GridVar { spec, var: v }).unwrap();
        assert_eq!(tape.shape(g), &[1, 2, 1, 3]);
        assert!(tape.value(g).data().iter().all(|&d| d == slope));

        let flat = tape.constant(Tensor::full(&spec.feature_shape(), 4.0));
        let g = vertical_gradient(&mut tape, GridVar { spec, var: flat }).unwrap();
        assert!(tape.value(g).data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn flat_grid_has_no_vertical_gradient() {
        let spec = GridSpec::new([[0.0, 1.0]; 3], [2, 2, 1], 1).unwrap();
        let mut tape = Tape::<f64>::new();
        let v = tape.constant(Tensor::zeros(&spec.feature_shape()));
        assert!(vertical_gradient(&mut tape, GridVar { spec, var: v }).is_err());
    }
}
