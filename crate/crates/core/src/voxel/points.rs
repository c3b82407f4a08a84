use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::{GridSpec, VoxelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub position: [f64; 3],
    pub features: Vec<f64>,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let cloud = Self { points };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.feature_dim();
        for (i, p) in self.points.iter().enumerate() {
            if p.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidValue(format!("point {i} has a non-finite coordinate")));
            }
            if Some(p.features.len()) != dim {
                return Err(shape_err(format!("point {i} has {} features, expected {dim:?}", p.features.len())));
            }
        }
        Ok(())
    }

    /// Feature dimension of the first point, `None` for an empty cloud.
    pub fn feature_dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.features.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn canonical_order(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.features
        .iter()
        .zip(&b.features)
        .map(|(x, y)| x.total_cmp(y))
        .chain(a.position.iter().zip(&b.position).map(|(x, y)| x.total_cmp(y)))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Mean point feature per voxel; empty voxels stay zero.
///
/// Points inside a voxel are summed in a canonical order, so the result is
/// bit-identical under any permutation of the input.
pub fn voxelize<T: Real>(cloud: &PointCloud, spec: &GridSpec) -> Result<VoxelGrid<T>> {
    spec.validate()?;
    cloud.validate()?;
    if let Some(dim) = cloud.feature_dim() {
        if dim != spec.channels {
            return Err(shape_err(format!("cloud has {dim} features, grid expects {}", spec.channels)));
        }
    }
    let n = spec.voxels();
    let mut buckets: Vec<Vec<&Point>> = vec![Vec::new(); n];
    for p in &cloud.points {
        if let Some(idx) = spec.voxel_index(p.position) {
            buckets[spec.flat_index(idx)].push(p);
        }
    }
    let mut data = vec![0.0f64; spec.channels * n];
    for (v, bucket) in buckets.iter_mut().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        bucket.sort_by(|a, b| canonical_order(a, b));
        let count = bucket.len() as f64;
        for c in 0..spec.channels {
            let s: f64 = bucket.iter().map(|p| p.features[c]).sum();
            data[c * n + v] = s / count;
        }
    }
    VoxelGrid::new(*spec, Tensor::from_f64(&spec.feature_shape(), &data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new([[0.0, 4.0], [0.0, 4.0], [0.0, 2.0]], [4, 4, 2], 2).unwrap()
    }

    fn pt(p: [f64; 3], f: [f64; 2]) -> Point {
        Point { position: p, features: f.to_vec(), label: None }
    }

    #[test]
    fn empty_cloud_gives_zero_grid() {
        let g = voxelize::<f64>(&PointCloud::default(), &spec()).unwrap();
        assert!(g.features.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_fills_one_voxel() {
        let cloud = PointCloud::new(vec![pt([1.5, 2.5, 0.5], [3.0, -1.0])]).unwrap();
        let g = voxelize::<f64>(&cloud, &spec()).unwrap();
        assert_eq!(g.voxel([1, 2, 0]), vec![3.0, -1.0]);
        let nonzero = g.features.data().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn two_points_average() {
        let cloud = PointCloud::new(vec![pt([0.2, 0.2, 0.2], [1.0, 4.0]), pt([0.7, 0.9, 0.1], [2.0, 8.0])]).unwrap();
        let g = voxelize::<f64>(&cloud, &spec()).unwrap();
        assert_eq!(g.voxel([0, 0, 0]), vec![1.5, 6.0]);
    }

    #[test]
    fn feature_dim_mismatch() {
        let cloud = PointCloud::new(vec![Point { position: [0.5; 3], features: vec![1.0], label: None }]).unwrap();
        assert!(matches!(voxelize::<f64>(&cloud, &spec()), Err(Error::Shape(_))));
    }

    #[test]
    fn ragged_cloud_is_rejected() {
        let r = PointCloud::new(vec![pt([0.0; 3], [1.0, 2.0]), Point { position: [0.0; 3], features: vec![1.0], label: None }]);
        assert!(r.is_err());
    }
}
