use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;
use crate::voxel::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelLabel {
    Class(u16),
    Empty,
    Ignore,
}

impl VoxelLabel {
    pub fn is_occupied(self) -> bool {
        matches!(self, VoxelLabel::Class(_))
    }

    /// Logit channel for training: the class id, or `classes` for empty.
    /// `None` for ignored voxels.
    pub fn target(self, classes: usize) -> Option<usize> {
        match self {
            VoxelLabel::Class(c) => Some(c as usize),
            VoxelLabel::Empty => Some(classes),
            VoxelLabel::Ignore => None,
        }
    }
}

/// Ground-truth label per voxel, flattened in grid order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyLabels {
    pub dims: [usize; 3],
    pub classes: usize,
    pub labels: Vec<VoxelLabel>,
}

impl OccupancyLabels {
    pub fn new(dims: [usize; 3], classes: usize, labels: Vec<VoxelLabel>) -> Result<Self> {
        let out = Self { dims, classes, labels };
        out.validate()?;
        Ok(out)
    }

    pub fn empty(spec: &GridSpec, classes: usize) -> Self {
        Self { dims: spec.dims(), classes, labels: vec![VoxelLabel::Empty; spec.voxels()] }
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.dims.iter().product();
        if self.labels.len() != n {
            return Err(shape_err(format!("{} labels for a {:?} grid", self.labels.len(), self.dims)));
        }
        if self.classes == 0 || self.classes > u16::MAX as usize {
            return Err(Error::Config(format!("class count {} out of range", self.classes)));
        }
        check_range(&self.labels, self.classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn matches(&self, spec: &GridSpec) -> bool {
        self.dims == spec.dims()
    }

    /// Training targets, with `ignore` for ignored voxels.
    pub fn targets(&self, ignore: usize) -> Vec<usize> {
        self.labels.iter().map(|l| l.target(self.classes).unwrap_or(ignore)).collect()
    }

    /// Sorted set of classes present.
    pub fn present_classes(&self) -> std::collections::BTreeSet<usize> {
        self.labels
            .iter()
            .filter_map(|l| match l {
                VoxelLabel::Class(c) => Some(*c as usize),
                _ => None,
            })
            .collect()
    }

    /// Argmax decoding of `[classes+1, X, Y, Z]` logits; the last channel is
    /// the empty class. Ties go to the lowest channel.
    pub fn from_logits<T: Real>(logits: &Tensor<T>, classes: usize) -> Result<Self> {
        let shape = logits.shape();
        if shape.len() != 4 || shape[0] != classes + 1 {
            return Err(shape_err(format!("logits {shape:?} are not [{}×X×Y×Z]", classes + 1)));
        }
        let n = shape[1] * shape[2] * shape[3];
        let d = logits.data();
        let labels = (0..n)
            .map(|v| {
                let mut best = 0;
                for k in 1..=classes {
                    if d[k * n + v] > d[best * n + v] {
                        best = k;
                    }
                }
                if best == classes {
                    VoxelLabel::Empty
                } else {
                    VoxelLabel::Class(best as u16)
                }
            })
            .collect();
        Self::new([shape[1], shape[2], shape[3]], classes, labels)
    }
}

pub(crate) fn check_range(labels: &[VoxelLabel], classes: usize) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if let VoxelLabel::Class(c) = l {
            if *c as usize >= classes {
                return Err(Error::OutOfRange(format!("voxel {i} has class {c}, only {classes} classes")));
            }
        }
    }
    Ok(())
}
