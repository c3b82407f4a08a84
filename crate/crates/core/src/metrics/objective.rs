use serde::{Deserialize, Serialize};

use crate::daga::{daga_loss, DagaConfig};
use crate::error::{shape_err, Result};
use crate::scalar::Real;
use crate::tensor::{LovaszClasses, Tape, Var};
use crate::voxel::GridVar;

use super::labels::OccupancyLabels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub lambda_daga: f64,
    pub lovasz_classes: LovaszClasses,
    pub daga: DagaConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { lambda_daga: 0.2, lovasz_classes: LovaszClasses::PresentOrPredicted, daga: DagaConfig::default() }
    }
}

pub struct LossTerms {
    pub total: Var,
    pub ce: Var,
    pub lovasz: Var,
    /// Unweighted alignment loss, absent when no branch pair was given.
    pub daga: Option<Var>,
}

/// Scalar values of every term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub lovasz: f64,
    pub daga: f64,
}

impl LossTerms {
    pub fn values<T: Real>(&self, tape: &Tape<T>) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total).item().as_f64(),
            ce: tape.value(self.ce).item().as_f64(),
            lovasz: tape.value(self.lovasz).item().as_f64(),
            daga: self.daga.map(|d| tape.value(d).item().as_f64()).unwrap_or(0.0),
        }
    }
}

/// `CE + Lovász(softmax) + λ_daga·DAGA` over `[classes+1, X, Y, Z]` logits,
/// whose last channel is the empty class. `branches` carries the camera and
/// LiDAR volumes for the alignment term; `None` drops it.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    gt: &OccupancyLabels,
    branches: Option<(GridVar, GridVar)>,
    cfg: &ObjectiveConfig,
) -> Result<LossTerms> {
    let shape = tape.shape(logits).to_vec();
    let k = gt.classes + 1;
    if shape.len() != 4 || shape[0] != k || shape[1..] != gt.dims {
        return Err(shape_err(format!("logits {shape:?} do not match labels [{k}, {:?}]", gt.dims)));
    }
    let n = gt.len();
    let flat = tape.reshape(logits, &[k, n])?;
    let rows = tape.transpose(flat)?;
    let ignore = k;
    let targets = gt.targets(ignore);
    let ce = tape.cross_entropy(rows, &targets, Some(ignore))?;
    let probs = tape.softmax(rows, 1)?;
    let lovasz = tape.lovasz_softmax(probs, &targets, Some(ignore), cfg.lovasz_classes)?;
    let mut total = tape.add(ce, lovasz)?;
    let mut daga = None;
    if let Some((cam, pts)) = branches {
        let terms = daga_loss(tape, cam, pts, &cfg.daga)?;
        if cfg.lambda_daga != 0.0 {
            let weighted = tape.scale(terms.total, T::lit(cfg.lambda_daga));
            total = tape.add(total, weighted)?;
        }
        daga = Some(terms.total);
    }
    Ok(LossTerms { total, ce, lovasz, daga })
}
