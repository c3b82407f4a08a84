use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

use super::labels::{check_range, OccupancyLabels, VoxelLabel};

/// Per-class TP/FP/FN counts plus binary occupancy counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
    pub occ_tp: u64,
    pub occ_fp: u64,
    pub occ_fn: u64,
    /// Non-ignored voxels evaluated so far.
    pub evaluated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub iou: Option<f64>,
}

/// JSON summary of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub iou: Option<f64>,
    pub miou: Option<f64>,
    /// Classes left out of the mean because they were never seen or
    /// predicted.
    pub undefined_classes: Vec<usize>,
    pub per_class: Vec<ClassIou>,
}

fn ratio(tp: u64, fp: u64, fn_: u64) -> Option<f64> {
    let d = tp + fp + fn_;
    (d > 0).then(|| tp as f64 / d as f64)
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
            occ_tp: 0,
            occ_fp: 0,
            occ_fn: 0,
            evaluated: 0,
        }
    }

    /// Accumulates one prediction. Ignored ground-truth voxels are skipped.
    pub fn update(&mut self, pred: &[VoxelLabel], gt: &OccupancyLabels) -> Result<()> {
        if pred.len() != gt.labels.len() {
            return Err(shape_err(format!("{} predictions for {} labels", pred.len(), gt.labels.len())));
        }
        if gt.classes != self.classes {
            return Err(shape_err(format!("labels have {} classes, matrix {}", gt.classes, self.classes)));
        }
        check_range(pred, self.classes)?;
        check_range(&gt.labels, self.classes)?;
        if pred.contains(&VoxelLabel::Ignore) {
            return Err(Error::InvalidValue("predictions cannot be ignore".into()));
        }
        for (&p, &g) in pred.iter().zip(&gt.labels) {
            if g == VoxelLabel::Ignore {
                continue;
            }
            self.evaluated += 1;
            match (p, g) {
                (VoxelLabel::Class(p), VoxelLabel::Class(g)) if p == g => self.tp[g as usize] += 1,
                (VoxelLabel::Class(p), VoxelLabel::Class(g)) => {
                    self.fp[p as usize] += 1;
                    self.fn_[g as usize] += 1;
                }
                (VoxelLabel::Empty, VoxelLabel::Class(g)) => self.fn_[g as usize] += 1,
                (VoxelLabel::Class(p), VoxelLabel::Empty) => self.fp[p as usize] += 1,
                _ => {}
            }
            match (p.is_occupied(), g.is_occupied()) {
                (true, true) => self.occ_tp += 1,
                (true, false) => self.occ_fp += 1,
                (false, true) => self.occ_fn += 1,
                (false, false) => {}
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.classes != self.classes {
            return Err(shape_err(format!("cannot merge {} classes into {}", other.classes, self.classes)));
        }
        for c in 0..self.classes {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
        self.occ_tp += other.occ_tp;
        self.occ_fp += other.occ_fp;
        self.occ_fn += other.occ_fn;
        self.evaluated += other.evaluated;
        Ok(())
    }

    /// `TP/(TP+FP+FN)`, `None` when the denominator is zero.
    pub fn iou(&self, class: usize) -> Option<f64> {
        (class < self.classes).then(|| ratio(self.tp[class], self.fp[class], self.fn_[class])).flatten()
    }

    /// IoU of occupied versus empty.
    pub fn geometric_iou(&self) -> Option<f64> {
        ratio(self.occ_tp, self.occ_fp, self.occ_fn)
    }

    /// Mean IoU over classes with a defined IoU.
    pub fn miou(&self) -> Result<f64> {
        let defined: Vec<f64> = (0..self.classes).filter_map(|c| self.iou(c)).collect();
        if defined.is_empty() {
            return Err(Error::DegenerateEvaluation);
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }

    pub fn per_class(&self) -> Vec<ClassIou> {
        (0..self.classes)
            .map(|c| ClassIou { class: c, tp: self.tp[c], fp: self.fp[c], fn_: self.fn_[c], iou: self.iou(c) })
            .collect()
    }

    pub fn summary(&self) -> MetricsSummary {
        MetricsSummary {
            iou: self.geometric_iou(),
            miou: self.miou().ok(),
            undefined_classes: (0..self.classes).filter(|&c| self.iou(c).is_none()).collect(),
            per_class: self.per_class(),
        }
    }

    /// `class,tp,fp,fn,iou` rows; undefined IoUs are left blank.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("class,tp,fp,fn,iou\n");
        for row in self.per_class() {
            let name = names.get(row.class).cloned().unwrap_or_else(|| row.class.to_string());
            let iou = row.iou.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(out, "{name},{},{},{},{iou}", row.tp, row.fp, row.fn_).expect("write to string");
        }
        out
    }
}
