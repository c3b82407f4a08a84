use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::OccupancyLabels;
use crate::prior::TextEncoder;
use crate::scalar::Real;

use super::config::ExperimentConfig;
use super::data::{instance_prompt, prepare, Scene};
use super::model::{num_classes, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub t: usize,
    /// Instance prompt fed to the text prior for this frame.
    pub prompt: String,
    pub prompt_classes: Vec<usize>,
    pub predicted_classes: BTreeSet<usize>,
    pub labels: OccupancyLabels,
}

/// Runs a frame sequence, deriving each frame's instance prompt from the
/// classes predicted on the previous one.
pub fn infer_sequence<T: Real>(
    frames: &[Scene],
    cfg: &ExperimentConfig,
    model: &Model<T>,
    encoder: &dyn TextEncoder,
) -> Result<Vec<FramePrediction>> {
    if frames.is_empty() {
        return Err(Error::Config("a sequence needs at least one frame".into()));
    }
    let mut previous = BTreeSet::new();
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let prompt = instance_prompt(cfg, &previous, t)?;
        let inputs = prepare::<T>(frame, encoder, &prompt)?;
        let (logits, _) = model.predict(&inputs)?;
        let labels = OccupancyLabels::from_logits(&logits, num_classes())?;
        let predicted = labels.present_classes();
        let prompt_classes = prompt
            .class_names
            .iter()
            .filter_map(|n| crate::scenes::CLASS_NAMES.iter().position(|c| c == n))
            .collect();
        out.push(FramePrediction { t, prompt: prompt.text(), prompt_classes, predicted_classes: predicted.clone(), labels });
        previous = predicted;
    }
    Ok(out)
}
