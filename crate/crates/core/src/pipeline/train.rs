use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::WeatherCondition;
use crate::metrics::{total_loss, ConfusionMatrix, LossBreakdown, MetricsSummary, OccupancyLabels};
use crate::prior::TextEncoder;
use crate::scalar::Real;
use crate::scenes::class_names;
use crate::tensor::optim::{cosine_lr, AdamState};
use crate::tensor::{Tape, Tensor};

use super::config::ExperimentConfig;
use super::data::{encode_tokens, instance_prompt, make_encoder, make_split, prepare, weather_embedding, Scene, Split};
use super::model::{num_classes, Model, SceneInputs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub total: f64,
    pub ce: f64,
    pub lovasz: f64,
    pub daga: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub condition: WeatherCondition,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionWeights {
    pub condition: WeatherCondition,
    pub w_cam: f64,
    pub w_pts: f64,
}

/// Everything a training run produces besides the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub trainable_parameters: usize,
    pub losses: Vec<StepLoss>,
    /// Mean training-set loss before the first and after the last update.
    pub initial_loss: LossBreakdown,
    pub final_loss: LossBreakdown,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsSummary,
    pub per_condition: Vec<ConditionMetrics>,
    /// Learned camera/LiDAR weights, empty without the weather gate.
    pub fusion_weights: Vec<ConditionWeights>,
    /// Kept out of `report.json` so reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn condition(&self, c: WeatherCondition) -> Option<&ConditionMetrics> {
        self.per_condition.iter().find(|m| m.condition == c)
    }

    pub fn weights(&self, c: WeatherCondition) -> Option<ConditionWeights> {
        self.fusion_weights.iter().copied().find(|w| w.condition == c)
    }

    /// Confusion pooled over the given conditions.
    pub fn pooled(&self, conditions: &[WeatherCondition]) -> Result<ConfusionMatrix> {
        let mut out = ConfusionMatrix::new(num_classes());
        for m in self.per_condition.iter().filter(|m| conditions.contains(&m.condition)) {
            out.merge(&m.confusion)?;
        }
        Ok(out)
    }

    pub fn losses_csv(&self) -> String {
        let mut s = String::from("step,total,ce,lovasz,daga,lr\n");
        for l in &self.losses {
            s.push_str(&format!("{},{},{},{},{},{}\n", l.step, l.total, l.ce, l.lovasz, l.daga, l.lr));
        }
        s
    }

    /// Writes `report.json`, `metrics.csv` and `losses.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("metrics.csv"), self.confusion.to_csv(&class_names()))?;
        std::fs::write(dir.join("losses.csv"), self.losses_csv())?;
        Ok(())
    }
}

/// Training scene with the two prompt variants it alternates between.
struct TrainItem<T> {
    generic: SceneInputs<T>,
    /// Recursive prompt naming the ground-truth classes.
    forced: SceneInputs<T>,
    labels: OccupancyLabels,
}

fn prepare_train<T: Real>(cfg: &ExperimentConfig, encoder: &dyn TextEncoder, scene: &Scene) -> Result<TrainItem<T>> {
    let generic = prepare(scene, encoder, &instance_prompt(cfg, &BTreeSet::new(), 0)?)?;
    let present = scene.obs.labels.present_classes();
    let forced = SceneInputs { tokens: encode_tokens(encoder, &instance_prompt(cfg, &present, 1)?)?, ..generic.clone() };
    Ok(TrainItem { generic, forced, labels: scene.obs.labels.clone() })
}

fn loss_step<T: Real>(
    model: &Model<T>,
    cfg: &ExperimentConfig,
    inputs: &SceneInputs<T>,
    labels: &OccupancyLabels,
    with_grads: bool,
) -> Result<(LossBreakdown, Option<Vec<Option<Tensor<T>>>>)> {
    let mut tape = Tape::new();
    let bound = model.store.bind(&mut tape);
    let out = model.forward(&mut tape, &bound, inputs)?;
    let branches = model.toggles.daga.then_some((out.v_cam, out.v_pts));
    let terms = total_loss(&mut tape, out.logits.var, labels, branches, &cfg.objective)?;
    let b = terms.values(&tape);
    if ![b.total, b.ce, b.lovasz, b.daga].iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence(format!("non-finite loss {b:?}")));
    }
    if !with_grads {
        return Ok((b, None));
    }
    tape.backward(terms.total)?;
    Ok((b, Some(model.store.grads(&tape, &bound))))
}

fn mean_loss<T: Real>(model: &Model<T>, cfg: &ExperimentConfig, items: &[TrainItem<T>]) -> Result<LossBreakdown> {
    let mut acc = LossBreakdown::default();
    for item in items {
        let (b, _) = loss_step(model, cfg, &item.generic, &item.labels, false)?;
        acc.total += b.total;
        acc.ce += b.ce;
        acc.lovasz += b.lovasz;
        acc.daga += b.daga;
    }
    let n = items.len() as f64;
    Ok(LossBreakdown { total: acc.total / n, ce: acc.ce / n, lovasz: acc.lovasz / n, daga: acc.daga / n })
}

/// Two-frame recursion on a static scene: the generic prompt first, then
/// the prompt built from the first prediction.
pub fn predict_scene<T: Real>(
    model: &Model<T>,
    cfg: &ExperimentConfig,
    encoder: &dyn TextEncoder,
    scene: &Scene,
) -> Result<OccupancyLabels> {
    let inputs = prepare::<T>(scene, encoder, &instance_prompt(cfg, &BTreeSet::new(), 0)?)?;
    let (logits, _) = model.predict(&inputs)?;
    let first = OccupancyLabels::from_logits(&logits, num_classes())?;
    if !model.toggles.instvlm {
        return Ok(first);
    }
    let prompt = instance_prompt(cfg, &first.present_classes(), 1)?;
    let inputs = SceneInputs { tokens: encode_tokens(encoder, &prompt)?, ..inputs };
    let (logits, _) = model.predict(&inputs)?;
    OccupancyLabels::from_logits(&logits, num_classes())
}

pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub report: RunReport,
}

/// Cosine-annealed AdamW over the training scenes, one scene per step,
/// followed by evaluation on held-out scenes.
pub fn train<T: Real>(cfg: &ExperimentConfig) -> Result<TrainOutcome<T>> {
    let started = Instant::now();
    cfg.validate()?;
    let encoder = make_encoder(cfg)?;
    let train_scenes = make_split(cfg, Split::Train)?;
    let items = train_scenes.iter().map(|s| prepare_train(cfg, encoder.as_ref(), s)).collect::<Result<Vec<TrainItem<T>>>>()?;

    let mut model = Model::<T>::new(cfg)?;
    model.fit_input_scales(items.iter().map(|i| &i.generic))?;
    let mut adam = AdamState::for_store(cfg.train.adam, &model.store);
    let initial_loss = mean_loss(&model, cfg, &items)?;
    let steps = cfg.train.steps;
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let lr = cosine_lr(cfg.train.adam.lr, step, steps);
        let item = &items[step % items.len()];
        let inputs = if step % 2 == 0 { &item.generic } else { &item.forced };
        let (b, grads) = loss_step(&model, cfg, inputs, &item.labels, true)
            .map_err(|e| annotate(e, step))?;
        let grads = grads.expect("gradients requested");
        adam.step_store(&mut model.store, &grads, lr).map_err(|e| annotate(e, step))?;
        losses.push(StepLoss { step, total: b.total, ce: b.ce, lovasz: b.lovasz, daga: b.daga, lr });
    }
    let final_loss = mean_loss(&model, cfg, &items)?;

    let eval_scenes = make_split(cfg, Split::Eval)?;
    let mut per_condition: Vec<ConditionMetrics> = Vec::new();
    for &c in &cfg.weather_mix {
        let mut cm = ConfusionMatrix::new(num_classes());
        for scene in eval_scenes.iter().filter(|s| s.obs.weather.condition == c) {
            let pred = predict_scene(&model, cfg, encoder.as_ref(), scene)?;
            cm.update(&pred.labels, &scene.obs.labels)?;
        }
        if let Some(existing) = per_condition.iter_mut().find(|m| m.condition == c) {
            existing.confusion.merge(&cm)?;
            existing.metrics = existing.confusion.summary();
        } else {
            per_condition.push(ConditionMetrics { condition: c, metrics: cm.summary(), confusion: cm });
        }
    }
    let mut confusion = ConfusionMatrix::new(num_classes());
    for m in &per_condition {
        confusion.merge(&m.confusion)?;
    }
    let mut fusion_weights = Vec::new();
    for m in &per_condition {
        let emb = weather_embedding::<T>(cfg, encoder.as_ref(), m.condition)?;
        if let Some([w_cam, w_pts]) = model.fusion_weights(&emb)? {
            fusion_weights.push(ConditionWeights { condition: m.condition, w_cam, w_pts });
        }
    }
    let report = RunReport {
        config: cfg.clone(),
        trainable_parameters: model.store.trainable_count(),
        losses,
        initial_loss,
        final_loss,
        metrics: confusion.summary(),
        confusion,
        per_condition,
        fusion_weights,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { model, report })
}

/// Inputs are checked finite up front, so a non-finite value met during an
/// update means the parameters have diverged.
fn annotate(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence(msg) | Error::InvalidValue(msg) => Error::Divergence(format!("step {step}: {msg}")),
        other => other,
    }
}
