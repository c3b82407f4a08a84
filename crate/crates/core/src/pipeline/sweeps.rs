use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionStrategy, WeatherCondition};
use crate::metrics::ConfusionMatrix;

use super::config::{ExperimentConfig, Toggles};
use super::train::{train, RunReport};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "VOXFUSE_THREADS";

/// One sweep cell: what was varied and how it scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub iou: Option<f64>,
    pub miou: Option<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub wall_clock_s: f64,
}

impl SweepRow {
    fn from_report(label: String, r: &RunReport) -> Self {
        Self {
            label,
            iou: r.metrics.iou,
            miou: r.metrics.miou,
            initial_loss: r.initial_loss.total,
            final_loss: r.final_loss.total,
            wall_clock_s: r.wall_clock_s,
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn rows_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("label,iou,miou,initial_loss,final_loss,wall_clock_s\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.3}\n",
            r.label,
            fmt_opt(r.iou),
            fmt_opt(r.miou),
            r.initial_loss,
            r.final_loss,
            r.wall_clock_s
        ));
    }
    s
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        b = b.num_threads(n.max(1));
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Trains every config on the sweep pool; results keep input order.
pub fn run_all(configs: &[ExperimentConfig]) -> Result<Vec<RunReport>> {
    pool()?.install(|| configs.par_iter().map(|c| train::<f64>(c).map(|o| o.report)).collect())
}

/// All eight on/off combinations of the three modules.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let combos = Toggles::all_combinations();
    let configs: Vec<_> = combos.iter().map(|&t| ExperimentConfig { toggles: t, ..cfg.clone() }).collect();
    let reports = run_all(&configs)?;
    Ok(combos.iter().zip(&reports).map(|(t, r)| SweepRow::from_report(t.label(), r)).collect())
}

/// The four fusion strategies with the other modules as configured.
pub fn run_fusion_comparison(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let configs: Vec<_> = FusionStrategy::ALL
        .iter()
        .map(|&f| ExperimentConfig { fusion: f, toggles: Toggles { weathfusion: true, ..cfg.toggles }, ..cfg.clone() })
        .collect();
    let reports = run_all(&configs)?;
    Ok(FusionStrategy::ALL.iter().zip(&reports).map(|(f, r)| SweepRow::from_report(f.as_str().into(), r)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdverseRow {
    pub condition: WeatherCondition,
    pub weathfusion: bool,
    pub iou: Option<f64>,
    pub miou: Option<f64>,
    pub w_cam: Option<f64>,
    pub w_pts: Option<f64>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdverseTable {
    pub rows: Vec<AdverseRow>,
    /// mIoU over all corrupted-condition scenes pooled, with and without
    /// the weather gate.
    pub corrupted_miou_weathfusion: Option<f64>,
    pub corrupted_miou_concat: Option<f64>,
    #[serde(skip)]
    pub reports: Vec<RunReport>,
}

impl AdverseTable {
    pub fn csv(&self) -> String {
        let mut s = String::from("condition,weathfusion,iou,miou,w_cam,w_pts,wall_clock_s\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.3}\n",
                r.condition.as_str(),
                r.weathfusion,
                fmt_opt(r.iou),
                fmt_opt(r.miou),
                fmt_opt(r.w_cam),
                fmt_opt(r.w_pts),
                r.wall_clock_s
            ));
        }
        s
    }
}

pub const CORRUPTED: [WeatherCondition; 2] = [WeatherCondition::Rain, WeatherCondition::Night];

fn pooled_miou(r: &RunReport) -> Result<Option<f64>> {
    let cm: ConfusionMatrix = r.pooled(&CORRUPTED)?;
    Ok(cm.miou().ok())
}

/// Weather-gated fusion against static concatenation on the same scenes,
/// scored per condition.
pub fn run_adverse(cfg: &ExperimentConfig) -> Result<AdverseTable> {
    let variants = [true, false];
    let configs: Vec<_> = variants
        .iter()
        .map(|&on| ExperimentConfig {
            fusion: FusionStrategy::Weathfusion,
            toggles: Toggles { weathfusion: on, ..cfg.toggles },
            ..cfg.clone()
        })
        .collect();
    let reports = run_all(&configs)?;
    let mut rows = Vec::new();
    for (&on, r) in variants.iter().zip(&reports) {
        for m in &r.per_condition {
            let w = r.weights(m.condition);
            rows.push(AdverseRow {
                condition: m.condition,
                weathfusion: on,
                iou: m.metrics.iou,
                miou: m.metrics.miou,
                w_cam: w.map(|w| w.w_cam),
                w_pts: w.map(|w| w.w_pts),
                wall_clock_s: r.wall_clock_s,
            });
        }
    }
    Ok(AdverseTable {
        rows,
        corrupted_miou_weathfusion: pooled_miou(&reports[0])?,
        corrupted_miou_concat: pooled_miou(&reports[1])?,
        reports,
    })
}
