//! Seeded experiment runner: scene generation, the dual-branch network,
//! training, evaluation and the sweeps built on them.

mod config;
mod data;
mod infer;
mod model;
mod sweeps;
mod train;

pub use config::{ExperimentConfig, ModelConfig, Toggles, TrainConfig};
pub use data::{encode_tokens, instance_prompt, make_encoder, make_scene, make_split, prepare, scene_seed, weather_embedding, Scene, Split};
pub use infer::{infer_sequence, FramePrediction};
pub use model::{num_classes, ForwardOutput, Layers, Model, SceneInputs};
pub use sweeps::{
    rows_csv, run_ablation, run_adverse, run_all, run_fusion_comparison, AdverseRow, AdverseTable, SweepRow, CORRUPTED,
    THREADS_ENV,
};
pub use train::{predict_scene, train, ConditionMetrics, ConditionWeights, RunReport, StepLoss, TrainOutcome};
