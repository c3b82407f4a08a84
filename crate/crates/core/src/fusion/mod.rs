//! Weather-conditioned sensor weighting and the voxel fusion strategies.

mod fuse;
mod gating;
mod weather;

pub use fuse::{fuse_addition, fuse_concat, fuse_conv3d, fuse_weathfusion, FusionStrategy};
pub use gating::{fusion_weights, FusionWeights, GateOutput, GatingHead, GATE_HIDDEN};
pub use weather::{weather_prompt, WeatherCondition, WeatherContext, WeatherSource};
