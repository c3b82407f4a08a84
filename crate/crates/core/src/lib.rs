//! Voxel occupancy from camera and LiDAR with three add-on mechanisms: a
//! gated text-prior attention per branch, weather-conditioned fusion
//! weights, and a depth-aware alignment loss between the branches.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod daga;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod pipeline;
pub mod prior;
pub mod scalar;
pub mod scenes;
pub mod tensor;
pub mod voxel;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Grid64 = voxel::VoxelGrid<f64>;
pub type Grid32 = voxel::VoxelGrid<f32>;
pub type Model64 = pipeline::Model<f64>;
pub type Model32 = pipeline::Model<f32>;
