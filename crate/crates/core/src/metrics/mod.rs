//! Occupancy labels, confusion bookkeeping, IoU metrics and the joint
//! training objective.

mod confusion;
mod labels;
mod objective;

pub use confusion::{ClassIou, ConfusionMatrix, MetricsSummary};
pub use labels::{OccupancyLabels, VoxelLabel};
pub use objective::{total_loss, LossBreakdown, LossTerms, ObjectiveConfig};
