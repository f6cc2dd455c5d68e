//! Evaluation metrics.
//!
//! Every threshold test is strict (`<` for errors, `>` for IoU).

mod dense;
mod iou;
mod pose;

pub use dense::{
    depth_metrics, normal_metrics, DepthAccumulator, DepthMetricsReport, NormalAccumulator, NormalMetricsReport,
};
pub use iou::{intersection_volume, oriented_iou};
pub use pose::{
    default_symmetry_map, pose_metrics, rotation_error, score_instance, symmetric_iou, CategoryScores, InstanceOutcome,
    MetricOptions, PoseInstance, PoseMetricsReport, PoseScores, SymmetryMap,
};
