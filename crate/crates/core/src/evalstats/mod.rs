//! Distance, overlap, clinical and statistical measures.

mod distance;
mod report;
mod stats;
mod voxel;

pub use distance::{
    closest_point_on_triangle, directed_hausdorff, hausdorff, hausdorff_points, mean_absolute_distance,
    surface_samples, symmetric_mean_distance, TriangleBvh,
};
pub use report::{evaluate, frame_metrics, Clinical, FrameMetrics, MetricsReport, StatsSummary};
pub use stats::{
    average_ranks, bland_altman, chi_squared_sf, correlation, dice_reliability_curve, ejection_fraction, gamma_q,
    kruskal_wallis, BlandAltman, KruskalWallisResult,
};
pub use voxel::{dice, mesh_dice, voxelize, DiceScore, VoxelMask};
