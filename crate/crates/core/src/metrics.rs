//! Pose accuracy metrics.

use alloc::vec::Vec;

use crate::cloud::Vec3;
use crate::model::ObjectModel;
use crate::pose::RigidPose;
use crate::spatial::NnIndex;

/// Mean distance between corresponding model points under the two poses.
pub fn add_metric(est: &RigidPose, gt: &RigidPose, model: &ObjectModel) -> f64 {
    add_metric_points(est, gt, model.cloud.positions())
}

pub fn add_metric_points(est: &RigidPose, gt: &RigidPose, points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().map(|p| (est.apply(p) - gt.apply(p)).norm()).sum::<f64>() / points.len() as f64
}

/// Mean distance from each estimated model point to the closest
/// ground-truth model point; insensitive to object symmetries.
pub fn adds_metric(est: &RigidPose, gt: &RigidPose, model: &ObjectModel) -> f64 {
    adds_metric_points(est, gt, model.cloud.positions())
}

pub fn adds_metric_points(est: &RigidPose, gt: &RigidPose, points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let targets: Vec<Vec3> = points.iter().map(|p| gt.apply(p)).collect();
    let index = NnIndex::new(&targets);
    points.iter().map(|p| index.nearest(&est.apply(p)).map(|(_, d)| d).unwrap_or(0.0)).sum::<f64>()
        / points.len() as f64
}
