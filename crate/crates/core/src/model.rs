//! Object models and their keypoint representation.
//!
//! A model is reduced to `K` surface keypoints roughly `spacing` apart.
//! Segmentation classes `1..=K` refer to these keypoints; class 0 is
//! background.

use alloc::vec::Vec;
use core::f64::consts::PI;


use crate::cloud::{PointCloud, Vec3};
use crate::error::{invalid, Result};
use crate::pose::RigidPose;
use crate::spatial::NnIndex;
use crate::voxel::voxel_downsample;

/// Default keypoint spacing (mm).
pub const KEYPOINT_SPACING: f64 = 25.0;

/// Rotational symmetry of an object, supplied by the user.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Symmetry {
    #[default]
    None,
    /// `folds`-fold symmetry about the line through `center` along `axis`.
    Cyclic { folds: u32, axis: Vec3, center: Vec3 },
    /// Continuous symmetry about the line through `center` along `axis`.
    Revolution { axis: Vec3, center: Vec3 },
}

impl Symmetry {
    pub fn validate(&self) -> Result<()> {
        let unit = |a: &Vec3| (a.norm() - 1.0).abs() <= 1e-6;
        match self {
            Symmetry::None => Ok(()),
            Symmetry::Cyclic { folds, axis, .. } => {
                if *folds < 2 {
                    return Err(invalid("cyclic symmetry needs at least 2 folds"));
                }
                if !unit(axis) {
                    return Err(invalid("symmetry axis must be unit length"));
                }
                Ok(())
            }
            Symmetry::Revolution { axis, .. } => {
                if unit(axis) {
                    Ok(())
                } else {
                    Err(invalid("symmetry axis must be unit length"))
                }
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Symmetry::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    /// Dense surface cloud with normals, in the model frame.
    pub cloud: PointCloud,
    pub keypoints: Vec<Keypoint>,
    /// Diagonal of the axis-aligned bounding box (mm).
    pub diameter: f64,
    pub symmetry: Symmetry,
}

impl ObjectModel {
    /// Samples keypoints at `spacing` and reduces them under `symmetry` with
    /// the default merge tolerance of half the spacing.
    pub fn build(cloud: PointCloud, spacing: f64, symmetry: Symmetry) -> Result<Self> {
        symmetry.validate()?;
        let keypoints = sample_keypoints(&cloud, spacing)?;
        let keypoints = reduce_symmetric_keypoints(&keypoints, &symmetry, 0.5 * spacing);
        let diameter = model_diameter(&cloud)?;
        if !(diameter > 0.0) {
            return Err(invalid("model has zero extent"));
        }
        Ok(ObjectModel { cloud, keypoints, diameter, symmetry })
    }

    /// Number of keypoints, `K`.
    pub fn keypoint_count(&self) -> usize {
        self.keypoints.len()
    }

    /// Radius of the spherical neighborhoods fed to the network.
    pub fn sphere_radius(&self, factor: f64) -> f64 {
        factor * self.diameter
    }

    pub fn keypoint_positions(&self) -> Vec<Vec3> {
        self.keypoints.iter().map(|k| k.position).collect()
    }

    /// Keypoints moved by `pose`.
    pub fn transformed_keypoints(&self, pose: &RigidPose) -> Vec<Keypoint> {
        self.keypoints
            .iter()
            .map(|k| Keypoint { position: pose.apply(&k.position), normal: pose.rotate(&k.normal) })
            .collect()
    }
}

/// Keypoints at roughly `spacing` apart: voxel centroids snapped to the
/// nearest real surface point, so keypoint normals are genuine surface
/// normals. Snapped points closer than half the spacing to an earlier
/// keypoint are dropped.
pub fn sample_keypoints(model_cloud: &PointCloud, spacing: f64) -> Result<Vec<Keypoint>> {
    if model_cloud.is_empty() {
        return Err(invalid("model cloud is empty"));
    }
    let normals = model_cloud.normals().ok_or_else(|| invalid("model cloud has no normals"))?;
    let centroids = voxel_downsample(&PointCloud::from_positions(model_cloud.positions().to_vec()), spacing)?;
    let index = NnIndex::new(model_cloud.positions());
    let min_sep2 = 0.25 * spacing * spacing;
    let mut out: Vec<Keypoint> = Vec::new();
    let mut used = alloc::collections::BTreeSet::new();
    for c in centroids.positions() {
        let (id, _) = index.nearest(c)?;
        if !used.insert(id) {
            continue;
        }
        let position = model_cloud.positions()[id];
        if out.iter().any(|k| (k.position - position).norm_squared() < min_sep2) {
            continue;
        }
        out.push(Keypoint { position, normal: normals[id] });
    }
    Ok(out)
}

/// Merges keypoints that are indistinguishable under the object's symmetry.
///
/// * cyclic: a keypoint is dropped when one of its non-trivial symmetry
///   images lies within `tol` of an already kept keypoint;
/// * revolution: keypoints are grouped by axial coordinate (within `tol`) and
///   each group becomes one point on the axis, with the axis as its normal.
///
/// The reduction is idempotent.
pub fn reduce_symmetric_keypoints(keypoints: &[Keypoint], symmetry: &Symmetry, tol: f64) -> Vec<Keypoint> {
    match *symmetry {
        Symmetry::None => keypoints.to_vec(),
        Symmetry::Cyclic { folds, axis, center } => {
            let images: Vec<RigidPose> = (1..folds)
                .map(|k| {
                    let turn = RigidPose::from_axis_angle(&axis, 2.0 * PI * k as f64 / folds as f64, Vec3::zeros());
                    RigidPose::from_translation(center)
                        .compose(&turn)
                        .compose(&RigidPose::from_translation(-center))
                })
                .collect();
            let mut kept: Vec<Keypoint> = Vec::new();
            for kp in keypoints {
                let duplicate = images.iter().any(|g| {
                    let image = g.apply(&kp.position);
                    kept.iter().any(|k| (k.position - image).norm() <= tol)
                });
                if !duplicate {
                    kept.push(*kp);
                }
            }
            kept
        }
        Symmetry::Revolution { axis, center } => {
            let mut heights: Vec<f64> = Vec::new();
            for kp in keypoints {
                let h = (kp.position - center).dot(&axis);
                if !heights.iter().any(|&g| (g - h).abs() <= tol) {
                    heights.push(h);
                }
            }
            heights.into_iter().map(|h| Keypoint { position: center + axis * h, normal: axis }).collect()
        }
    }
}

/// Length of the diagonal of the axis-aligned bounding box.
pub fn model_diameter(cloud: &PointCloud) -> Result<f64> {
    let first = *cloud.positions().first().ok_or_else(|| invalid("cloud is empty"))?;
    let (lo, hi) = cloud.positions().iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    Ok((hi - lo).norm())
}

/// Label (`1..=K`) of the nearest keypoint for every position; equal
/// distances resolve to the lower keypoint index.
pub fn nearest_keypoint_labels(positions: &[Vec3], keypoints: &[Vec3]) -> Result<Vec<u16>> {
    if keypoints.is_empty() {
        return Err(invalid("no keypoints"));
    }
    let index = NnIndex::new(keypoints);
    positions.iter().map(|p| index.nearest(p).map(|(id, _)| (id + 1) as u16)).collect()
}
