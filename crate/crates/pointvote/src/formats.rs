//! JSON documents: poses, model sidecars, intrinsics and scene camera data.

use std::path::Path;

use pointvote_core::model::{Keypoint, Symmetry};
use pointvote_core::pose::is_rotation;
use pointvote_core::{Intrinsics, Mat3, RigidPose, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// `{"rotation": [[row], [row], [row]], "translation_mm": [x, y, z]}`.
/// Readers ignore other keys, so detection output doubles as a pose file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub rotation: [[f64; 3]; 3],
    pub translation_mm: [f64; 3],
}

impl From<&RigidPose> for PoseJson {
    fn from(p: &RigidPose) -> Self {
        let r = p.rotation();
        PoseJson {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation_mm: [p.translation().x, p.translation().y, p.translation().z],
        }
    }
}

impl PoseJson {
    /// The pose, with the rotation re-orthonormalized when it is within
    /// 1e-6 of a rotation (text files often carry rounded entries).
    pub fn to_pose(&self) -> std::result::Result<RigidPose, String> {
        let m = Mat3::from_fn(|i, j| self.rotation[i][j]);
        let t = Vec3::from(self.translation_mm);
        if !m.iter().chain(t.iter()).all(|v| v.is_finite()) {
            return Err("pose has non-finite entries".into());
        }
        if !is_rotation(&m, 1e-6) {
            return Err("rotation is not orthonormal with determinant 1".into());
        }
        RigidPose::new(m, t).or_else(|_| RigidPose::from_matrix_projected(&m, t)).map_err(|e| e.to_string())
    }
}

pub fn read_pose(path: &Path) -> Result<RigidPose> {
    let doc: PoseJson = read_json(path)?;
    doc.to_pose().map_err(|m| Error::format(path, m))
}

pub fn write_pose(path: &Path, pose: &RigidPose) -> Result<()> {
    write_json(path, &PoseJson::from(pose))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SymmetryJson {
    #[default]
    None,
    Cyclic { folds: u32, axis: [f64; 3], center: [f64; 3] },
    Revolution { axis: [f64; 3], center: [f64; 3] },
}

impl From<&Symmetry> for SymmetryJson {
    fn from(s: &Symmetry) -> Self {
        let a = |v: &Vec3| [v.x, v.y, v.z];
        match s {
            Symmetry::None => SymmetryJson::None,
            Symmetry::Cyclic { folds, axis, center } => SymmetryJson::Cyclic { folds: *folds, axis: a(axis), center: a(center) },
            Symmetry::Revolution { axis, center } => SymmetryJson::Revolution { axis: a(axis), center: a(center) },
        }
    }
}

impl From<&SymmetryJson> for Symmetry {
    fn from(s: &SymmetryJson) -> Self {
        match *s {
            SymmetryJson::None => Symmetry::None,
            SymmetryJson::Cyclic { folds, axis, center } => Symmetry::Cyclic { folds, axis: axis.into(), center: center.into() },
            SymmetryJson::Revolution { axis, center } => Symmetry::Revolution { axis: axis.into(), center: center.into() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointJson {
    pub position: [f64; 3],
    pub normal: [f64; 3],
}

/// Sidecar next to a model PLY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSidecar {
    pub keypoints: Vec<KeypointJson>,
    pub diameter_mm: f64,
    #[serde(default)]
    pub symmetry: SymmetryJson,
}

impl ModelSidecar {
    pub fn keypoints(&self) -> Vec<Keypoint> {
        self.keypoints.iter().map(|k| Keypoint { position: k.position.into(), normal: Vec3::from(k.normal) }).collect()
    }

    pub fn from_keypoints(keypoints: &[Keypoint], diameter_mm: f64, symmetry: &Symmetry) -> Self {
        let a = |v: &Vec3| [v.x, v.y, v.z];
        ModelSidecar {
            keypoints: keypoints.iter().map(|k| KeypointJson { position: a(&k.position), normal: a(&k.normal) }).collect(),
            diameter_mm,
            symmetry: symmetry.into(),
        }
    }
}

/// Sensor data of a scene cloud, kept next to its PLY.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    #[serde(default)]
    pub intrinsics: Option<Intrinsics>,
    #[serde(default)]
    pub view_origin: Option<[f64; 3]>,
}

pub fn read_intrinsics(path: &Path) -> Result<Intrinsics> {
    let k: Intrinsics = read_json(path)?;
    if !(k.fx > 0.0 && k.fy > 0.0) || k.width == 0 || k.height == 0 {
        return Err(Error::format(path, "intrinsics need positive focal lengths and image size"));
    }
    Ok(k)
}
