//! Models and scenes on disk.
//!
//! A model is a PLY (points with normals, or a triangle mesh) plus an
//! optional `<stem>.json` sidecar holding keypoints, diameter and symmetry.
//! A scene is either `<stem>.ply` with an optional `<stem>.camera.json`, or
//! `<stem>.depth.png` with `<stem>.intrinsics.json` and an optional
//! `<stem>.rgb.png`. Its ground-truth pose, when known, is `<stem>.pose.json`.

use std::path::{Path, PathBuf};

use pointvote_core::model::{ObjectModel, Symmetry};
use pointvote_core::{shapes, PointCloud, RigidPose, Vec3};

use crate::config::ModelConfig;
use crate::error::{io_at, Error, Result};
use crate::formats::{read_intrinsics, read_json, read_pose, write_json, CameraJson, ModelSidecar};
use crate::images::load_rgbd;
use crate::ply::{read_ply, write_cloud};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".depth.png").or_else(|| name.strip_suffix(".ply")).unwrap_or(&name);
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn sidecar_path(model: &Path) -> PathBuf {
    with_suffix(model, ".json")
}

pub fn load_model(path: &Path, cfg: &ModelConfig) -> Result<ObjectModel> {
    let ply = read_ply(path)?;
    let cloud = if ply.faces.is_empty() {
        ply.cloud
    } else {
        let colors = ply.cloud.colors().map(<[Vec3]>::to_vec);
        shapes::mesh_to_cloud(ply.cloud.positions(), colors.as_deref(), &ply.faces, cfg.surface_spacing_mm, 0)
            .map_err(|e| Error::format(path, e.to_string()))?
    };
    if cloud.normals().is_none() {
        return Err(Error::format(path, "model needs per-vertex normals or faces"));
    }
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let doc: ModelSidecar = read_json(&sidecar)?;
        let symmetry = Symmetry::from(&doc.symmetry);
        symmetry.validate().map_err(|e| Error::format(&sidecar, e.to_string()))?;
        if doc.keypoints.is_empty() || !(doc.diameter_mm > 0.0) {
            return Err(Error::format(&sidecar, "sidecar needs keypoints and a positive diameter"));
        }
        return Ok(ObjectModel { cloud, keypoints: doc.keypoints(), diameter: doc.diameter_mm, symmetry });
    }
    let model = ObjectModel::build(cloud, cfg.keypoint_spacing_mm, Symmetry::from(&cfg.symmetry)).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(model)
}

/// Writes the model cloud and its sidecar.
pub fn save_model(path: &Path, model: &ObjectModel) -> Result<()> {
    write_cloud(path, &model.cloud)?;
    write_json(&sidecar_path(path), &ModelSidecar::from_keypoints(&model.keypoints, model.diameter, &model.symmetry))
}

pub fn load_scene(path: &Path) -> Result<PointCloud> {
    if !path.exists() {
        return Err(io_at(path)(std::io::Error::new(std::io::ErrorKind::NotFound, "scene not found")));
    }
    let name = path.to_string_lossy();
    if name.ends_with(".depth.png") {
        let intrinsics = read_intrinsics(&with_suffix(path, ".intrinsics.json"))?;
        let rgb = with_suffix(path, ".rgb.png");
        let mut cloud = load_rgbd(path, rgb.exists().then_some(rgb.as_path()), &intrinsics)?;
        cloud.view_origin = Some(Vec3::zeros());
        return Ok(cloud);
    }
    if !name.ends_with(".ply") {
        return Err(Error::format(path, "scenes are .ply or .depth.png files"));
    }
    let mut cloud = read_ply(path)?.cloud;
    let camera = with_suffix(path, ".camera.json");
    if camera.exists() {
        let cam: CameraJson = read_json(&camera)?;
        cloud.intrinsics = cam.intrinsics;
        cloud.view_origin = cam.view_origin.map(Vec3::from);
    }
    if cloud.is_empty() {
        return Err(Error::format(path, "scene has no points"));
    }
    Ok(cloud)
}

pub fn save_scene(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_cloud(path, cloud)?;
    let cam = CameraJson { intrinsics: cloud.intrinsics, view_origin: cloud.view_origin.map(|o| [o.x, o.y, o.z]) };
    write_json(&with_suffix(path, ".camera.json"), &cam)
}

pub fn gt_pose_path(scene: &Path) -> PathBuf {
    with_suffix(scene, ".pose.json")
}

pub fn load_gt(scene: &Path) -> Result<RigidPose> {
    read_pose(&gt_pose_path(scene))
}

/// Scene name: the file name without `.ply` or `.depth.png`.
pub fn scene_name(scene: &Path) -> String {
    with_suffix(scene, "").file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Scene files in `dir`, sorted by name. A depth image is listed only when
/// no PLY shares its stem.
pub fn list_scenes(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(io_at(dir))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.map_err(io_at(dir))?.path();
        let name = p.to_string_lossy();
        if name.ends_with(".ply") || name.ends_with(".depth.png") {
            files.push(p);
        }
    }
    files.sort();
    let plys: std::collections::BTreeSet<String> =
        files.iter().filter(|p| p.extension().is_some_and(|e| e == "ply")).map(|p| scene_name(p)).collect();
    files.retain(|p| p.extension().is_some_and(|e| e == "ply") || !plys.contains(&scene_name(p)));
    Ok(files)
}

/// Scenes that have a ground-truth pose file.
pub fn list_annotated(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(list_scenes(dir)?.into_iter().filter(|p| gt_pose_path(p).exists()).collect())
}
