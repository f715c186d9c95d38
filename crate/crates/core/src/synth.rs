//! Synthetic desk scenes: a table, clutter, the object at a known pose, seen
//! by a virtual pinhole camera.
//!
//! Every surface is represented by oriented surface samples. The camera keeps
//! the samples that face it and are not hidden in a depth buffer, so the
//! object's visible points are exactly its (posed) model points.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::cloud::{Intrinsics, PointCloud, Vec3};
use crate::error::{invalid, Result};
use crate::model::ObjectModel;
use crate::pose::{Mat3, RigidPose};
use crate::shapes::Solid;
use crate::spatial::NnIndex;
use crate::{sub_rng, Rng};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthParams {
    /// Gaussian position noise per axis (mm).
    pub noise_sigma_mm: f64,
    /// Gaussian noise on each color channel.
    pub color_noise: f64,
    pub clutter_count: usize,
    /// Half side of the square table (mm).
    pub table_half_extent_mm: f64,
    /// Sampling step of the table surface (mm).
    pub table_spacing_mm: f64,
    /// Sampling step of clutter and occluder surfaces (mm). These can sit
    /// close to the camera, so they need a finer step than the table to
    /// cover every pixel.
    pub clutter_spacing_mm: f64,
    /// Chance of a box standing between the camera and the object.
    pub occluder_probability: f64,
    pub camera_distance_mm: (f64, f64),
    pub camera_elevation_deg: (f64, f64),
    pub intrinsics: Intrinsics,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            noise_sigma_mm: 2.0,
            color_noise: 0.02,
            clutter_count: 6,
            table_half_extent_mm: 250.0,
            table_spacing_mm: 3.0,
            clutter_spacing_mm: 2.0,
            occluder_probability: 0.3,
            camera_distance_mm: (600.0, 900.0),
            camera_elevation_deg: (30.0, 70.0),
            intrinsics: Intrinsics { fx: 572.0, fy: 572.0, cx: 320.0, cy: 240.0, width: 640, height: 480 },
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi;
        if !(self.noise_sigma_mm >= 0.0 && self.color_noise >= 0.0) {
            return Err(invalid("noise levels must be non-negative"));
        }
        if !(self.table_half_extent_mm > 0.0 && self.table_spacing_mm > 0.0 && self.clutter_spacing_mm > 0.0) {
            return Err(invalid("table size and spacing must be positive"));
        }
        if !(0.0..=1.0).contains(&self.occluder_probability) {
            return Err(invalid("occluder probability must lie in [0, 1]"));
        }
        if !ok_range(self.camera_distance_mm) || !ok_range(self.camera_elevation_deg) || self.camera_elevation_deg.1 > 90.0 {
            return Err(invalid("camera distance and elevation ranges are invalid"));
        }
        if self.intrinsics.width == 0 || self.intrinsics.height == 0 || !(self.intrinsics.fx > 0.0 && self.intrinsics.fy > 0.0) {
            return Err(invalid("intrinsics are invalid"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// Camera-frame cloud with colors, intrinsics and the view origin at zero.
    pub cloud: PointCloud,
    /// Model frame to camera frame.
    pub gt_pose: RigidPose,
    pub seed: u64,
    /// Model cloud indices that the camera sees, ascending.
    pub visible_model: Vec<usize>,
    /// Cloud indices holding those points, in the same order.
    pub object_points: Vec<usize>,
}

struct Surfel {
    position: Vec3,
    normal: Vec3,
    color: Vec3,
    /// Disk radius covered by the sample (mm).
    radius: f64,
    /// Index into the model cloud, for object surfels.
    model_index: Option<usize>,
}

/// Stream ids of the independent random parts of a scene.
const STREAM_LAYOUT: u64 = 0;
const STREAM_OCCLUDER: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Renders one scene. The same `seed` gives a bit-identical result.
pub fn synth_scene(model: &ObjectModel, seed: u64, params: &SynthParams) -> Result<SyntheticScene> {
    params.validate()?;
    if model.cloud.is_empty() {
        return Err(invalid("model cloud is empty"));
    }
    let mut rng = sub_rng(seed, STREAM_LAYOUT);
    let d = model.diameter;

    // object upright on the table (z = 0), random yaw, near the table center
    let pts = model.cloud.positions();
    let yaw = rng.random_range(0.0..2.0 * PI);
    let spot = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.0) * params.table_half_extent_mm;
    let turned = RigidPose::from_axis_angle(&Vec3::z(), yaw, Vec3::zeros());
    let lowest = pts.iter().map(|p| turned.apply(p).z).fold(f64::INFINITY, f64::min);
    let object_world = RigidPose::from_axis_angle(&Vec3::z(), yaw, spot - Vec3::z() * lowest);
    let object_center = object_world.apply(&model_center(pts));

    let mut surfels = Vec::new();
    let colors = model.cloud.colors();
    let normals = model.cloud.normals();
    let model_radius = DISK_FACTOR * sample_spacing(pts);
    for (i, p) in pts.iter().enumerate() {
        surfels.push(Surfel {
            position: object_world.apply(p),
            normal: normals.map_or(Vec3::zeros(), |n| object_world.rotate(&n[i])),
            color: colors.map_or(Vec3::repeat(0.5), |c| c[i]),
            radius: model_radius,
            model_index: Some(i),
        });
    }

    let h = params.table_half_extent_mm;
    let table = Solid::Box { center: Vec3::new(0.0, 0.0, -5.0), half: Vec3::new(h, h, 5.0) };
    add_solid(&mut surfels, &table, params.table_spacing_mm, Vec3::new(0.55, 0.5, 0.45), |p| 0.9 + 0.1 * (0.05 * p.x).sin() * (0.04 * p.y).cos());

    // camera looking at the object from above the table
    let azimuth = rng.random_range(0.0..2.0 * PI);
    let elevation = rng.random_range(params.camera_elevation_deg.0..=params.camera_elevation_deg.1).to_radians();
    let distance = rng.random_range(params.camera_distance_mm.0..=params.camera_distance_mm.1);
    let dir = Vec3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
    let eye = object_center + dir * distance;
    let world_to_camera = look_at(&eye, &object_center);
    let toward = Vec3::new(dir.x, dir.y, 0.0).normalize();

    // clutter stays out of the line of sight; occlusion is the occluder's job
    let mut placed: Vec<(Vec3, f64)> = vec![(object_center, 0.5 * d)];
    for _ in 0..params.clutter_count {
        let size = rng.random_range(0.15..0.3) * d;
        let Some(at) = free_spot(&mut rng, &placed, size, h, (&object_center, &toward, 0.5 * d)) else { continue };
        placed.push((at, size));
        let color = Vec3::new(rng.random(), rng.random(), rng.random());
        let solid = if rng.random_bool(0.5) {
            let half = Vec3::new(size, rng.random_range(0.5..1.0) * size, rng.random_range(0.5..1.5) * size);
            Solid::Box { center: Vec3::new(at.x, at.y, half.z), half }
        } else {
            Solid::Sphere { center: Vec3::new(at.x, at.y, size), radius: size }
        };
        add_solid(&mut surfels, &solid, params.clutter_spacing_mm, color, |_| 1.0);
    }

    let mut occ_rng = sub_rng(seed, STREAM_OCCLUDER);
    if occ_rng.random_bool(params.occluder_probability) {
        // a box standing between object and camera, partly covering the object
        let side = Vec3::new(-toward.y, toward.x, 0.0);
        let at = object_center + toward * occ_rng.random_range(0.8..1.2) * d + side * occ_rng.random_range(-0.35..0.35) * d;
        let half = Vec3::new(occ_rng.random_range(0.15..0.3) * d, occ_rng.random_range(0.15..0.3) * d, occ_rng.random_range(0.2..0.4) * d);
        let color = Vec3::new(occ_rng.random(), occ_rng.random(), occ_rng.random());
        add_solid(&mut surfels, &Solid::Box { center: Vec3::new(at.x, at.y, half.z), half }, params.clutter_spacing_mm, color, |_| 1.0);
    }

    for s in &mut surfels {
        s.position = world_to_camera.apply(&s.position);
        s.normal = world_to_camera.rotate(&s.normal);
    }
    let seen = visible_surfels(&surfels, &params.intrinsics);

    let mut noise_rng = sub_rng(seed, STREAM_NOISE);
    let position_noise = Normal::new(0.0, params.noise_sigma_mm).map_err(|_| invalid("bad noise sigma"))?;
    let color_noise = Normal::new(0.0, params.color_noise).map_err(|_| invalid("bad color noise"))?;
    let mut positions = Vec::with_capacity(seen.len());
    let mut cloud_colors = Vec::with_capacity(seen.len());
    let mut visible_model = Vec::new();
    let mut object_points = Vec::new();
    for &i in &seen {
        let s = &surfels[i];
        let mut p = s.position;
        if params.noise_sigma_mm > 0.0 {
            p += Vec3::from_fn(|_, _| position_noise.sample(&mut noise_rng));
        }
        let mut c = s.color;
        if params.color_noise > 0.0 {
            c = c.map(|x| (x + color_noise.sample(&mut noise_rng)).clamp(0.0, 1.0));
        }
        if let Some(m) = s.model_index {
            visible_model.push(m);
            object_points.push(positions.len());
        }
        positions.push(p);
        cloud_colors.push(c);
    }
    let mut cloud = PointCloud::from_columns(positions, None, None, Some(cloud_colors))?;
    cloud.intrinsics = Some(params.intrinsics);
    cloud.view_origin = Some(Vec3::zeros());
    let gt_pose = world_to_camera.compose(&object_world);
    Ok(SyntheticScene { cloud, gt_pose, seed, visible_model, object_points })
}

fn model_center(points: &[Vec3]) -> Vec3 {
    let (lo, hi) = points.iter().fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    (lo + hi) / 2.0
}

fn add_solid(out: &mut Vec<Surfel>, solid: &Solid, spacing: f64, color: Vec3, texture: impl Fn(&Vec3) -> f64) {
    for s in solid.sample_surface(spacing) {
        let shade = texture(&s.position);
        out.push(Surfel {
            position: s.position,
            normal: s.normal,
            color: (color * shade).map(|c| c.clamp(0.0, 1.0)),
            radius: DISK_FACTOR * spacing,
            model_index: None,
        });
    }
}

/// A table spot for clutter of footprint radius `size` that keeps clear of
/// everything placed so far and of the strip of table between the object and
/// the camera; gives up after a few tries.
fn free_spot(rng: &mut Rng, placed: &[(Vec3, f64)], size: f64, half: f64, sight: (&Vec3, &Vec3, f64)) -> Option<Vec3> {
    let (origin, toward, width) = sight;
    let lim = half - 1.5 * size;
    if lim <= 0.0 {
        return None;
    }
    for _ in 0..50 {
        let p = Vec3::new(rng.random_range(-lim..lim), rng.random_range(-lim..lim), 0.0);
        let clear = placed.iter().all(|(q, r)| {
            let dx = Vec3::new(p.x - q.x, p.y - q.y, 0.0).norm();
            dx > 1.5 * (size + r) + 20.0
        });
        let rel = Vec3::new(p.x - origin.x, p.y - origin.y, 0.0);
        let ahead = rel.dot(toward);
        let off_axis = (rel - toward * ahead).norm();
        let in_sight = ahead > 0.0 && off_axis < width + size + 20.0;
        if clear && !in_sight {
            return Some(p);
        }
    }
    None
}

/// World-to-camera transform for a camera at `eye` looking at `target`,
/// x right, y down, z forward, with world z up.
fn look_at(eye: &Vec3, target: &Vec3) -> RigidPose {
    let z = (target - eye).normalize();
    let x = z.cross(&Vec3::z()).normalize();
    let y = z.cross(&x);
    let r = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    RigidPose::from_parts_unchecked(r, -(r * eye))
}

/// Sample disks of this radius, relative to the sample spacing, cover a
/// surface without holes.
const DISK_FACTOR: f64 = 0.8;

/// Median distance from a sample to its nearest neighbor.
fn sample_spacing(points: &[Vec3]) -> f64 {
    let index = NnIndex::new(points);
    let stride = points.len().div_ceil(256).max(1);
    let mut gaps: Vec<f64> = Vec::new();
    for (i, p) in points.iter().enumerate().step_by(stride) {
        let mut r = 0.5;
        while r < 1e4 {
            let near = index.within_radius(p, r);
            if near.len() > 1 {
                gaps.push(near.iter().filter(|&&j| j != i).map(|&j| (points[j] - p).norm()).fold(f64::INFINITY, f64::min));
                break;
            }
            r *= 2.0;
        }
    }
    if gaps.is_empty() {
        return 1.0;
    }
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

/// Depth-buffer visibility of oriented disks: each front-facing sample
/// writes, for every pixel whose ray crosses its disk, the depth of that
/// crossing. A front-facing sample is kept if its own depth is within a
/// small tolerance of the buffer at its pixel.
fn visible_surfels(surfels: &[Surfel], k: &Intrinsics) -> Vec<usize> {
    const TOLERANCE_MM: f64 = 2.0;
    let (w, h) = (k.width as usize, k.height as usize);
    let mut depth = vec![f64::INFINITY; w * h];
    let facing = |s: &Surfel| s.normal == Vec3::zeros() || s.normal.dot(&s.position) < 0.0;
    for s in surfels.iter().filter(|s| facing(s)) {
        let Some((u, v)) = k.pixel(&s.position) else { continue };
        let reach = (s.radius * k.fx.max(k.fy) / s.position.z).ceil() as isize + 1;
        let (u, v) = (u as isize, v as isize);
        for y in (v - reach).max(0)..=(v + reach).min(h as isize - 1) {
            for x in (u - reach).max(0)..=(u + reach).min(w as isize - 1) {
                let ray = Vec3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                let along = s.normal.dot(&ray);
                let z = if s.normal == Vec3::zeros() {
                    s.position.z
                } else if along.abs() > 1e-9 {
                    s.normal.dot(&s.position) / along
                } else {
                    continue;
                };
                if (ray * z - s.position).norm() > s.radius {
                    continue;
                }
                let d = &mut depth[y as usize * w + x as usize];
                if z < *d {
                    *d = z;
                }
            }
        }
    }
    (0..surfels.len())
        .filter(|&i| {
            let s = &surfels[i];
            facing(s) && k.pixel(&s.position).is_some_and(|(u, v)| s.position.z <= depth[v * w + u] + TOLERANCE_MM)
        })
        .collect()
}

/// The object's model points visible in `scene`, for tests and debugging.
pub fn visible_fraction(scene: &SyntheticScene, model: &ObjectModel) -> f64 {
    scene.visible_model.len() as f64 / model.cloud.len().max(1) as f64
}

/// Seeds for a numbered series of scenes.
pub fn scene_seed(master: u64, index: u64) -> u64 {
    let mut rng = Rng::seed_from_u64(master ^ 0x5eed_5eed_5eed_5eed);
    rng.set_stream(index);
    rng.random()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Symmetry;
    use crate::shapes;

    fn model() -> ObjectModel {
        ObjectModel::build(shapes::demo_object(3.0), 25.0, Symmetry::None).unwrap()
    }

    fn clean() -> SynthParams {
        SynthParams { noise_sigma_mm: 0.0, color_noise: 0.0, occluder_probability: 0.0, ..SynthParams::default() }
    }

    #[test]
    fn noiseless_object_points_are_exact() {
        let m = model();
        let s = synth_scene(&m, 7, &clean()).unwrap();
        assert!(s.visible_model.len() > 100);
        for (&mi, &ci) in s.visible_model.iter().zip(&s.object_points) {
            let truth = s.gt_pose.apply(&m.cloud.positions()[mi]);
            assert!((s.cloud.positions()[ci] - truth).norm() < 1e-6);
        }
    }

    #[test]
    fn visible_points_face_the_camera_and_project() {
        let m = model();
        let s = synth_scene(&m, 8, &clean()).unwrap();
        let k = s.cloud.intrinsics.unwrap();
        for p in s.cloud.positions() {
            assert!(k.pixel(p).is_some());
        }
        let normals = m.cloud.normals().unwrap();
        for (&mi, &ci) in s.visible_model.iter().zip(&s.object_points) {
            let n = s.gt_pose.rotate(&normals[mi]);
            assert!(n.dot(&s.cloud.positions()[ci]) < 0.0);
        }
    }

    #[test]
    fn object_rests_on_table_in_front_of_camera() {
        let m = model();
        for seed in 0..10 {
            let s = synth_scene(&m, seed, &clean()).unwrap();
            let c = s.gt_pose.apply(&model_center(m.cloud.positions()));
            assert!((500.0..1000.0).contains(&c.z), "{c:?}");
            // table points: the rest of the cloud lies mostly below the object
            assert!(s.cloud.len() > 5000);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = model();
        let p = SynthParams::default();
        assert_eq!(synth_scene(&m, 3, &p).unwrap(), synth_scene(&m, 3, &p).unwrap());
        assert_ne!(synth_scene(&m, 3, &p).unwrap().cloud, synth_scene(&m, 4, &p).unwrap().cloud);
    }

    #[test]
    fn occluders_hide_more_of_the_object() {
        let m = model();
        let off = clean();
        let on = SynthParams { occluder_probability: 1.0, ..clean() };
        let (mut a, mut b) = (0.0, 0.0);
        for seed in 0..50 {
            a += visible_fraction(&synth_scene(&m, seed, &off).unwrap(), &m);
            b += visible_fraction(&synth_scene(&m, seed, &on).unwrap(), &m);
        }
        assert!(b < a, "{b} vs {a}");
    }

    #[test]
    fn noise_level_shows_on_the_table() {
        let m = model();
        let p = SynthParams { noise_sigma_mm: 2.0, clutter_count: 0, occluder_probability: 0.0, ..SynthParams::default() };
        let s = synth_scene(&m, 5, &p).unwrap();
        let clean = synth_scene(&m, 5, &SynthParams { noise_sigma_mm: 0.0, ..p.clone() }).unwrap();
        let n = s.cloud.len();
        let var: f64 = s.cloud.positions().iter().zip(clean.cloud.positions()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / (3 * n) as f64;
        assert!((var.sqrt() - 2.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_params() {
        let m = model();
        assert!(synth_scene(&m, 0, &SynthParams { occluder_probability: 2.0, ..SynthParams::default() }).is_err());
        assert!(synth_scene(&m, 0, &SynthParams { camera_distance_mm: (900.0, 600.0), ..SynthParams::default() }).is_err());
    }
}
