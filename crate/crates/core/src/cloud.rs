//! Point clouds with optional per-point channels.
//!
//! Channels are stored column-wise, so every point of a cloud necessarily
//! carries the same set of optional channels.

use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::pose::RigidPose;

/// 3-vector; positions are in millimeters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Pinhole camera model. Pixel `(u, v)` covers the square centered on integer
/// coordinates, with `(cx, cy)` at the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Continuous image coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Pixel containing the projection of `p`, if it falls inside the image.
    pub fn pixel(&self, p: &Vec3) -> Option<(usize, usize)> {
        let (u, v) = self.project(p)?;
        let (u, v) = ((u + 0.5).floor(), (v + 0.5).floor());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Which optional channels a cloud carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Channels {
    pub normals: bool,
    pub curvature: bool,
    pub color: bool,
}

impl Channels {
    pub const XYZ: Channels = Channels { normals: false, curvature: false, color: false };
    pub const GEOMETRY: Channels = Channels { normals: true, curvature: true, color: false };
    pub const ALL: Channels = Channels { normals: true, curvature: true, color: true };
}

/// A single point, used when building or iterating clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: Vec3,
    pub normal: Option<Vec3>,
    pub curvature: Option<f64>,
    /// RGB, each channel in `[0, 1]`.
    pub color: Option<Vec3>,
}

impl Point {
    pub fn at(position: Vec3) -> Self {
        Point { position, normal: None, curvature: None, color: None }
    }

    pub fn channels(&self) -> Channels {
        Channels {
            normals: self.normal.is_some(),
            curvature: self.curvature.is_some(),
            color: self.color.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    positions: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    curvatures: Option<Vec<f64>>,
    colors: Option<Vec<Vec3>>,
    /// Sensor position in the cloud's frame.
    pub view_origin: Option<Vec3>,
    /// Camera model; when present, positions are in the camera frame.
    pub intrinsics: Option<Intrinsics>,
}

impl PointCloud {
    /// Empty cloud carrying the given channels.
    pub fn with_channels(channels: Channels) -> Self {
        PointCloud {
            positions: Vec::new(),
            normals: channels.normals.then(Vec::new),
            curvatures: channels.curvature.then(Vec::new),
            colors: channels.color.then(Vec::new),
            view_origin: None,
            intrinsics: None,
        }
    }

    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        PointCloud { positions, ..Default::default() }
    }

    /// Assembles a cloud from columns; every present column must match the
    /// number of positions.
    pub fn from_columns(
        positions: Vec<Vec3>,
        normals: Option<Vec<Vec3>>,
        curvatures: Option<Vec<f64>>,
        colors: Option<Vec<Vec3>>,
    ) -> Result<Self> {
        let n = positions.len();
        if normals.as_ref().is_some_and(|c| c.len() != n)
            || curvatures.as_ref().is_some_and(|c| c.len() != n)
            || colors.as_ref().is_some_and(|c| c.len() != n)
        {
            return Err(invalid("channel length differs from position count"));
        }
        Ok(PointCloud { positions, normals, curvatures, colors, view_origin: None, intrinsics: None })
    }

    /// Empty cloud with the same channels and sensor metadata as `self`.
    pub fn empty_like(&self) -> Self {
        let mut out = PointCloud::with_channels(self.channels());
        out.view_origin = self.view_origin;
        out.intrinsics = self.intrinsics;
        out
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn channels(&self) -> Channels {
        Channels {
            normals: self.normals.is_some(),
            curvature: self.curvatures.is_some(),
            color: self.colors.is_some(),
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [Vec3] {
        &mut self.positions
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn normals_mut(&mut self) -> Option<&mut [Vec3]> {
        self.normals.as_deref_mut()
    }

    pub fn curvatures(&self) -> Option<&[f64]> {
        self.curvatures.as_deref()
    }

    pub fn curvatures_mut(&mut self) -> Option<&mut [f64]> {
        self.curvatures.as_deref_mut()
    }

    pub fn colors(&self) -> Option<&[Vec3]> {
        self.colors.as_deref()
    }

    pub fn colors_mut(&mut self) -> Option<&mut [Vec3]> {
        self.colors.as_deref_mut()
    }

    /// Replaces (or adds) the normal and curvature channels.
    pub fn set_normals(&mut self, normals: Vec<Vec3>, curvatures: Vec<f64>) -> Result<()> {
        if normals.len() != self.len() || curvatures.len() != self.len() {
            return Err(invalid("normal/curvature count differs from point count"));
        }
        self.normals = Some(normals);
        self.curvatures = Some(curvatures);
        Ok(())
    }

    pub fn set_colors(&mut self, colors: Vec<Vec3>) -> Result<()> {
        if colors.len() != self.len() {
            return Err(invalid("color count differs from point count"));
        }
        self.colors = Some(colors);
        Ok(())
    }

    pub fn clear_colors(&mut self) {
        self.colors = None;
    }

    pub fn point(&self, i: usize) -> Point {
        Point {
            position: self.positions[i],
            normal: self.normals.as_ref().map(|c| c[i]),
            curvature: self.curvatures.as_ref().map(|c| c[i]),
            color: self.colors.as_ref().map(|c| c[i]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Appends a point; its channels must match the cloud's.
    pub fn push(&mut self, p: Point) -> Result<()> {
        if p.channels() != self.channels() {
            return Err(invalid("point channels differ from cloud channels"));
        }
        self.push_unchecked(&p);
        Ok(())
    }

    fn push_unchecked(&mut self, p: &Point) {
        self.positions.push(p.position);
        if let (Some(c), Some(n)) = (self.normals.as_mut(), p.normal) {
            c.push(n);
        }
        if let (Some(c), Some(k)) = (self.curvatures.as_mut(), p.curvature) {
            c.push(k);
        }
        if let (Some(c), Some(rgb)) = (self.colors.as_mut(), p.color) {
            c.push(rgb);
        }
    }

    /// Appends all points of `other`, which must carry the same channels.
    pub fn append(&mut self, other: &PointCloud) -> Result<()> {
        if other.channels() != self.channels() {
            return Err(invalid("appended cloud has different channels"));
        }
        for p in other.iter() {
            self.push_unchecked(&p);
        }
        Ok(())
    }

    /// Sub-cloud of the given indices (repeats allowed), keeping metadata.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let pick_v = |c: &Vec<Vec3>| indices.iter().map(|&i| c[i]).collect::<Vec<_>>();
        PointCloud {
            positions: pick_v(&self.positions),
            normals: self.normals.as_ref().map(pick_v),
            curvatures: self.curvatures.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            colors: self.colors.as_ref().map(pick_v),
            view_origin: self.view_origin,
            intrinsics: self.intrinsics,
        }
    }

    /// Rigidly moves positions, normals and the view origin. Intrinsics are
    /// dropped unless `pose` is the identity, since the camera frame changes.
    pub fn transformed(&self, pose: &RigidPose) -> PointCloud {
        PointCloud {
            positions: self.positions.iter().map(|p| pose.apply(p)).collect(),
            normals: self.normals.as_ref().map(|c| c.iter().map(|n| pose.rotate(n)).collect()),
            curvatures: self.curvatures.clone(),
            colors: self.colors.clone(),
            view_origin: self.view_origin.map(|o| pose.apply(&o)),
            intrinsics: if *pose == RigidPose::identity() { self.intrinsics } else { None },
        }
    }

    pub fn translate(&mut self, offset: &Vec3) {
        for p in &mut self.positions {
            *p += offset;
        }
    }

    pub fn centroid(&self) -> Option<Vec3> {
        centroid(&self.positions)
    }

    /// Checks per-point value invariants: unit normals, curvature and color
    /// channels in `[0, 1]`, finite positions.
    pub fn validate(&self) -> Result<()> {
        if self.positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid("non-finite position"));
        }
        if let Some(ns) = &self.normals {
            if ns.iter().any(|n| (n.norm() - 1.0).abs() > 1e-6) {
                return Err(invalid("normal is not unit length"));
            }
        }
        if let Some(ks) = &self.curvatures {
            if ks.iter().any(|k| !(0.0..=1.0).contains(k)) {
                return Err(invalid("curvature outside [0, 1]"));
            }
        }
        if let Some(cs) = &self.colors {
            if cs.iter().any(|c| c.iter().any(|v| !(0.0..=1.0).contains(v))) {
                return Err(invalid("color channel outside [0, 1]"));
            }
        }
        Ok(())
    }
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    Some(sum / points.len() as f64)
}
