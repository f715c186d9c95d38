//! Surface sampling of simple solids and triangle meshes.
//!
//! Used to build synthetic objects and clutter, and to densify sparse mesh
//! models before keypoint extraction.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, SeedableRng};

use crate::cloud::{PointCloud, Vec3};
use crate::error::{invalid, Result};

/// A closed solid that can be surface-sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solid {
    /// Axis-aligned box given by center and half extents.
    Box { center: Vec3, half: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Cylinder with its axis along z.
    Cylinder { base: Vec3, radius: f64, height: f64 },
}

/// Surface sample with outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfelSample {
    pub position: Vec3,
    pub normal: Vec3,
}

impl Solid {
    /// Strict interior test with a small inward margin, so that points on
    /// the surface itself are not considered inside.
    pub fn contains(&self, p: &Vec3) -> bool {
        const EPS: f64 = 1e-6;
        match *self {
            Solid::Box { center, half } => {
                let d = (p - center).abs();
                d.x < half.x - EPS && d.y < half.y - EPS && d.z < half.z - EPS
            }
            Solid::Sphere { center, radius } => (p - center).norm() < radius - EPS,
            Solid::Cylinder { base, radius, height } => {
                let d = p - base;
                d.z > EPS && d.z < height - EPS && (d.x * d.x + d.y * d.y).sqrt() < radius - EPS
            }
        }
    }

    /// Approximately uniform samples at the given spacing (mm).
    pub fn sample_surface(&self, spacing: f64) -> Vec<SurfelSample> {
        let mut out = Vec::new();
        match *self {
            Solid::Box { center, half } => {
                for axis in 0..3 {
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    for sign in [-1.0, 1.0] {
                        let mut normal = Vec3::zeros();
                        normal[axis] = sign;
                        for (a, b) in grid(2.0 * half[u], 2.0 * half[v], spacing) {
                            let mut p = center;
                            p[axis] += sign * half[axis];
                            p[u] += a - half[u];
                            p[v] += b - half[v];
                            out.push(SurfelSample { position: p, normal });
                        }
                    }
                }
            }
            Solid::Sphere { center, radius } => {
                let n = ((4.0 * PI * radius * radius) / (spacing * spacing)).ceil().max(1.0) as usize;
                for dir in fibonacci_sphere(n) {
                    out.push(SurfelSample { position: center + dir * radius, normal: dir });
                }
            }
            Solid::Cylinder { base, radius, height } => {
                let n_phi = ((2.0 * PI * radius) / spacing).ceil().max(3.0) as usize;
                let n_z = (height / spacing).ceil().max(1.0) as usize;
                for k in 0..n_z {
                    let z = (k as f64 + 0.5) * height / n_z as f64;
                    // stagger alternate rings
                    let offset = if k % 2 == 0 { 0.0 } else { 0.5 };
                    for j in 0..n_phi {
                        let phi = 2.0 * PI * (j as f64 + offset) / n_phi as f64;
                        let normal = Vec3::new(phi.cos(), phi.sin(), 0.0);
                        out.push(SurfelSample { position: base + normal * radius + Vec3::z() * z, normal });
                    }
                }
                for (z, nz) in [(0.0, -1.0), (height, 1.0)] {
                    for (a, b) in grid(2.0 * radius, 2.0 * radius, spacing) {
                        let (x, y) = (a - radius, b - radius);
                        if x * x + y * y <= radius * radius {
                            out.push(SurfelSample {
                                position: base + Vec3::new(x, y, z),
                                normal: Vec3::new(0.0, 0.0, nz),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cell centers of a regular grid covering `[0, w] × [0, h]`.
fn grid(w: f64, h: f64, spacing: f64) -> impl Iterator<Item = (f64, f64)> {
    let nu = (w / spacing).ceil().max(1.0) as usize;
    let nv = (h / spacing).ceil().max(1.0) as usize;
    (0..nu).flat_map(move |i| {
        (0..nv).map(move |j| ((i as f64 + 0.5) * w / nu as f64, (j as f64 + 0.5) * h / nv as f64))
    })
}

fn fibonacci_sphere(n: usize) -> impl Iterator<Item = Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n).map(move |i| {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

/// Samples the outer surface of a union of solids: samples of each part that
/// fall inside another part are dropped. Each part gets a base color, which
/// `texture` may modulate by position.
pub fn sample_union(
    parts: &[(Solid, Vec3)],
    spacing: f64,
    texture: impl Fn(&Vec3) -> f64,
) -> PointCloud {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    for (k, (solid, color)) in parts.iter().enumerate() {
        for s in solid.sample_surface(spacing) {
            let hidden = parts.iter().enumerate().any(|(j, (other, _))| j != k && other.contains(&s.position));
            if hidden {
                continue;
            }
            positions.push(s.position);
            normals.push(s.normal);
            let shade = texture(&s.position);
            colors.push((color * shade).map(|c| c.clamp(0.0, 1.0)));
        }
    }
    PointCloud::from_columns(positions, Some(normals), None, Some(colors)).expect("columns have equal length")
}

/// Asymmetric test object, about 85 × 45 × 70 mm: a box body with a
/// cylindrical post on top and a spherical bump on one side. Surface sampled
/// at `spacing`, with outward normals and a smoothly varying color texture.
pub fn demo_object(spacing: f64) -> PointCloud {
    let parts = [
        (
            Solid::Box { center: Vec3::new(0.0, 0.0, -7.5), half: Vec3::new(35.0, 22.5, 17.5) },
            Vec3::new(0.85, 0.55, 0.2),
        ),
        (Solid::Cylinder { base: Vec3::new(20.0, 8.0, 5.0), radius: 10.0, height: 40.0 }, Vec3::new(0.2, 0.45, 0.85)),
        (Solid::Sphere { center: Vec3::new(-35.0, 0.0, -8.0), radius: 15.0 }, Vec3::new(0.3, 0.75, 0.3)),
    ];
    sample_union(&parts, spacing, |p| 0.85 + 0.15 * (0.3 * p.x).sin() * (0.25 * p.y + 0.2 * p.z).cos())
}

/// Upright cylinder centered on the origin (axis z), with uniform color.
pub fn cylinder(radius: f64, height: f64, spacing: f64) -> PointCloud {
    let solid = Solid::Cylinder { base: Vec3::new(0.0, 0.0, -height / 2.0), radius, height };
    sample_union(&[(solid, Vec3::new(0.7, 0.7, 0.2))], spacing, |_| 1.0)
}

/// Triangle mesh → point cloud with normals (and colors if vertex colors are
/// given).
///
/// Dense meshes contribute their vertices, with area-weighted face normals.
/// Meshes with fewer than 2 vertices per `spacing²` of surface are instead
/// sampled uniformly on the faces at 4 points per `spacing²`.
pub fn mesh_to_cloud(
    vertices: &[Vec3],
    colors: Option<&[Vec3]>,
    faces: &[[usize; 3]],
    spacing: f64,
    seed: u64,
) -> Result<PointCloud> {
    if vertices.is_empty() {
        return Err(invalid("mesh has no vertices"));
    }
    if colors.is_some_and(|c| c.len() != vertices.len()) {
        return Err(invalid("vertex color count differs from vertex count"));
    }
    if faces.iter().flatten().any(|&i| i >= vertices.len()) {
        return Err(invalid("face references a missing vertex"));
    }
    let tri = |f: &[usize; 3]| (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
    let area2 = |f: &[usize; 3]| {
        let (a, b, c) = tri(f);
        (b - a).cross(&(c - a))
    };
    let total_area: f64 = faces.iter().map(|f| area2(f).norm() / 2.0).sum();
    let cell = spacing * spacing;

    if faces.is_empty() || (vertices.len() as f64) >= 2.0 * total_area / cell {
        let mut normals = alloc::vec![Vec3::zeros(); vertices.len()];
        for f in faces {
            let n = area2(f);
            for &i in f {
                normals[i] += n;
            }
        }
        let normals: Vec<Vec3> =
            normals.into_iter().map(|n| if n.norm() > 0.0 { n.normalize() } else { Vec3::z() }).collect();
        return PointCloud::from_columns(vertices.to_vec(), Some(normals), None, colors.map(<[Vec3]>::to_vec));
    }

    let mut rng = crate::Rng::seed_from_u64(seed);
    let count = (4.0 * total_area / cell).ceil() as usize;
    let cumulative: Vec<f64> = faces
        .iter()
        .scan(0.0, |acc, f| {
            *acc += area2(f).norm();
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap();
    let mut positions = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let mut out_colors = Vec::with_capacity(count);
    for _ in 0..count {
        let pick = rng.random::<f64>() * total;
        let fi = cumulative.partition_point(|&c| c < pick).min(faces.len() - 1);
        let f = &faces[fi];
        let (a, b, c) = tri(f);
        let (mut r1, mut r2) = (rng.random::<f64>(), rng.random::<f64>());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        positions.push(a + (b - a) * r1 + (c - a) * r2);
        let n = area2(f);
        normals.push(if n.norm() > 0.0 { n.normalize() } else { Vec3::z() });
        if let Some(cs) = colors {
            out_colors.push(cs[f[0]] * (1.0 - r1 - r2) + cs[f[1]] * r1 + cs[f[2]] * r2);
        }
    }
    PointCloud::from_columns(positions, Some(normals), None, colors.map(|_| out_colors))
}
