//! Surface normals and curvature from local PCA.

use alloc::vec::Vec;

use nalgebra::SymmetricEigen;

use crate::cloud::{PointCloud, Vec3};
use crate::error::{invalid, Result};
use crate::pose::Mat3;
use crate::spatial::NnIndex;

/// Minimum neighborhood size (the point itself included) for a PCA normal.
pub const MIN_NEIGHBORS: usize = 3;

/// Adds normal and curvature channels to a copy of `cloud`.
///
/// The normal is the smallest-eigenvalue eigenvector of the covariance of all
/// points within `radius`, oriented toward `viewpoint`. Curvature is
/// `λ₀ / (λ₀ + λ₁ + λ₂)`. Points with fewer than [`MIN_NEIGHBORS`] neighbors
/// get the unit vector toward the viewpoint and zero curvature.
pub fn estimate_normals(cloud: &PointCloud, radius: f64, viewpoint: &Vec3) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(invalid("normal estimation radius must be positive"));
    }
    let index = NnIndex::new(cloud.positions());
    let positions = cloud.positions();
    let mut normals = Vec::with_capacity(positions.len());
    let mut curvatures = Vec::with_capacity(positions.len());
    for p in positions {
        let to_view = viewpoint - p;
        let fallback = if to_view.norm() > 0.0 { to_view.normalize() } else { Vec3::z() };
        let neighbors = index.within_radius(p, radius);
        if neighbors.len() < MIN_NEIGHBORS {
            normals.push(fallback);
            curvatures.push(0.0);
            continue;
        }
        let (normal, curvature) = pca_normal(neighbors.iter().map(|&i| &positions[i]), neighbors.len());
        let normal = if normal.dot(&to_view) < 0.0 { -normal } else { normal };
        normals.push(normal);
        curvatures.push(curvature);
    }
    let mut out = cloud.clone();
    out.set_normals(normals, curvatures)?;
    Ok(out)
}

fn pca_normal<'a>(points: impl Iterator<Item = &'a Vec3> + Clone, n: usize) -> (Vec3, f64) {
    let mean = points.clone().fold(Vec3::zeros(), |a, p| a + p) / n as f64;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let normal = eig.eigenvectors.column(order[0]).normalize();
    let total = lambda[0] + lambda[1] + lambda[2];
    let curvature = if total > 0.0 { lambda[0] / total } else { 0.0 };
    (normal, curvature)
}
