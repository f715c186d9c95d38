//! Voxel-grid downsampling.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::cloud::{PointCloud, Vec3};
use crate::error::{invalid, Result};

/// Integer voxel coordinates of `p`: `floor(p / leaf)` per axis, so points on
/// a boundary belong to the higher-index voxel.
pub fn voxel_key(p: &Vec3, leaf: f64) -> (i64, i64, i64) {
    ((p.x / leaf).floor() as i64, (p.y / leaf).floor() as i64, (p.z / leaf).floor() as i64)
}

/// Replaces the points of every occupied voxel by their centroid. All present
/// channels are averaged; averaged normals are re-normalized. Output order
/// follows the first occurrence of each voxel in the input.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    Ok(voxel_downsample_grouped(cloud, leaf)?.0)
}

/// As [`voxel_downsample`], also returning the member indices of each output
/// point.
pub fn voxel_downsample_grouped(cloud: &PointCloud, leaf: f64) -> Result<(PointCloud, Vec<Vec<usize>>)> {
    if !(leaf > 0.0) || !leaf.is_finite() {
        return Err(invalid("voxel leaf size must be positive"));
    }
    let mut slots: BTreeMap<(i64, i64, i64), usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.positions().iter().enumerate() {
        let next = groups.len();
        let slot = *slots.entry(voxel_key(p, leaf)).or_insert(next);
        if slot == next {
            groups.push(Vec::new());
        }
        groups[slot].push(i);
    }

    let normals = cloud.normals();
    let curvatures = cloud.curvatures();
    let colors = cloud.colors();
    let mut positions = Vec::with_capacity(groups.len());
    let mut out_normals = Vec::new();
    let mut out_curv = Vec::new();
    let mut out_colors = Vec::new();
    for members in &groups {
        let inv = 1.0 / members.len() as f64;
        positions.push(members.iter().fold(Vec3::zeros(), |a, &i| a + cloud.positions()[i]) * inv);
        if let Some(ns) = normals {
            let sum = members.iter().fold(Vec3::zeros(), |a, &i| a + ns[i]);
            let norm = sum.norm();
            out_normals.push(if norm > 1e-12 { sum / norm } else { ns[members[0]] });
        }
        if let Some(ks) = curvatures {
            out_curv.push(members.iter().map(|&i| ks[i]).sum::<f64>() * inv);
        }
        if let Some(cs) = colors {
            out_colors.push(members.iter().fold(Vec3::zeros(), |a, &i| a + cs[i]) * inv);
        }
    }
    let mut built = PointCloud::from_columns(
        positions,
        normals.map(|_| out_normals),
        curvatures.map(|_| out_curv),
        colors.map(|_| out_colors),
    )?;
    built.view_origin = cloud.view_origin;
    built.intrinsics = cloud.intrinsics;
    Ok((built, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn empty_cloud_stays_empty() {
        assert!(voxel_downsample(&PointCloud::default(), 25.0).unwrap().is_empty());
    }

    #[test]
    fn rejects_non_positive_leaf() {
        assert!(voxel_downsample(&PointCloud::default(), 0.0).is_err());
        assert!(voxel_downsample(&PointCloud::default(), -1.0).is_err());
    }

    #[test]
    fn cube_corners_collapse_to_center() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64) * 10.0 + Vec3::repeat(1.0));
        }
        let out = voxel_downsample(&PointCloud::from_positions(pts), 25.0).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.positions()[0] - Vec3::repeat(6.0)).norm() < 1e-12);
    }

    #[test]
    fn boundary_points_go_to_higher_voxel() {
        assert_eq!(voxel_key(&Vec3::new(25.0, -25.0, 0.0), 25.0), (1, -1, 0));
    }

    #[test]
    fn normals_are_renormalized() {
        let cloud = PointCloud::from_columns(
            vec![Vec3::zeros(), Vec3::repeat(1.0)],
            Some(vec![Vec3::x(), Vec3::y()]),
            Some(vec![0.1, 0.3]),
            None,
        )
        .unwrap();
        let out = voxel_downsample(&cloud, 25.0).unwrap();
        assert!((out.normals().unwrap()[0].norm() - 1.0).abs() < 1e-12);
        assert!((out.curvatures().unwrap()[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_voxel_hash() {
        let mut rng = crate::Rng::seed_from_u64(21);
        let pts: Vec<Vec3> = (0..10_000)
            .map(|_| Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * 200.0)
            .collect();
        let leaf = 25.0;
        let out = voxel_downsample(&PointCloud::from_positions(pts.clone()), leaf).unwrap();

        // oracle: sort point ids by voxel key, average each run
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by_key(|&i| (voxel_key(&pts[i], leaf), i));
        let mut oracle = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let key = voxel_key(&pts[order[start]], leaf);
            let mut end = start;
            let mut sum = Vec3::zeros();
            while end < order.len() && voxel_key(&pts[order[end]], leaf) == key {
                sum += pts[order[end]];
                end += 1;
            }
            oracle.push((key, sum / (end - start) as f64));
            start = end;
        }

        assert_eq!(out.len(), oracle.len());
        let mut seen = alloc::collections::BTreeSet::new();
        for p in out.positions() {
            let key = voxel_key(p, leaf);
            assert!(seen.insert(key), "two outputs in one voxel");
            let (_, c) = oracle.iter().find(|(k, _)| *k == key).unwrap();
            assert!((p - c).norm() < 1e-9);
            let lo = Vec3::new(key.0 as f64, key.1 as f64, key.2 as f64) * leaf;
            assert!((0..3).all(|a| p[a] >= lo[a] - 1e-9 && p[a] <= lo[a] + leaf + 1e-9));
        }
    }
}
