//! Depth image to point cloud.

use alloc::vec::Vec;

use crate::cloud::{Intrinsics, PointCloud, Vec3};
use crate::error::{invalid, Result};

/// Pinhole backprojection of a row-major `u16` depth image in millimetres.
/// Pixels with zero depth are skipped. `rgb`, when given, must have the same
/// size and is attached as colors in `[0, 1]`.
pub fn backproject_rgbd(depth: &[u16], rgb: Option<&[[u8; 3]]>, intrinsics: &Intrinsics) -> Result<PointCloud> {
    let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
    if depth.len() != w * h {
        return Err(invalid("depth image size differs from the intrinsics"));
    }
    if rgb.is_some_and(|c| c.len() != depth.len()) {
        return Err(invalid("color and depth images differ in size"));
    }
    if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
        return Err(invalid("focal lengths must be positive"));
    }
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for (i, &z) in depth.iter().enumerate() {
        if z == 0 {
            continue;
        }
        let (u, v) = ((i % w) as f64, (i / w) as f64);
        let z = z as f64;
        positions.push(Vec3::new((u - intrinsics.cx) * z / intrinsics.fx, (v - intrinsics.cy) * z / intrinsics.fy, z));
        if let Some(rgb) = rgb {
            colors.push(Vec3::from_fn(|c, _| rgb[i][c] as f64 / 255.0));
        }
    }
    let mut cloud = PointCloud::from_columns(positions, None, None, rgb.map(|_| colors))?;
    cloud.intrinsics = Some(*intrinsics);
    cloud.view_origin = Some(Vec3::zeros());
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn k(w: u32, h: u32) -> Intrinsics {
        Intrinsics { fx: 572.0, fy: 573.0, cx: 2.0, cy: 1.0, width: w, height: h }
    }

    #[test]
    fn principal_point_maps_to_axis() {
        let mut depth = vec![0u16; 5 * 3];
        depth[5 + 2] = 1000;
        let rgb = vec![[255u8, 0, 51]; 15];
        let c = backproject_rgbd(&depth, Some(&rgb), &k(5, 3)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.positions()[0], Vec3::new(0.0, 0.0, 1000.0));
        assert_eq!(c.colors().unwrap()[0], Vec3::new(1.0, 0.0, 0.2));
        assert_eq!(c.view_origin, Some(Vec3::zeros()));
    }

    #[test]
    fn zero_depth_gives_empty_cloud() {
        let c = backproject_rgbd(&[0; 15], None, &k(5, 3)).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn size_mismatch_is_rejected() {
        assert!(backproject_rgbd(&[0; 14], None, &k(5, 3)).is_err());
        assert!(backproject_rgbd(&[0; 15], Some(&[[0; 3]; 10]), &k(5, 3)).is_err());
    }

    #[test]
    fn rendered_plane_is_recovered() {
        // plane n·X = 800 rendered exactly, then rounded to whole millimetres
        let intr = Intrinsics { fx: 572.0, fy: 572.0, cx: 320.0, cy: 240.0, width: 640, height: 480 };
        let n = Vec3::new(0.2, -0.3, 1.0).normalize();
        let mut depth = vec![0u16; 640 * 480];
        for v in 0..480 {
            for u in 0..640 {
                let ray = Vec3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
                depth[v * 640 + u] = (800.0 / n.dot(&ray)).round() as u16;
            }
        }
        let c = backproject_rgbd(&depth, None, &intr).unwrap();
        assert_eq!(c.len(), 640 * 480);
        for p in c.positions() {
            // depth residual along the pixel ray, which is what rounding bounds
            let ray = p / p.z;
            assert!((p.z - 800.0 / n.dot(&ray)).abs() <= 0.5 + 1e-9);
        }
    }
}
