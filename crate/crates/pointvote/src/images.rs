//! Depth and color PNGs.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use pointvote_core::rgbd::backproject_rgbd;
use pointvote_core::{Intrinsics, PointCloud};

use crate::error::{io_at, Error, Result};

/// A 16-bit single-channel PNG of depths in millimetres.
pub fn read_depth_png(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    match img {
        image::DynamicImage::ImageLuma16(buf) => Ok((buf.width(), buf.height(), buf.into_raw())),
        other => Err(Error::format(path, format!("depth must be a 16-bit grayscale PNG, found {:?}", other.color()))),
    }
}

pub fn read_rgb_png(path: &Path) -> Result<(u32, u32, Vec<[u8; 3]>)> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok((w, h, img.pixels().map(|p| p.0).collect()))
}

pub fn write_depth_png(path: &Path, width: u32, height: u32, depth: &[u16]) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width, height, depth.to_vec()).ok_or_else(|| Error::format(path, "depth size differs from image size"))?;
    buf.save(path).map_err(|e| image_error(path, e))
}

pub fn write_rgb_png(path: &Path, width: u32, height: u32, rgb: &[[u8; 3]]) -> Result<()> {
    let raw: Vec<u8> = rgb.iter().flatten().copied().collect();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(width, height, raw).ok_or_else(|| Error::format(path, "color size differs from image size"))?;
    buf.save(path).map_err(|e| image_error(path, e))
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => io_at(path)(io),
        other => Error::format(path, other.to_string()),
    }
}

/// Depth PNG plus optional color PNG, backprojected with `intrinsics`.
pub fn load_rgbd(depth: &Path, rgb: Option<&Path>, intrinsics: &Intrinsics) -> Result<PointCloud> {
    let (w, h, d) = read_depth_png(depth)?;
    if (w, h) != (intrinsics.width, intrinsics.height) {
        return Err(Error::format(depth, format!("image is {w}×{h}, intrinsics say {}×{}", intrinsics.width, intrinsics.height)));
    }
    let colors = match rgb {
        Some(p) => {
            let (cw, ch, c) = read_rgb_png(p)?;
            if (cw, ch) != (w, h) {
                return Err(Error::format(p, "color and depth images differ in size"));
            }
            Some(c)
        }
        None => None,
    };
    Ok(backproject_rgbd(&d, colors.as_deref(), intrinsics)?)
}

/// Z-buffer rendering of a camera-frame cloud: nearest point per pixel,
/// depth rounded to whole millimetres (0 where empty).
pub fn render_depth(cloud: &PointCloud, intrinsics: &Intrinsics) -> (Vec<u16>, Vec<[u8; 3]>) {
    let mut depth = vec![0u16; intrinsics.pixel_count()];
    let mut nearest = vec![f64::INFINITY; intrinsics.pixel_count()];
    let mut rgb = vec![[0u8; 3]; intrinsics.pixel_count()];
    for (i, p) in cloud.positions().iter().enumerate() {
        let Some((u, v)) = intrinsics.pixel(p) else { continue };
        let at = v * intrinsics.width as usize + u;
        if p.z < nearest[at] && p.z.round() >= 1.0 && p.z.round() <= u16::MAX as f64 {
            nearest[at] = p.z;
            depth[at] = p.z.round() as u16;
            if let Some(c) = cloud.colors() {
                rgb[at] = [c[i].x, c[i].y, c[i].z].map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    (depth, rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_and_backprojection() {
        let dir = tempfile::tempdir().unwrap();
        let k = Intrinsics { fx: 500.0, fy: 500.0, cx: 1.0, cy: 1.0, width: 3, height: 2 };
        let depth = vec![0, 1000, 1200, 800, 0, 65535];
        let rgb = vec![[255, 0, 0]; 6];
        write_depth_png(&dir.path().join("d.png"), 3, 2, &depth).unwrap();
        write_rgb_png(&dir.path().join("c.png"), 3, 2, &rgb).unwrap();
        assert_eq!(read_depth_png(&dir.path().join("d.png")).unwrap().2, depth);
        let cloud = load_rgbd(&dir.path().join("d.png"), Some(&dir.path().join("c.png")), &k).unwrap();
        assert_eq!(cloud.len(), 4);
        assert_eq!(cloud.positions()[0].z, 1000.0);
        assert_eq!(cloud.colors().unwrap()[0].x, 1.0);
    }

    #[test]
    fn color_png_is_not_depth() {
        let dir = tempfile::tempdir().unwrap();
        write_rgb_png(&dir.path().join("c.png"), 1, 1, &[[1, 2, 3]]).unwrap();
        assert!(matches!(read_depth_png(&dir.path().join("c.png")), Err(Error::Format { .. })));
        assert!(matches!(read_depth_png(&dir.path().join("missing.png")), Err(Error::Io { .. })));
    }
}
