//! Scoring pose hypotheses against the observed scene.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::cloud::{Intrinsics, PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::model::ObjectModel;
use crate::spatial::NnIndex;
use crate::voting::PoseHypothesis;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VerificationParams {
    /// A model point counts as hidden only this far behind the scene (mm).
    pub occlusion_margin_mm: f64,
    /// Each scene point covers a square of `2·splat + 1` pixels.
    pub splat_radius_px: usize,
    pub use_color: bool,
}

impl Default for VerificationParams {
    fn default() -> Self {
        VerificationParams { occlusion_margin_mm: 5.0, splat_radius_px: 2, use_color: true }
    }
}

/// Nearest scene depth per pixel, `INFINITY` where nothing was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    pub intrinsics: Intrinsics,
    depth: Vec<f64>,
}

impl DepthBuffer {
    /// Splats camera-frame points into the image, keeping the minimum depth.
    pub fn render(points: &[Vec3], intrinsics: &Intrinsics, splat: usize) -> Self {
        let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
        let mut depth = vec![f64::INFINITY; w * h];
        let s = splat as isize;
        for p in points {
            let Some((u, v)) = intrinsics.pixel(p) else { continue };
            let (u, v) = (u as isize, v as isize);
            for y in (v - s).max(0)..=(v + s).min(h as isize - 1) {
                for x in (u - s).max(0)..=(u + s).min(w as isize - 1) {
                    let d = &mut depth[y as usize * w + x as usize];
                    if p.z < *d {
                        *d = p.z;
                    }
                }
            }
        }
        DepthBuffer { intrinsics: *intrinsics, depth }
    }

    /// Observed depth at the pixel of `p`, if `p` projects into the image
    /// onto an observed pixel.
    pub fn depth_at(&self, p: &Vec3) -> Option<f64> {
        let (u, v) = self.intrinsics.pixel(p)?;
        let d = self.depth[v * self.intrinsics.width as usize + u];
        d.is_finite().then_some(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Visibility {
    /// Indices of the kept points, ascending.
    pub visible: Vec<usize>,
    /// No depth buffer was available, so every point was kept.
    pub fallback: bool,
}

/// Keeps the points that are not more than `margin` behind the observed
/// depth at their pixel. Points off the image or on unobserved pixels are
/// kept.
pub fn remove_occluded_with(points: &[Vec3], buffer: Option<&DepthBuffer>, margin: f64) -> Visibility {
    match buffer {
        None => Visibility { visible: (0..points.len()).collect(), fallback: true },
        Some(b) => Visibility {
            visible: (0..points.len()).filter(|&i| b.depth_at(&points[i]).is_none_or(|d| points[i].z <= d + margin)).collect(),
            fallback: false,
        },
    }
}

/// As [`remove_occluded_with`], rendering the buffer from `scene`, which
/// must carry intrinsics (positions in the camera frame).
pub fn remove_occluded(points: &[Vec3], scene: &PointCloud, params: &VerificationParams) -> Visibility {
    let buffer = scene.intrinsics.as_ref().map(|k| DepthBuffer::render(scene.positions(), k, params.splat_radius_px));
    remove_occluded_with(points, buffer.as_ref(), params.occlusion_margin_mm)
}

/// RMS distance from each point to its nearest scene point; `INFINITY`
/// for an empty set.
pub fn geometric_loss(points: &[Vec3], scene_index: &NnIndex) -> f64 {
    if points.is_empty() || scene_index.is_empty() {
        return f64::INFINITY;
    }
    let sum: f64 = points.iter().map(|p| scene_index.nearest_squared(p).map(|(_, d2)| d2).unwrap_or(f64::INFINITY)).sum();
    (sum / points.len() as f64).sqrt()
}

/// RMS RGB distance between each point's color and the color of its
/// geometrically nearest scene point. Returns `(1.0, true)` when either side
/// lacks color.
pub fn color_loss(points: &[Vec3], colors: Option<&[Vec3]>, scene_index: &NnIndex, scene_colors: Option<&[Vec3]>) -> (f64, bool) {
    let (Some(colors), Some(scene_colors)) = (colors, scene_colors) else {
        return (1.0, true);
    };
    if points.is_empty() || scene_index.is_empty() {
        return (1.0, true);
    }
    let mut sum = 0.0;
    for (p, c) in points.iter().zip(colors) {
        let (id, _) = scene_index.nearest(p).expect("non-empty index");
        sum += (c - scene_colors[id]).norm_squared();
    }
    ((sum / points.len() as f64).sqrt(), false)
}

/// Geometric times color loss, divided by the voting score.
pub fn localization_loss(l_geometric: f64, l_color: f64, s_kde: f64) -> Result<f64> {
    if !(s_kde > 0.0) {
        return Err(Error::InvalidHypothesis(s_kde));
    }
    if l_geometric.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(l_geometric * l_color / s_kde)
}

/// Per-scene data shared by all verifications.
#[derive(Debug, Clone)]
pub struct SceneContext<'a> {
    pub scene: &'a PointCloud,
    pub index: NnIndex,
    pub depth: Option<DepthBuffer>,
}

impl<'a> SceneContext<'a> {
    pub fn new(scene: &'a PointCloud, params: &VerificationParams) -> Self {
        SceneContext {
            scene,
            index: NnIndex::new(scene.positions()),
            depth: scene.intrinsics.as_ref().map(|k| DepthBuffer::render(scene.positions(), k, params.splat_radius_px)),
        }
    }
}

/// Fills the losses of `h`: the model is posed, hidden points removed and
/// the remaining ones compared with the scene.
pub fn verify(h: &PoseHypothesis, model: &ObjectModel, ctx: &SceneContext<'_>, params: &VerificationParams) -> Result<PoseHypothesis> {
    let posed: Vec<Vec3> = model.cloud.positions().iter().map(|p| h.pose.apply(p)).collect();
    let vis = remove_occluded_with(&posed, ctx.depth.as_ref(), params.occlusion_margin_mm);
    let points: Vec<Vec3> = vis.visible.iter().map(|&i| posed[i]).collect();
    let l_geometric = geometric_loss(&points, &ctx.index);
    let (l_color, color_fallback) = if params.use_color {
        let colors: Option<Vec<Vec3>> = model.cloud.colors().map(|c| vis.visible.iter().map(|&i| c[i]).collect());
        color_loss(&points, colors.as_deref(), &ctx.index, ctx.scene.colors())
    } else {
        (1.0, true)
    };
    let l_loc = localization_loss(l_geometric, l_color, h.s_kde)?;
    Ok(PoseHypothesis { l_geometric, l_color, l_loc, color_fallback, occlusion_fallback: vis.fallback, ..*h })
}

/// Orders by localization loss; `NaN` and infinite losses go last.
pub fn rank_hypotheses(hs: &mut [PoseHypothesis]) {
    hs.sort_by(|a, b| {
        let key = |h: &PoseHypothesis| if h.l_loc.is_nan() { f64::INFINITY } else { h.l_loc };
        key(a).total_cmp(&key(b))
    });
}
