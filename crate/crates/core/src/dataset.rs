//! Training data: scene labeling, spherical example extraction, hard/easy
//! negatives and augmentation.
//!
//! Examples are stored in `f32` to keep a few hundred thousand of them in
//! memory; all geometry up to the final store is done in `f64`.

use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::cloud::{PointCloud, Vec3};
use crate::error::{invalid, Error, Result};
use crate::model::ObjectModel;
use crate::pose::RigidPose;
use crate::spatial::NnIndex;
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointLabel {
    Background,
    /// Too close to the object to be background, too far to trust.
    Discard,
    /// Keypoint id in `1..=K`.
    Foreground(u16),
}

impl PointLabel {
    /// Segmentation class: keypoint id, or 0 for background and discard.
    pub fn class(self) -> u16 {
        match self {
            PointLabel::Foreground(k) => k,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneLabels {
    pub labels: Vec<PointLabel>,
    /// Distance of each scene point to the posed model (mm).
    pub distances: Vec<f64>,
}

impl SceneLabels {
    pub fn count(&self, pred: impl Fn(PointLabel) -> bool) -> usize {
        self.labels.iter().filter(|&&l| pred(l)).count()
    }

    pub fn foreground_count(&self) -> usize {
        self.count(|l| matches!(l, PointLabel::Foreground(_)))
    }
}

/// Which channels receive jitter noise.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct JitterChannels {
    pub position: bool,
    pub normal: bool,
    pub curvature: bool,
    pub color: bool,
}

impl Default for JitterChannels {
    fn default() -> Self {
        JitterChannels { position: true, normal: true, curvature: true, color: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DatasetParams {
    pub points_per_example: usize,
    /// Sphere radius as a multiple of the model diameter.
    pub sphere_factor: f64,
    /// Points at most this far from the posed model are foreground (mm).
    pub foreground_mm: f64,
    /// Points beyond this are background; in between they are discarded (mm).
    pub background_mm: f64,
    pub positives: usize,
    pub easy_negatives: usize,
    pub hard_negatives: usize,
    /// Hard negatives are centered between these multiples of the diameter
    /// from the object centroid (lower bound exclusive).
    pub hard_band: (f64, f64),
    /// 15/15/30 augmentation split instead of the literal 20/20/20.
    pub balanced: bool,
    pub background_swap_multiplier: usize,
    pub jitter_sigma: f64,
    pub jitter_channels: JitterChannels,
    /// Per-axis object shift in background swaps, times the diameter.
    pub object_shift_factor: f64,
    /// Per-axis background shift, times the diameter.
    pub background_shift_factor: f64,
    pub segment_drop_prob: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            points_per_example: 2048,
            sphere_factor: 0.6,
            foreground_mm: 10.0,
            background_mm: 20.0,
            positives: 20,
            easy_negatives: 20,
            hard_negatives: 10,
            hard_band: (0.6, 1.2),
            balanced: true,
            background_swap_multiplier: 1,
            jitter_sigma: 0.01,
            jitter_channels: JitterChannels::default(),
            object_shift_factor: 0.05,
            background_shift_factor: 0.5,
            segment_drop_prob: 0.2,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_example == 0 {
            return Err(invalid("points_per_example must be positive"));
        }
        if !(self.sphere_factor > 0.0) {
            return Err(invalid("sphere_factor must be positive"));
        }
        if !(self.foreground_mm >= 0.0 && self.background_mm >= self.foreground_mm) {
            return Err(invalid("labeling thresholds must satisfy 0 <= foreground <= background"));
        }
        if !(self.hard_band.0 >= 0.0 && self.hard_band.1 > self.hard_band.0) {
            return Err(invalid("hard band must be an increasing pair"));
        }
        if !(self.jitter_sigma >= 0.0) || !(0.0..=1.0).contains(&self.segment_drop_prob) {
            return Err(invalid("jitter sigma and segment drop probability out of range"));
        }
        Ok(())
    }

    /// Sizes of the three augmentation groups: background swaps,
    /// object-only positives and mixed-background negatives.
    pub fn augmentation_split(&self) -> (usize, usize, usize) {
        let m = self.background_swap_multiplier;
        if self.balanced {
            (15 * m, 15, 15 * m + 15)
        } else {
            (20 * m, 20, 20)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExampleMeta {
    pub scene_id: u32,
    /// Sphere center in scene coordinates.
    pub anchor: [f64; 3],
}

/// A centered point set with classification and segmentation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub positions: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub curvatures: Vec<f32>,
    pub colors: Option<Vec<[f32; 3]>>,
    pub seg_labels: Vec<u16>,
    pub class_label: u8,
    pub meta: ExampleMeta,
}

impl LabeledExample {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn has_color(&self) -> bool {
        self.colors.is_some()
    }

    /// Centroid computed in `f64`.
    pub fn centroid(&self) -> Vec3 {
        let sum = self.positions.iter().fold(Vec3::zeros(), |s, p| s + widen(p));
        sum / self.positions.len().max(1) as f64
    }
}

fn widen(p: &[f32; 3]) -> Vec3 {
    Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
}

fn narrow(v: &Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

/// Labels every scene point by its distance to the model placed at `gt`.
/// Foreground points carry the id of the nearest posed keypoint.
pub fn label_scene(
    scene: &PointCloud,
    model: &ObjectModel,
    gt: &RigidPose,
    params: &DatasetParams,
) -> Result<SceneLabels> {
    let posed: Vec<Vec3> = model.cloud.positions().iter().map(|p| gt.apply(p)).collect();
    let surface = NnIndex::new(&posed);
    let kps: Vec<Vec3> = model.keypoints.iter().map(|k| gt.apply(&k.position)).collect();
    if kps.is_empty() {
        return Err(invalid("model has no keypoints"));
    }
    let keypoints = NnIndex::new(&kps);
    let mut labels = Vec::with_capacity(scene.len());
    let mut distances = Vec::with_capacity(scene.len());
    for p in scene.positions() {
        let (_, d) = surface.nearest(p)?;
        let label = if d <= params.foreground_mm {
            PointLabel::Foreground(keypoints.nearest(p)?.0 as u16 + 1)
        } else if d <= params.background_mm {
            PointLabel::Discard
        } else {
            PointLabel::Background
        };
        labels.push(label);
        distances.push(d);
    }
    Ok(SceneLabels { labels, distances })
}

/// Indices of a uniform sample of `n` points from `candidates`: without
/// replacement when enough are available, otherwise every candidate once
/// followed by draws with replacement.
pub fn sample_fill(candidates: &[usize], n: usize, rng: &mut Rng) -> Vec<usize> {
    if candidates.is_empty() {
        return Vec::new();
    }
    if candidates.len() >= n {
        return index::sample(rng, candidates.len(), n).into_iter().map(|i| candidates[i]).collect();
    }
    let mut out = candidates.to_vec();
    while out.len() < n {
        out.push(candidates[rng.random_range(0..candidates.len())]);
    }
    out
}

/// Builds an example from scene points, centering them on their centroid.
pub fn example_from_points(
    scene: &PointCloud,
    indices: &[usize],
    seg: impl Fn(usize) -> u16,
    class_label: u8,
    meta: ExampleMeta,
) -> LabeledExample {
    let pos = scene.positions();
    let c = indices.iter().fold(Vec3::zeros(), |s, &i| s + pos[i]) / indices.len().max(1) as f64;
    LabeledExample {
        positions: indices.iter().map(|&i| narrow(&(pos[i] - c))).collect(),
        normals: match scene.normals() {
            Some(n) => indices.iter().map(|&i| narrow(&n[i])).collect(),
            None => alloc::vec![[0.0; 3]; indices.len()],
        },
        curvatures: match scene.curvatures() {
            Some(k) => indices.iter().map(|&i| k[i] as f32).collect(),
            None => alloc::vec![0.0; indices.len()],
        },
        colors: scene.colors().map(|col| indices.iter().map(|&i| narrow(&col[i])).collect()),
        seg_labels: indices.iter().map(|&i| seg(i)).collect(),
        class_label,
        meta,
    }
}

/// Samples the labeled sphere around `center`, skipping discarded points.
pub fn extract_example(
    scene: &PointCloud,
    scene_index: &NnIndex,
    labels: &SceneLabels,
    center: &Vec3,
    radius: f64,
    n: usize,
    class_label: u8,
    meta: ExampleMeta,
    rng: &mut Rng,
) -> Result<LabeledExample> {
    let inside: Vec<usize> = scene_index
        .within_radius(center, radius)
        .into_iter()
        .filter(|&i| labels.labels[i] != PointLabel::Discard)
        .collect();
    if inside.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let picked = sample_fill(&inside, n, rng);
    Ok(example_from_points(scene, &picked, |i| labels.labels[i].class(), class_label, meta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceExamples {
    /// Positives, then easy negatives, then hard negatives.
    pub examples: Vec<LabeledExample>,
    pub positives: usize,
    pub easy: usize,
    pub hard: usize,
    /// Shortfall against the requested counts when candidates ran out.
    pub missing_easy: usize,
    pub missing_hard: usize,
}

/// Picks up to `n` distinct entries of `pool` uniformly.
fn choose(pool: &[usize], n: usize, rng: &mut Rng) -> Vec<usize> {
    let n = n.min(pool.len());
    index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
}

/// Positive, easy-negative and hard-negative spheres for one annotated
/// object instance.
pub fn generate_instance_examples(
    scene: &PointCloud,
    scene_index: &NnIndex,
    labels: &SceneLabels,
    model: &ObjectModel,
    gt: &RigidPose,
    params: &DatasetParams,
    scene_id: u32,
    rng: &mut Rng,
) -> Result<InstanceExamples> {
    let radius = model.sphere_radius(params.sphere_factor);
    let n = params.points_per_example;
    let pos = scene.positions();
    let fg: Vec<usize> = (0..scene.len()).filter(|&i| matches!(labels.labels[i], PointLabel::Foreground(_))).collect();
    if fg.len() < params.positives.max(1) {
        return Err(Error::InsufficientForeground { found: fg.len(), required: params.positives.max(1) });
    }
    let bg: Vec<usize> = (0..scene.len()).filter(|&i| labels.labels[i] == PointLabel::Background).collect();

    let meta = |i: usize| ExampleMeta { scene_id, anchor: [pos[i].x, pos[i].y, pos[i].z] };
    let mut examples = Vec::with_capacity(params.positives + params.easy_negatives + params.hard_negatives);

    for c in choose(&fg, params.positives, rng) {
        examples.push(extract_example(scene, scene_index, labels, &pos[c], radius, n, 1, meta(c), rng)?);
    }

    // a sphere holds no foreground iff its center is farther than the radius
    // from every foreground point
    let fg_positions: Vec<Vec3> = fg.iter().map(|&i| pos[i]).collect();
    let fg_index = NnIndex::new(&fg_positions);
    let mut easy_pool = Vec::new();
    for &i in &bg {
        if fg_index.nearest_squared(&pos[i])?.1 > radius * radius {
            easy_pool.push(i);
        }
    }
    let easy = choose(&easy_pool, params.easy_negatives, rng);
    for &c in &easy {
        examples.push(extract_example(scene, scene_index, labels, &pos[c], radius, n, 0, meta(c), rng)?);
    }

    let object_center = crate::cloud::centroid(model.cloud.positions()).map(|c| gt.apply(&c)).unwrap_or(*gt.translation());
    let (lo, hi) = (params.hard_band.0 * model.diameter, params.hard_band.1 * model.diameter);
    let hard_pool: Vec<usize> = bg
        .iter()
        .copied()
        .filter(|&i| {
            let d = (pos[i] - object_center).norm();
            d > lo && d <= hi
        })
        .collect();
    let hard = choose(&hard_pool, params.hard_negatives, rng);
    for &c in &hard {
        examples.push(extract_example(scene, scene_index, labels, &pos[c], radius, n, 0, meta(c), rng)?);
    }

    Ok(InstanceExamples {
        positives: params.positives,
        easy: easy.len(),
        hard: hard.len(),
        missing_easy: params.easy_negatives - easy.len(),
        missing_hard: params.hard_negatives - hard.len(),
        examples,
    })
}

/// Points of an example in working precision.
#[derive(Debug, Clone, Default)]
struct Patch {
    pos: Vec<Vec3>,
    nrm: Vec<Vec3>,
    curv: Vec<f64>,
    col: Option<Vec<Vec3>>,
    seg: Vec<u16>,
}

impl Patch {
    fn from_example(e: &LabeledExample, keep: impl Fn(usize) -> bool) -> Patch {
        let idx: Vec<usize> = (0..e.len()).filter(|&i| keep(i)).collect();
        Patch {
            pos: idx.iter().map(|&i| widen(&e.positions[i])).collect(),
            nrm: idx.iter().map(|&i| widen(&e.normals[i])).collect(),
            curv: idx.iter().map(|&i| e.curvatures[i] as f64).collect(),
            col: e.colors.as_ref().map(|c| idx.iter().map(|&i| widen(&c[i])).collect()),
            seg: idx.iter().map(|&i| e.seg_labels[i]).collect(),
        }
    }

    fn shift(&mut self, offset: &Vec3) {
        for p in &mut self.pos {
            *p += offset;
        }
    }

    fn extend(&mut self, other: Patch) {
        self.pos.extend(other.pos);
        self.nrm.extend(other.nrm);
        self.curv.extend(other.curv);
        match (&mut self.col, other.col) {
            (Some(a), Some(b)) => a.extend(b),
            _ => self.col = None,
        }
        self.seg.extend(other.seg);
    }

    /// Cuts to the sphere about the origin, resamples to `n` points and
    /// centers. `None` if nothing is left inside the sphere.
    fn finish(&self, radius: f64, n: usize, class_label: u8, meta: ExampleMeta, rng: &mut Rng) -> Option<LabeledExample> {
        let inside: Vec<usize> = (0..self.pos.len()).filter(|&i| self.pos[i].norm_squared() <= radius * radius).collect();
        let picked = sample_fill(&inside, n, rng);
        if picked.is_empty() {
            return None;
        }
        let c = picked.iter().fold(Vec3::zeros(), |s, &i| s + self.pos[i]) / picked.len() as f64;
        Some(LabeledExample {
            positions: picked.iter().map(|&i| narrow(&(self.pos[i] - c))).collect(),
            normals: picked.iter().map(|&i| narrow(&self.nrm[i])).collect(),
            curvatures: picked.iter().map(|&i| self.curv[i] as f32).collect(),
            colors: self.col.as_ref().map(|col| picked.iter().map(|&i| narrow(&col[i])).collect()),
            seg_labels: picked.iter().map(|&i| self.seg[i]).collect(),
            class_label,
            meta,
        })
    }
}

fn uniform_offset(scale: f64, rng: &mut Rng) -> Vec3 {
    Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)) * scale
}

/// Keypoint segments to drop: each independently with probability `p`,
/// never more than half of those present.
fn dropped_segments(seg: &[u16], p: f64, rng: &mut Rng) -> Vec<u16> {
    let mut present: Vec<u16> = seg.iter().copied().filter(|&s| s > 0).collect();
    present.sort_unstable();
    present.dedup();
    let mut drop: Vec<u16> = present.iter().copied().filter(|_| rng.random_bool(p)).collect();
    let cap = present.len() / 2;
    if drop.len() > cap {
        drop.shuffle(rng);
        drop.truncate(cap);
        drop.sort_unstable();
    }
    drop
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    /// Background swaps, then object-only positives, then mixed negatives.
    pub examples: Vec<LabeledExample>,
    pub background_swaps: usize,
    pub object_only: usize,
    pub mixed_negatives: usize,
}

/// Synthesizes extra examples from one instance's positive and negative
/// spheres.
pub fn augment(
    instance: &InstanceExamples,
    diameter: f64,
    params: &DatasetParams,
    rng: &mut Rng,
) -> Augmented {
    let radius = params.sphere_factor * diameter;
    let n = params.points_per_example;
    let positives: Vec<&LabeledExample> = instance.examples.iter().filter(|e| e.class_label == 1).collect();
    let easy: Vec<&LabeledExample> = instance.examples[instance.positives..instance.positives + instance.easy].iter().collect();
    // backgrounds from hard negatives stand in when no easy negative exists
    let backgrounds: Vec<&LabeledExample> =
        if easy.is_empty() { instance.examples[instance.positives..].iter().collect() } else { easy };
    let background_of = |e: &LabeledExample| Patch::from_example(e, |i| e.seg_labels[i] == 0);

    let (n_swap, n_object, n_mixed) = params.augmentation_split();
    let mut out = Augmented { examples: Vec::new(), background_swaps: 0, object_only: 0, mixed_negatives: 0 };
    if positives.is_empty() {
        return out;
    }

    for _ in 0..n_swap {
        if backgrounds.is_empty() {
            break;
        }
        let pos = positives[rng.random_range(0..positives.len())];
        let bg = backgrounds[rng.random_range(0..backgrounds.len())];
        let drop = dropped_segments(&pos.seg_labels, params.segment_drop_prob, rng);
        let mut object = Patch::from_example(pos, |i| pos.seg_labels[i] > 0 && !drop.contains(&pos.seg_labels[i]));
        if object.pos.is_empty() {
            object = Patch::from_example(pos, |i| pos.seg_labels[i] > 0);
        }
        object.shift(&uniform_offset(params.object_shift_factor * diameter, rng));
        let mut background = background_of(bg);
        background.shift(&uniform_offset(params.background_shift_factor * diameter, rng));
        object.extend(background);
        if let Some(e) = object.finish(radius, n, 1, pos.meta, rng) {
            out.examples.push(e);
            out.background_swaps += 1;
        }
    }

    for _ in 0..n_object {
        let pos = positives[rng.random_range(0..positives.len())];
        let object = Patch::from_example(pos, |i| pos.seg_labels[i] > 0);
        if let Some(e) = object.finish(f64::INFINITY, n, 1, pos.meta, rng) {
            out.examples.push(e);
            out.object_only += 1;
        }
    }

    for _ in 0..n_mixed {
        if backgrounds.is_empty() {
            break;
        }
        let a = backgrounds[rng.random_range(0..backgrounds.len())];
        let b = backgrounds[rng.random_range(0..backgrounds.len())];
        let mut mixed = background_of(a);
        let mut other = background_of(b);
        other.shift(&uniform_offset(params.background_shift_factor * diameter, rng));
        mixed.extend(other);
        if let Some(e) = mixed.finish(radius, n, 0, a.meta, rng) {
            out.examples.push(e);
            out.mixed_negatives += 1;
        }
    }
    out
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma` to the
/// selected channels, each in its own unit. Normals are re-normalized,
/// curvature and color clamped to `[0, 1]`. Positions are not re-centered.
pub fn jitter(example: &mut LabeledExample, sigma: f64, channels: JitterChannels, rng: &mut Rng) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let noise = |rng: &mut Rng| normal.sample(rng) as f32;
    if channels.position {
        for p in &mut example.positions {
            for c in p.iter_mut() {
                *c += noise(rng);
            }
        }
    }
    if channels.normal {
        for v in &mut example.normals {
            let mut w = widen(v);
            w += Vec3::new(noise(rng) as f64, noise(rng) as f64, noise(rng) as f64);
            let len = w.norm();
            if len > 0.0 {
                *v = narrow(&(w / len));
            }
        }
    }
    if channels.curvature {
        for k in &mut example.curvatures {
            *k = (*k + noise(rng)).clamp(0.0, 1.0);
        }
    }
    if channels.color {
        if let Some(colors) = &mut example.colors {
            for col in colors {
                for c in col.iter_mut() {
                    *c = (*c + noise(rng)).clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// Shifts positions so their centroid is the origin.
pub fn recenter(example: &mut LabeledExample) {
    let c = example.centroid();
    for p in &mut example.positions {
        *p = narrow(&(widen(p) - c));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneExamples {
    pub examples: Vec<LabeledExample>,
    pub missing_easy: usize,
    pub missing_hard: usize,
    pub labels: SceneLabels,
}

/// Full recipe for one annotated scene: instance examples plus
/// augmentation, all jittered. `rng` should be dedicated to this scene.
pub fn prepare_scene(
    scene: &PointCloud,
    model: &ObjectModel,
    gt: &RigidPose,
    params: &DatasetParams,
    scene_id: u32,
    rng: &mut Rng,
) -> Result<SceneExamples> {
    params.validate()?;
    if scene.normals().is_none() {
        return Err(invalid("scene cloud needs normals"));
    }
    let labels = label_scene(scene, model, gt, params)?;
    let index = NnIndex::new(scene.positions());
    let instance = generate_instance_examples(scene, &index, &labels, model, gt, params, scene_id, rng)?;
    let extra = augment(&instance, model.diameter, params, rng);
    let mut examples = instance.examples;
    examples.extend(extra.examples);
    for e in &mut examples {
        jitter(e, params.jitter_sigma, params.jitter_channels, rng);
        recenter(e);
    }
    Ok(SceneExamples { examples, missing_easy: instance.missing_easy, missing_hard: instance.missing_hard, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Symmetry;
    use crate::normals::estimate_normals;
    use crate::shapes::{self, Solid};
    use rand::SeedableRng;

    fn small_model() -> ObjectModel {
        ObjectModel::build(shapes::demo_object(3.0), 25.0, Symmetry::None).unwrap()
    }

    /// Object resting on a floor patch with a box of clutter to one side.
    fn toy_scene(model: &ObjectModel, gt: &RigidPose) -> PointCloud {
        let mut scene = model.cloud.transformed(gt);
        let floor = Solid::Box { center: Vec3::new(0.0, 0.0, -40.0), half: Vec3::new(260.0, 260.0, 2.0) };
        let clutter = Solid::Box { center: Vec3::new(180.0, 150.0, 0.0), half: Vec3::new(30.0, 30.0, 30.0) };
        let rest = shapes::sample_union(&[(floor, Vec3::repeat(0.4)), (clutter, Vec3::new(0.2, 0.7, 0.3))], 4.0, |_| 1.0);
        scene.append(&rest).unwrap();
        let scene = PointCloud::from_positions(scene.positions().to_vec());
        estimate_normals(&scene, 10.0, &Vec3::new(0.0, 0.0, 1000.0)).unwrap()
    }

    #[test]
    fn exact_copy_is_all_foreground() {
        let model = small_model();
        let gt = RigidPose::from_axis_angle(&Vec3::z(), 0.3, Vec3::new(5.0, 0.0, 10.0));
        let scene = model.cloud.transformed(&gt);
        let labels = label_scene(&scene, &model, &gt, &DatasetParams::default()).unwrap();
        assert_eq!(labels.foreground_count(), scene.len());
    }

    #[test]
    fn far_copy_is_all_background() {
        let model = small_model();
        let far = RigidPose::from_translation(Vec3::new(10.0 * model.diameter, 0.0, 0.0));
        let scene = model.cloud.transformed(&far);
        let labels = label_scene(&scene, &model, &RigidPose::identity(), &DatasetParams::default()).unwrap();
        assert_eq!(labels.count(|l| l == PointLabel::Background), scene.len());
    }

    #[test]
    fn labels_match_linear_scan() {
        let model = small_model();
        let gt = RigidPose::from_axis_angle(&Vec3::z(), 0.7, Vec3::zeros());
        let scene = toy_scene(&model, &gt);
        let labels = label_scene(&scene, &model, &gt, &DatasetParams::default()).unwrap();
        let posed: Vec<Vec3> = model.cloud.positions().iter().map(|p| gt.apply(p)).collect();
        for (i, p) in scene.positions().iter().enumerate().step_by(7) {
            let d = posed.iter().map(|q| (q - p).norm()).fold(f64::INFINITY, f64::min);
            let expected = if d <= 10.0 {
                "fg"
            } else if d <= 20.0 {
                "discard"
            } else {
                "bg"
            };
            let got = match labels.labels[i] {
                PointLabel::Foreground(_) => "fg",
                PointLabel::Discard => "discard",
                PointLabel::Background => "bg",
            };
            assert_eq!(got, expected, "point {i} at {d}");
        }
    }

    fn line_scene(n: usize) -> (PointCloud, SceneLabels) {
        let pts = (0..n).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let cloud = PointCloud::from_positions(pts);
        let labels = SceneLabels { labels: alloc::vec![PointLabel::Background; n], distances: alloc::vec![100.0; n] };
        (cloud, labels)
    }

    #[test]
    fn exact_fit_takes_each_point_once() {
        let (cloud, labels) = line_scene(2048);
        let index = NnIndex::new(cloud.positions());
        let mut rng = Rng::seed_from_u64(1);
        let e = extract_example(&cloud, &index, &labels, &Vec3::zeros(), 1e6, 2048, 0, ExampleMeta::default(), &mut rng).unwrap();
        let mut xs: Vec<i64> = e.positions.iter().map(|p| ((p[0] as f64 + 10.235) * 100.0).round() as i64).collect();
        xs.sort_unstable();
        xs.dedup();
        assert_eq!(xs.len(), 2048);
    }

    #[test]
    fn sparse_sphere_is_filled_from_its_points() {
        let (cloud, labels) = line_scene(100);
        let index = NnIndex::new(cloud.positions());
        let mut rng = Rng::seed_from_u64(2);
        let picked = sample_fill(&(0..100).collect::<Vec<_>>(), 2048, &mut rng);
        assert_eq!(picked.len(), 2048);
        assert!(picked.iter().all(|&i| i < 100));
        let e = extract_example(&cloud, &index, &labels, &Vec3::zeros(), 1e6, 2048, 0, ExampleMeta::default(), &mut rng).unwrap();
        assert_eq!(e.len(), 2048);
    }

    #[test]
    fn empty_sphere_errors() {
        let (cloud, labels) = line_scene(10);
        let index = NnIndex::new(cloud.positions());
        let mut rng = Rng::seed_from_u64(3);
        let far = Vec3::new(1e4, 0.0, 0.0);
        let r = extract_example(&cloud, &index, &labels, &far, 5.0, 2048, 0, ExampleMeta::default(), &mut rng);
        assert_eq!(r, Err(Error::EmptyNeighborhood));
    }

    #[test]
    fn large_sphere_sample_is_a_subset() {
        let mut rng = Rng::seed_from_u64(4);
        let pool: Vec<usize> = (0..10_000).map(|i| i * 3).collect();
        let picked = sample_fill(&pool, 2048, &mut rng);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 2048);
        assert!(picked.iter().all(|i| i % 3 == 0 && *i < 30_000));
    }

    #[test]
    fn instance_split_and_invariants() {
        let model = small_model();
        let gt = RigidPose::from_axis_angle(&Vec3::z(), 1.1, Vec3::new(-60.0, -40.0, 0.0));
        let scene = toy_scene(&model, &gt);
        let params = DatasetParams::default();
        let labels = label_scene(&scene, &model, &gt, &params).unwrap();
        let index = NnIndex::new(scene.positions());
        let mut rng = Rng::seed_from_u64(5);
        let inst = generate_instance_examples(&scene, &index, &labels, &model, &gt, &params, 0, &mut rng).unwrap();
        assert_eq!((inst.positives, inst.easy, inst.hard), (20, 20, 10));
        assert_eq!(inst.examples.len(), 50);
        for (k, e) in inst.examples.iter().enumerate() {
            assert_eq!(e.len(), 2048);
            assert_eq!(e.seg_labels.len(), 2048);
            assert_eq!(e.class_label, u8::from(k < 20));
            assert!(e.centroid().norm() < 1e-4);
            if (20..40).contains(&k) {
                assert!(e.seg_labels.iter().all(|&s| s == 0));
            }
        }
        let aug = augment(&inst, model.diameter, &params, &mut rng);
        assert_eq!((aug.background_swaps, aug.object_only, aug.mixed_negatives), (15, 15, 30));
        let positives = aug.examples.iter().filter(|e| e.class_label == 1).count();
        assert_eq!(positives, 30);
        for e in &aug.examples[15..30] {
            assert!(e.seg_labels.iter().all(|&s| s > 0));
        }
        for e in &aug.examples[30..] {
            assert!(e.seg_labels.iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn literal_split_when_unbalanced() {
        let params = DatasetParams { balanced: false, ..Default::default() };
        assert_eq!(params.augmentation_split(), (20, 20, 20));
        let tripled = DatasetParams { background_swap_multiplier: 3, ..Default::default() };
        assert_eq!(tripled.augmentation_split(), (45, 15, 60));
    }

    #[test]
    fn object_filling_the_scene_reports_missing_negatives() {
        let model = small_model();
        let gt = RigidPose::identity();
        let scene = estimate_normals(&model.cloud, 10.0, &Vec3::new(0.0, 0.0, 1000.0)).unwrap();
        let params = DatasetParams::default();
        let labels = label_scene(&scene, &model, &gt, &params).unwrap();
        let index = NnIndex::new(scene.positions());
        let mut rng = Rng::seed_from_u64(6);
        let inst = generate_instance_examples(&scene, &index, &labels, &model, &gt, &params, 0, &mut rng).unwrap();
        assert_eq!(inst.missing_easy, 20);
        assert_eq!(inst.missing_hard, 10);
    }

    #[test]
    fn too_little_foreground_errors() {
        let model = small_model();
        let far = RigidPose::from_translation(Vec3::new(1e4, 0.0, 0.0));
        let scene = estimate_normals(&model.cloud.transformed(&far), 10.0, &Vec3::zeros()).unwrap();
        let params = DatasetParams::default();
        let labels = label_scene(&scene, &model, &RigidPose::identity(), &params).unwrap();
        let index = NnIndex::new(scene.positions());
        let mut rng = Rng::seed_from_u64(7);
        let r = generate_instance_examples(&scene, &index, &labels, &model, &RigidPose::identity(), &params, 0, &mut rng);
        assert!(matches!(r, Err(Error::InsufficientForeground { found: 0, .. })));
    }

    #[test]
    fn jitter_has_requested_spread() {
        let mut rng = Rng::seed_from_u64(8);
        let n = 100_000 / 3 + 1;
        let mut e = LabeledExample {
            positions: alloc::vec![[10.0, -20.0, 30.0]; n],
            normals: alloc::vec![[0.0, 0.0, 1.0]; n],
            curvatures: alloc::vec![0.5; n],
            colors: None,
            seg_labels: alloc::vec![0; n],
            class_label: 0,
            meta: ExampleMeta::default(),
        };
        let before = e.positions.clone();
        jitter(&mut e, 0.01, JitterChannels::default(), &mut rng);
        for axis in 0..3 {
            let ms: f64 = before.iter().zip(&e.positions).map(|(a, b)| ((b[axis] - a[axis]) as f64).powi(2)).sum::<f64>() / n as f64;
            let rms = ms.sqrt();
            assert!((rms - 0.01).abs() < 0.001, "axis {axis}: {rms}");
        }
        for v in &e.normals {
            assert!((widen(v).norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn prepared_scene_is_deterministic_and_clean() {
        let model = small_model();
        let gt = RigidPose::from_axis_angle(&Vec3::z(), 0.2, Vec3::new(-50.0, -50.0, 0.0));
        let scene = toy_scene(&model, &gt);
        let params = DatasetParams::default();
        let a = prepare_scene(&scene, &model, &gt, &params, 3, &mut crate::sub_rng(11, 3)).unwrap();
        let b = prepare_scene(&scene, &model, &gt, &params, 3, &mut crate::sub_rng(11, 3)).unwrap();
        assert_eq!(a.examples.len(), 110);
        assert_eq!(a.examples, b.examples);
        for e in &a.examples {
            assert!(e.centroid().norm() < 1e-4);
            assert!(e.seg_labels.iter().all(|&s| (s as usize) <= model.keypoint_count()));
        }
    }
}
