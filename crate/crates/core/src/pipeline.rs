//! End-to-end detection and evaluation.
//!
//! Stages, named A to F in debug output: anchors (A), anchor classification
//! (B), the top-scoring spheres (C), their segmentation (D), voted pose
//! hypotheses (E) and the refined, verified best pose (F).

use alloc::string::String;
use alloc::vec::Vec;

use crate::cloud::{PointCloud, Vec3};
use crate::dataset::{example_from_points, label_scene, sample_fill, DatasetParams, ExampleMeta};
use crate::error::{Error, Result};
use crate::icp::{default_schedule, icp_refine, IcpLevel};
use crate::metrics::{add_metric, adds_metric};
use crate::model::ObjectModel;
use crate::network::Weights;
use crate::normals::estimate_normals;
use crate::pose::RigidPose;
use crate::verify::{remove_occluded_with, verify, SceneContext, VerificationParams};
use crate::voting::{correspondences_from_labels, correspondences_from_segmentation, estimate_pose_detailed, Correspondence, PoseHypothesis, VotingParams};
use crate::voxel::voxel_downsample;
use crate::sub_rng;

/// Source of wall-clock time for stage timings.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Clock that always reads zero, for `no_std` use and reproducible output.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PipelineConfig {
    /// Voxel size of the anchor grid (mm).
    pub anchor_leaf_mm: f64,
    /// Sphere radius as a fraction of the model diameter.
    pub sphere_factor: f64,
    pub points_per_sphere: usize,
    /// Anchors whose sphere holds fewer points are not classified.
    pub min_sphere_points: usize,
    /// Number of best-scoring spheres that are segmented.
    pub top_k: usize,
    /// Radius for scene normals when the cloud has none (mm).
    pub normal_radius_mm: f64,
    pub voting: VotingParams,
    pub icp: Vec<IcpLevel>,
    /// Visible model points used by ICP, at most.
    pub icp_max_points: usize,
    pub verification: VerificationParams,
    /// Seeds the sphere sampling.
    pub seed: u64,
    /// Keep per-stage data for debug output.
    pub collect_trace: bool,
    /// Also keep every pose vote (large).
    pub collect_votes: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            anchor_leaf_mm: 25.0,
            sphere_factor: 0.6,
            points_per_sphere: 2048,
            min_sphere_points: 64,
            top_k: 16,
            normal_radius_mm: 10.0,
            voting: VotingParams::default(),
            icp: default_schedule(),
            icp_max_points: 1000,
            verification: VerificationParams::default(),
            seed: 0,
            collect_trace: false,
            collect_votes: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.anchor_leaf_mm > 0.0 && self.sphere_factor > 0.0 && self.normal_radius_mm > 0.0) {
            return bad("anchor leaf, sphere factor and normal radius must be positive");
        }
        if self.points_per_sphere == 0 || self.top_k == 0 || self.icp_max_points < 3 {
            return bad("sphere size, top_k and ICP point budget must be positive");
        }
        if !(self.verification.occlusion_margin_mm >= 0.0) {
            return bad("occlusion margin must be non-negative");
        }
        Ok(())
    }
}

/// Milliseconds spent per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageTimings {
    pub normals: f64,
    pub anchors: f64,
    pub classification: f64,
    pub segmentation: f64,
    pub voting: f64,
    pub icp: f64,
    pub verification: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.normals + self.anchors + self.classification + self.segmentation + self.voting + self.icp + self.verification
    }
}

/// A verified hypothesis and the sphere it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Index into [`DetectionResult::anchors`].
    pub anchor: usize,
    pub score: f64,
    pub correspondences: usize,
    /// Pose straight out of voting, before ICP.
    pub voted_pose: RigidPose,
    pub hypothesis: PoseHypothesis,
}

/// Sampled sphere points (scene frame) with their predicted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedSphere {
    pub anchor: usize,
    pub points: Vec<Vec3>,
    pub labels: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionTrace {
    pub spheres: Vec<SegmentedSphere>,
    /// Translations of all pose votes, per segmented sphere.
    pub votes: Vec<Vec<Vec3>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionResult {
    /// Verified candidates, ascending localization loss.
    pub ranked: Vec<Candidate>,
    pub anchors: Vec<Vec3>,
    /// Object probability per anchor; `None` for skipped anchors.
    pub scores: Vec<Option<f64>>,
    pub skipped_anchors: usize,
    /// Anchors that were segmented, best score first.
    pub segmented: Vec<usize>,
    /// Segmented anchors that produced no hypothesis.
    pub failed: usize,
    pub timings: StageTimings,
    pub trace: Option<DetectionTrace>,
}

impl DetectionResult {
    pub fn best(&self) -> Option<&Candidate> {
        self.ranked.first()
    }

    pub fn succeeded(&self) -> bool {
        !self.ranked.is_empty()
    }
}

/// Indices of the `k` highest scores, best first; ties go to the lower
/// index. `None` entries are never chosen.
pub fn top_scoring(scores: &[Option<f64>], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_some()).collect();
    ids.sort_by(|&a, &b| scores[b].unwrap().total_cmp(&scores[a].unwrap()).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

/// Scene with normals and the per-scene lookup structures.
struct Prepared<'a> {
    ctx: SceneContext<'a>,
}

fn with_normals(scene: &PointCloud, cfg: &PipelineConfig) -> Result<Option<PointCloud>> {
    if scene.normals().is_some() && scene.curvatures().is_some() {
        return Ok(None);
    }
    let view = scene.view_origin.unwrap_or(Vec3::zeros());
    estimate_normals(scene, cfg.normal_radius_mm, &view).map(Some)
}

/// Row-wise softmax of `n × classes` logits.
fn softmax_rows(logits: &[f32], classes: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let start = out.len();
        let mut sum = 0.0;
        for &z in row {
            let e = libm_expf(z - m);
            sum += e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p /= sum;
        }
    }
    out
}

fn libm_expf(x: f32) -> f32 {
    num_traits::Float::exp(x)
}

fn argmax_rows(p: &[f32], classes: usize) -> Vec<u16> {
    p.chunks_exact(classes)
        .map(|row| row.iter().enumerate().fold((0, f32::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc }).0 as u16)
        .collect()
}

/// Stages E and F for one sphere: vote, refine with ICP on the model points
/// visible at the voted pose, verify.
fn refine_and_verify(
    corr: &[Correspondence],
    model: &ObjectModel,
    prep: &Prepared<'_>,
    cfg: &PipelineConfig,
    clock: &dyn Clock,
    timings: &mut StageTimings,
    votes_out: Option<&mut Vec<Vec3>>,
) -> Result<(RigidPose, PoseHypothesis)> {
    let t0 = clock.now_ms();
    let voted = estimate_pose_detailed(corr, &cfg.voting);
    timings.voting += clock.now_ms() - t0;
    let detail = voted?;
    if let Some(out) = votes_out {
        out.extend(detail.votes.iter().map(|(p, _)| *p.translation()));
    }
    let voted_pose = detail.hypothesis.pose;

    let t1 = clock.now_ms();
    let model_pts = model.cloud.positions();
    let posed: Vec<Vec3> = model_pts.iter().map(|p| voted_pose.apply(p)).collect();
    let visible = remove_occluded_with(&posed, prep.ctx.depth.as_ref(), cfg.verification.occlusion_margin_mm).visible;
    let stride = visible.len().div_ceil(cfg.icp_max_points).max(1);
    let icp_pts: Vec<Vec3> = visible.iter().step_by(stride).map(|&i| model_pts[i]).collect();
    let refined = if icp_pts.len() >= 3 {
        icp_refine(&icp_pts, &prep.ctx.index, &voted_pose, &cfg.icp).map(|o| o.pose).unwrap_or(voted_pose)
    } else {
        voted_pose
    };
    timings.icp += clock.now_ms() - t1;

    let t2 = clock.now_ms();
    let h = PoseHypothesis { pose: refined, ..detail.hypothesis };
    let verified = verify(&h, model, &prep.ctx, &cfg.verification);
    timings.verification += clock.now_ms() - t2;
    Ok((voted_pose, verified?))
}

fn sort_candidates(c: &mut [Candidate]) {
    let key = |c: &Candidate| if c.hypothesis.l_loc.is_nan() { f64::INFINITY } else { c.hypothesis.l_loc };
    // stable: equal losses keep segmentation order
    c.sort_by(|a, b| key(a).total_cmp(&key(b)));
}

/// Full detection with the learned network.
pub fn detect(scene: &PointCloud, model: &ObjectModel, weights: &Weights<f32>, cfg: &PipelineConfig, clock: &dyn Clock) -> Result<DetectionResult> {
    cfg.validate()?;
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    if weights.config.keypoints != model.keypoint_count() {
        return Err(Error::Config(alloc::format!(
            "network predicts {} keypoints, model has {}",
            weights.config.keypoints,
            model.keypoint_count()
        )));
    }
    let mut timings = StageTimings::default();
    let t = clock.now_ms();
    let owned = with_normals(scene, cfg)?;
    let scene = owned.as_ref().unwrap_or(scene);
    timings.normals = clock.now_ms() - t;

    let t = clock.now_ms();
    let prep = Prepared { ctx: SceneContext::new(scene, &cfg.verification) };
    let anchors: Vec<Vec3> = voxel_downsample(&PointCloud::from_positions(scene.positions().to_vec()), cfg.anchor_leaf_mm)?.positions().to_vec();
    timings.anchors = clock.now_ms() - t;
    if anchors.is_empty() {
        return Err(Error::EmptyScene);
    }

    let radius = model.sphere_radius(cfg.sphere_factor);
    let sphere = |a: usize| -> Option<Vec<usize>> {
        let inside = prep.ctx.index.within_radius(&anchors[a], radius);
        if inside.len() < cfg.min_sphere_points {
            return None;
        }
        Some(sample_fill(&inside, cfg.points_per_sphere, &mut sub_rng(cfg.seed, a as u64)))
    };
    let meta = |a: usize| ExampleMeta { scene_id: 0, anchor: [anchors[a].x, anchors[a].y, anchors[a].z] };

    let t = clock.now_ms();
    let mut scores = Vec::with_capacity(anchors.len());
    for a in 0..anchors.len() {
        let score = match sphere(a) {
            None => None,
            Some(ids) => {
                let e = example_from_points(scene, &ids, |_| 0, 0, meta(a));
                let x = weights.features(&e)?;
                Some(weights.classify(&x, e.len())? as f64)
            }
        };
        scores.push(score);
    }
    timings.classification = clock.now_ms() - t;
    let skipped_anchors = scores.iter().filter(|s| s.is_none()).count();
    let segmented = top_scoring(&scores, cfg.top_k);

    let classes = weights.config.classes();
    let normals = scene.normals().expect("normals were ensured");
    let mut trace = cfg.collect_trace.then(DetectionTrace::default);
    let mut ranked = Vec::new();
    let mut failed = 0;
    for &a in &segmented {
        let t = clock.now_ms();
        let ids = sphere(a).expect("segmented anchors were classified");
        let e = example_from_points(scene, &ids, |_| 0, 0, meta(a));
        let x = weights.features(&e)?;
        let out = weights.forward(&x, e.len())?;
        let probs = softmax_rows(out.seg_logits(), classes);
        let points: Vec<Vec3> = ids.iter().map(|&i| scene.positions()[i]).collect();
        let point_normals: Vec<Vec3> = ids.iter().map(|&i| normals[i]).collect();
        let corr = correspondences_from_segmentation(&points, &point_normals, &probs, model, cfg.voting.min_confidence);
        timings.segmentation += clock.now_ms() - t;

        let mut votes = cfg.collect_votes.then(Vec::new);
        let outcome = refine_and_verify(&corr, model, &prep, cfg, clock, &mut timings, votes.as_mut());
        if let Some(tr) = trace.as_mut() {
            tr.spheres.push(SegmentedSphere { anchor: a, points, labels: argmax_rows(&probs, classes) });
            tr.votes.push(votes.unwrap_or_default());
        }
        match outcome {
            Ok((voted_pose, hypothesis)) => ranked.push(Candidate { anchor: a, score: scores[a].unwrap(), correspondences: corr.len(), voted_pose, hypothesis }),
            Err(_) => failed += 1,
        }
    }
    sort_candidates(&mut ranked);
    Ok(DetectionResult { ranked, anchors, scores, skipped_anchors, segmented, failed, timings, trace })
}

/// Detection with the network replaced by ground-truth labels: anchors are
/// random object points and segmentation comes from the labeling rule.
/// Stages E and F are as in [`detect`].
pub fn oracle_detect(scene: &PointCloud, model: &ObjectModel, gt: &RigidPose, cfg: &PipelineConfig, clock: &dyn Clock) -> Result<DetectionResult> {
    cfg.validate()?;
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut timings = StageTimings::default();
    let t = clock.now_ms();
    let owned = with_normals(scene, cfg)?;
    let scene = owned.as_ref().unwrap_or(scene);
    timings.normals = clock.now_ms() - t;

    let t = clock.now_ms();
    let prep = Prepared { ctx: SceneContext::new(scene, &cfg.verification) };
    let labels = label_scene(scene, model, gt, &DatasetParams::default())?;
    let foreground: Vec<usize> = (0..scene.len()).filter(|&i| labels.labels[i].class() > 0).collect();
    let picks = if foreground.is_empty() {
        Vec::new()
    } else {
        let mut ids = sample_fill(&foreground, cfg.top_k, &mut sub_rng(cfg.seed, u64::MAX));
        ids.truncate(cfg.top_k);
        ids
    };
    let anchors: Vec<Vec3> = picks.iter().map(|&i| scene.positions()[i]).collect();
    timings.anchors = clock.now_ms() - t;

    let radius = model.sphere_radius(cfg.sphere_factor);
    let normals = scene.normals().expect("normals were ensured");
    let mut trace = cfg.collect_trace.then(DetectionTrace::default);
    let mut ranked = Vec::new();
    let mut failed = 0;
    for (a, anchor) in anchors.iter().enumerate() {
        let t = clock.now_ms();
        let inside = prep.ctx.index.within_radius(anchor, radius);
        let ids = sample_fill(&inside, cfg.points_per_sphere, &mut sub_rng(cfg.seed, a as u64));
        let points: Vec<Vec3> = ids.iter().map(|&i| scene.positions()[i]).collect();
        let point_normals: Vec<Vec3> = ids.iter().map(|&i| normals[i]).collect();
        let seg: Vec<u16> = ids.iter().map(|&i| labels.labels[i].class()).collect();
        let corr = correspondences_from_labels(&points, &point_normals, &seg, model);
        timings.segmentation += clock.now_ms() - t;

        let mut votes = cfg.collect_votes.then(Vec::new);
        let outcome = refine_and_verify(&corr, model, &prep, cfg, clock, &mut timings, votes.as_mut());
        if let Some(tr) = trace.as_mut() {
            tr.spheres.push(SegmentedSphere { anchor: a, points, labels: seg });
            tr.votes.push(votes.unwrap_or_default());
        }
        match outcome {
            Ok((voted_pose, hypothesis)) => ranked.push(Candidate { anchor: a, score: 1.0, correspondences: corr.len(), voted_pose, hypothesis }),
            Err(_) => failed += 1,
        }
    }
    sort_candidates(&mut ranked);
    let scores = alloc::vec![Some(1.0); anchors.len()];
    let segmented = (0..anchors.len()).collect();
    Ok(DetectionResult { ranked, anchors, scores, skipped_anchors: 0, segmented, failed, timings, trace })
}

/// Metrics of one scene's estimate against its ground truth.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneOutcome {
    pub scene: String,
    /// `INFINITY` when detection failed.
    pub add: f64,
    pub adds: f64,
    pub l_loc: f64,
    pub s_kde: f64,
    pub success: bool,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub threshold_factor: f64,
    /// Pass mark in mm.
    pub threshold_mm: f64,
    pub symmetric: bool,
    pub scenes: Vec<SceneOutcome>,
    pub successes: usize,
    pub accuracy: f64,
}

/// Scores an estimate: success iff ADD (ADD-S for symmetric models) is below
/// `threshold_factor × diameter`.
pub fn score_estimate(scene: &str, est: Option<&PoseHypothesis>, gt: &RigidPose, model: &ObjectModel, threshold_factor: f64, timings: StageTimings) -> SceneOutcome {
    let threshold = threshold_factor * model.diameter;
    match est {
        None => SceneOutcome { scene: scene.into(), add: f64::INFINITY, adds: f64::INFINITY, l_loc: f64::INFINITY, s_kde: 0.0, success: false, timings },
        Some(h) => {
            let add = add_metric(&h.pose, gt, model);
            let adds = adds_metric(&h.pose, gt, model);
            let metric = if model.symmetry.is_symmetric() { adds } else { add };
            SceneOutcome { scene: scene.into(), add, adds, l_loc: h.l_loc, s_kde: h.s_kde, success: metric < threshold, timings }
        }
    }
}

/// Collects per-scene outcomes into a report.
pub fn summarize(scenes: Vec<SceneOutcome>, model: &ObjectModel, threshold_factor: f64) -> EvalReport {
    let successes = scenes.iter().filter(|s| s.success).count();
    let accuracy = if scenes.is_empty() { 0.0 } else { successes as f64 / scenes.len() as f64 };
    EvalReport {
        threshold_factor,
        threshold_mm: threshold_factor * model.diameter,
        symmetric: model.symmetry.is_symmetric(),
        scenes,
        successes,
        accuracy,
    }
}

/// Runs `detector` on every scene and scores the best candidate.
pub fn evaluate_with(
    scenes: &[(String, PointCloud, RigidPose)],
    model: &ObjectModel,
    threshold_factor: f64,
    mut detector: impl FnMut(&PointCloud, &RigidPose) -> Result<DetectionResult>,
) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(Error::InvalidArgument("no scenes to evaluate".into()));
    }
    let mut out = Vec::with_capacity(scenes.len());
    for (name, cloud, gt) in scenes {
        let outcome = match detector(cloud, gt) {
            Ok(r) => score_estimate(name, r.best().map(|c| &c.hypothesis), gt, model, threshold_factor, r.timings),
            Err(Error::EmptyScene) => score_estimate(name, None, gt, model, threshold_factor, StageTimings::default()),
            Err(e) => return Err(e),
        };
        out.push(outcome);
    }
    Ok(summarize(out, model, threshold_factor))
}

/// Learned detection over a scene set.
pub fn evaluate(
    scenes: &[(String, PointCloud, RigidPose)],
    model: &ObjectModel,
    weights: &Weights<f32>,
    cfg: &PipelineConfig,
    threshold_factor: f64,
    clock: &dyn Clock,
) -> Result<EvalReport> {
    evaluate_with(scenes, model, threshold_factor, |scene, _| detect(scene, model, weights, cfg, clock))
}
