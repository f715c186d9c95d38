//! Pose voting from point-to-keypoint correspondences.
//!
//! A scene point with its normal, matched to a model keypoint with its
//! normal, fixes a rigid pose up to one rotation about the normal. Every
//! correspondence therefore votes for a sampled circle of poses; the densest
//! region of the vote set is the pose estimate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::align::kabsch_align;
use crate::cloud::Vec3;
use crate::error::{Error, Result};
use crate::model::ObjectModel;
use crate::pose::{project_to_rotation, rotation_between, Mat3, RigidPose};
use crate::voxel::voxel_key;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub scene_position: Vec3,
    pub scene_normal: Vec3,
    /// Keypoint id in `1..=K`.
    pub keypoint_id: u16,
    /// Model frame.
    pub keypoint_position: Vec3,
    pub keypoint_normal: Vec3,
    /// Probability of the winning segmentation label.
    pub confidence: f64,
}

/// A candidate pose and its scores. The losses are filled in by
/// verification; until then they are `NaN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseHypothesis {
    pub pose: RigidPose,
    /// Fraction of votes supporting the peak, in `(0, 1]`.
    pub s_kde: f64,
    pub vote_support: usize,
    pub l_geometric: f64,
    pub l_color: f64,
    pub l_loc: f64,
    /// Color loss fell back to 1 because a cloud had no color.
    pub color_fallback: bool,
    /// Occlusion removal was skipped for lack of intrinsics.
    pub occlusion_fallback: bool,
}

impl PoseHypothesis {
    pub fn unverified(pose: RigidPose, s_kde: f64, vote_support: usize) -> Self {
        PoseHypothesis {
            pose,
            s_kde,
            vote_support,
            l_geometric: f64::NAN,
            l_color: f64::NAN,
            l_loc: f64::NAN,
            color_fallback: false,
            occlusion_fallback: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VotingParams {
    /// Rotation samples per correspondence.
    pub n_theta: usize,
    /// Translation kernel radius (mm).
    pub translation_bandwidth: f64,
    /// Rotation kernel radius (degrees).
    pub rotation_bandwidth_deg: f64,
    pub min_correspondences: usize,
    pub max_correspondences: usize,
    pub min_confidence: f64,
}

impl Default for VotingParams {
    fn default() -> Self {
        VotingParams {
            n_theta: 36,
            translation_bandwidth: 10.0,
            rotation_bandwidth_deg: 12.0,
            min_correspondences: 10,
            max_correspondences: 500,
            min_confidence: 0.0,
        }
    }
}

/// One correspondence per scene point whose most probable label is a
/// keypoint with probability at least `min_confidence`. `probabilities` is
/// row-major `n × (K+1)`, column 0 being background.
pub fn correspondences_from_segmentation(
    positions: &[Vec3],
    normals: &[Vec3],
    probabilities: &[f32],
    model: &ObjectModel,
    min_confidence: f64,
) -> Vec<Correspondence> {
    let classes = model.keypoint_count() + 1;
    let mut out = Vec::new();
    for (i, row) in probabilities.chunks_exact(classes).enumerate().take(positions.len()) {
        let (best, p) = row.iter().enumerate().fold((0, f32::NEG_INFINITY), |acc, (j, &p)| if p > acc.1 { (j, p) } else { acc });
        if best == 0 || (p as f64) < min_confidence {
            continue;
        }
        let kp = &model.keypoints[best - 1];
        out.push(Correspondence {
            scene_position: positions[i],
            scene_normal: normals[i],
            keypoint_id: best as u16,
            keypoint_position: kp.position,
            keypoint_normal: kp.normal,
            confidence: p as f64,
        });
    }
    out
}

/// Correspondences from hard labels (`0` = background), with confidence 1.
pub fn correspondences_from_labels(positions: &[Vec3], normals: &[Vec3], labels: &[u16], model: &ObjectModel) -> Vec<Correspondence> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0)
        .map(|(i, &l)| {
            let kp = &model.keypoints[l as usize - 1];
            Correspondence {
                scene_position: positions[i],
                scene_normal: normals[i],
                keypoint_id: l,
                keypoint_position: kp.position,
                keypoint_normal: kp.normal,
                confidence: 1.0,
            }
        })
        .collect()
}

/// `n_theta` poses per correspondence, each mapping the keypoint onto the
/// scene point and the keypoint normal onto the scene normal. Returns the
/// poses with the index of their source correspondence.
pub fn pose_votes(corr: &[Correspondence], n_theta: usize) -> Result<Vec<(RigidPose, usize)>> {
    if n_theta < 4 {
        return Err(Error::InvalidArgument("n_theta must be at least 4".into()));
    }
    let mut votes = Vec::with_capacity(corr.len() * n_theta);
    for (ci, c) in corr.iter().enumerate() {
        let base = rotation_between(&c.keypoint_normal, &c.scene_normal);
        let axis = nalgebra::Unit::new_normalize(c.scene_normal);
        for k in 0..n_theta {
            let theta = 2.0 * PI * k as f64 / n_theta as f64;
            let spin = *nalgebra::Rotation3::from_axis_angle(&axis, theta).matrix();
            let rotation = spin * base;
            let translation = c.scene_position - rotation * c.keypoint_position;
            votes.push((RigidPose::from_parts_unchecked(rotation, translation), ci));
        }
    }
    Ok(votes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// Mean of the supporting votes.
    pub pose: RigidPose,
    /// Index of the vote with the largest support.
    pub center: usize,
    pub support: usize,
    pub s_kde: f64,
    /// Indices of the votes within both kernels of the center.
    pub members: Vec<usize>,
}

const ROT_SPAN: i64 = 6;
const ROT_SIDE: i64 = 2 * ROT_SPAN + 1;
const ROT_BUCKETS: usize = (ROT_SIDE * ROT_SIDE * ROT_SIDE) as usize;

fn rot_bucket(x: i64, y: i64, z: i64) -> usize {
    let c = |v: i64| v.clamp(-ROT_SPAN, ROT_SPAN) + ROT_SPAN;
    ((c(x) * ROT_SIDE + c(y)) * ROT_SIDE + c(z)) as usize
}

/// Buckets within one step of `id` on every axis.
fn neighbor_buckets(id: usize) -> impl Iterator<Item = usize> {
    let id = id as i64;
    let (x, y, z) = (id / (ROT_SIDE * ROT_SIDE), id / ROT_SIDE % ROT_SIDE, id % ROT_SIDE);
    (0..27).filter_map(move |n| {
        let (a, b, c) = (x + n / 9 - 1, y + n / 3 % 3 - 1, z + n % 3 - 1);
        let inside = |v: i64| (0..ROT_SIDE).contains(&v);
        (inside(a) && inside(b) && inside(c)).then(|| ((a * ROT_SIDE + b) * ROT_SIDE + c) as usize)
    })
}

/// The 3×3×3 block of grid cells around `key`.
fn neighbor_cells(key: (i64, i64, i64)) -> impl Iterator<Item = (i64, i64, i64)> {
    let (x, y, z) = key;
    (0..27).map(move |n| (x + n / 9 - 1, y + n / 3 % 3 - 1, z + n % 3 - 1))
}

/// Whether two rotations are within `min_trace` in the `trace(AᵀB)` sense.
fn rotation_close(a: &Mat3, b: &Mat3, min_trace: f64) -> bool {
    a.component_mul(b).sum() >= min_trace
}

/// Densest vote: the one with the most votes within `translation_bw` (mm)
/// and `rotation_bw` (radians) of it. Ties go to the smaller summed
/// translation distance, then the lower index.
pub fn density_peak(votes: &[RigidPose], translation_bw: f64, rotation_bw: f64) -> Result<Peak> {
    if votes.is_empty() {
        return Err(Error::NoHypothesis("no votes"));
    }
    if !(translation_bw > 0.0) || !(rotation_bw > 0.0) {
        return Err(Error::InvalidArgument("kernel bandwidths must be positive".into()));
    }
    let min_trace = 1.0 + 2.0 * rotation_bw.cos();
    let bw2 = translation_bw * translation_bw;
    // close rotations differ by at most 2·sqrt(1 - cos bw) in Frobenius norm,
    // hence in their first column too, which gives a second grid; a floor on
    // its cell keeps the keys of a unit vector within ±ROT_SPAN
    let rot_cell = (2.0 * (1.0 - rotation_bw.min(PI).cos()).sqrt()).max(0.2) * (1.0 + 1e-9);
    let mut order: Vec<usize> = (0..votes.len()).collect();
    let cell_of = |i: usize| voxel_key(votes[i].translation(), translation_bw);
    order.sort_by_cached_key(|&i| (cell_of(i), i));
    let rot_ids: Vec<usize> = order
        .iter()
        .map(|&i| {
            let (x, y, z) = voxel_key(&votes[i].rotation().column(0).into_owned(), rot_cell);
            rot_bucket(x, y, z)
        })
        .collect();
    let translations: Vec<Vec3> = order.iter().map(|&i| *votes[i].translation()).collect();
    let rotations: Vec<Mat3> = order.iter().map(|&i| *votes[i].rotation()).collect();
    let mut cells: BTreeMap<(i64, i64, i64), (usize, usize)> = BTreeMap::new();
    for (at, &i) in order.iter().enumerate() {
        cells.entry(cell_of(i)).or_insert((at, at)).1 = at + 1;
    }

    // the 27-cell population bounds every support in a cell, so cells are
    // visited from the most crowded and the scan stops once none can win
    let mut by_bound: Vec<(usize, (i64, i64, i64), usize, usize)> = cells
        .iter()
        .map(|(&key, &(lo, hi))| {
            let bound = neighbor_cells(key).filter_map(|k| cells.get(&k)).map(|r| r.1 - r.0).sum();
            (bound, key, lo, hi)
        })
        .collect();
    by_bound.sort_by_key(|b| core::cmp::Reverse(b.0));

    // per cell, the surrounding votes counting-sorted by rotation bucket
    let mut starts = vec![0usize; ROT_BUCKETS + 1];
    let mut sorted: Vec<usize> = Vec::new();
    let fill = |key: (i64, i64, i64), starts: &mut [usize], sorted: &mut Vec<usize>| {
        starts.iter_mut().for_each(|s| *s = 0);
        let ranges: Vec<(usize, usize)> = neighbor_cells(key).filter_map(|k| cells.get(&k).copied()).collect();
        for &(lo, hi) in &ranges {
            for b in lo..hi {
                starts[rot_ids[b] + 1] += 1;
            }
        }
        for n in 1..starts.len() {
            starts[n] += starts[n - 1];
        }
        sorted.clear();
        sorted.resize(starts[ROT_BUCKETS], 0);
        let mut next = starts.to_vec();
        for &(lo, hi) in &ranges {
            for b in lo..hi {
                sorted[next[rot_ids[b]]] = b;
                next[rot_ids[b]] += 1;
            }
        }
    };
    let scan = |at: usize, starts: &[usize], sorted: &[usize], visit: &mut dyn FnMut(usize, f64)| {
        let (t, r) = (translations[at], &rotations[at]);
        for id in neighbor_buckets(rot_ids[at]) {
            for &b in &sorted[starts[id]..starts[id + 1]] {
                let d2 = (translations[b] - t).norm_squared();
                if d2 <= bw2 && rotation_close(r, &rotations[b], min_trace) {
                    visit(b, d2.sqrt());
                }
            }
        }
    };

    let mut best = (0usize, f64::INFINITY, usize::MAX, 0usize);
    let mut best_cell = (0, 0, 0);
    for (bound, key, lo, hi) in by_bound {
        if bound < best.0 {
            break;
        }
        fill(key, &mut starts, &mut sorted);
        for at in lo..hi {
            let candidates: usize = neighbor_buckets(rot_ids[at]).map(|id| starts[id + 1] - starts[id]).sum();
            if candidates < best.0 {
                continue;
            }
            let (mut support, mut spread) = (0usize, 0.0);
            scan(at, &starts, &sorted, &mut |_, d| {
                support += 1;
                spread += d;
            });
            let i = order[at];
            let better = support > best.0
                || (support == best.0 && (spread < best.1 || (spread == best.1 && i < best.2)));
            if better {
                best = (support, spread, i, at);
                best_cell = key;
            }
        }
    }
    let (support, _, center, at) = best;
    fill(best_cell, &mut starts, &mut sorted);
    let mut members = Vec::with_capacity(support);
    scan(at, &starts, &sorted, &mut |b, _| members.push(order[b]));
    members.sort_unstable();
    let pose = mean_pose(members.iter().map(|&j| &votes[j]));
    Ok(Peak { pose, center, support, s_kde: support as f64 / votes.len() as f64, members })
}

/// Mean translation and chordal mean rotation.
fn mean_pose<'a>(poses: impl Iterator<Item = &'a RigidPose>) -> RigidPose {
    let (mut r, mut t, mut n) = (Mat3::zeros(), Vec3::zeros(), 0usize);
    for p in poses {
        r += p.rotation();
        t += p.translation();
        n += 1;
    }
    RigidPose::from_parts_unchecked(project_to_rotation(&(r / n as f64)), t / n as f64)
}

/// Correspondences with repeated entries removed, first occurrence kept.
pub fn dedup_correspondences(corr: &[Correspondence]) -> Vec<Correspondence> {
    let key = |c: &Correspondence| {
        let bits = |v: &Vec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        (bits(&c.scene_position), bits(&c.scene_normal), c.keypoint_id)
    };
    let mut seen = BTreeSet::new();
    corr.iter().filter(|c| seen.insert(key(c))).copied().collect()
}

/// Evenly strided subset of at most `max` entries.
fn stride_subsample(corr: &[Correspondence], max: usize) -> Vec<Correspondence> {
    if corr.len() <= max {
        return corr.to_vec();
    }
    (0..max).map(|i| corr[i * corr.len() / max]).collect()
}

/// Everything [`estimate_pose`] computed, for inspection and debug dumps.
#[derive(Debug, Clone)]
pub struct VotingDetail {
    pub hypothesis: PoseHypothesis,
    /// Correspondences actually voted with.
    pub used: Vec<Correspondence>,
    pub votes: Vec<(RigidPose, usize)>,
    pub peak: Peak,
}

/// Pose from correspondences: votes, density peak, then a least-squares
/// polish over the correspondences that support the peak.
pub fn estimate_pose(corr: &[Correspondence], params: &VotingParams) -> Result<PoseHypothesis> {
    estimate_pose_detailed(corr, params).map(|d| d.hypothesis)
}

pub fn estimate_pose_detailed(corr: &[Correspondence], params: &VotingParams) -> Result<VotingDetail> {
    let distinct = dedup_correspondences(corr);
    if distinct.len() < params.min_correspondences.max(1) {
        return Err(Error::NoHypothesis("too few correspondences"));
    }
    let used = stride_subsample(&distinct, params.max_correspondences.max(1));
    let votes = pose_votes(&used, params.n_theta)?;
    let poses: Vec<RigidPose> = votes.iter().map(|v| v.0).collect();
    let peak = density_peak(&poses, params.translation_bandwidth, params.rotation_bandwidth_deg.to_radians())?;
    let sources: BTreeSet<usize> = peak.members.iter().map(|&m| votes[m].1).collect();
    let src: Vec<Vec3> = sources.iter().map(|&c| used[c].keypoint_position).collect();
    let dst: Vec<Vec3> = sources.iter().map(|&c| used[c].scene_position).collect();
    let pose = kabsch_align(&src, &dst).unwrap_or(peak.pose);
    let hypothesis = PoseHypothesis::unverified(pose, peak.s_kde, peak.support);
    Ok(VotingDetail { hypothesis, used, votes, peak })
}
