//! Point-to-point ICP with a coarse-to-fine schedule of pairing gates.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::align::kabsch_align;
use crate::cloud::Vec3;
use crate::error::{invalid, Error, Result};
use crate::pose::RigidPose;
use crate::spatial::NnIndex;

/// Iterations stop once the RMS residual changes by less than this (mm).
pub const CONVERGENCE_MM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IcpLevel {
    /// Pairs farther apart than this (mm) are ignored.
    pub max_corr_dist: f64,
    pub max_iters: usize,
}

/// Gates of 50, 25 and 10 mm with 30 iterations each.
pub fn default_schedule() -> Vec<IcpLevel> {
    [50.0, 25.0, 10.0].iter().map(|&d| IcpLevel { max_corr_dist: d, max_iters: 30 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub pose: RigidPose,
    /// Accepted RMS residuals, one sequence per level; each is non-increasing.
    pub rms_trace: Vec<Vec<f64>>,
}

/// Refines `init` so that `model_points` land on the indexed scene.
///
/// Within a level, each iteration pairs every transformed model point with its
/// nearest scene point (kept if within the gate) and re-solves the pose with
/// Kabsch. A point that falls outside the gate stays out for the rest of the
/// level: the dropped pairs are then always the worst ones, so the RMS over the
/// retained pairs cannot rise. A step that raises it anyway (rounding) is
/// rejected and ends the level.
pub fn icp_refine(
    model_points: &[Vec3],
    scene: &NnIndex,
    init: &RigidPose,
    schedule: &[IcpLevel],
) -> Result<IcpOutcome> {
    if schedule.is_empty() {
        return Err(invalid("ICP schedule is empty"));
    }
    if schedule.windows(2).any(|w| !(w[1].max_corr_dist < w[0].max_corr_dist)) {
        return Err(invalid("ICP gates must be strictly decreasing"));
    }
    if scene.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut pose = *init;
    let mut trace = Vec::with_capacity(schedule.len());
    let mut src = Vec::with_capacity(model_points.len());
    let mut dst = Vec::with_capacity(model_points.len());
    for level in schedule {
        let gate2 = level.max_corr_dist * level.max_corr_dist;
        let mut accepted: Vec<f64> = Vec::new();
        let mut best = pose;
        let mut current = pose;
        let mut iters = 0;
        let mut active = alloc::vec![true; model_points.len()];
        loop {
            src.clear();
            dst.clear();
            let mut sum = 0.0;
            for (p, live) in model_points.iter().zip(active.iter_mut()) {
                if !*live {
                    continue;
                }
                let q = current.apply(p);
                let (id, d2) = scene.nearest_squared(&q)?;
                if d2 <= gate2 {
                    src.push(*p);
                    dst.push(scene.position(id));
                    sum += d2;
                } else {
                    *live = false;
                }
            }
            if src.len() < 3 {
                break;
            }
            let rms = (sum / src.len() as f64).sqrt();
            if let Some(&last) = accepted.last() {
                if rms > last {
                    break;
                }
            }
            accepted.push(rms);
            best = current;
            let converged = accepted.len() >= 2 && accepted[accepted.len() - 2] - rms < CONVERGENCE_MM;
            if converged || iters >= level.max_iters {
                break;
            }
            match kabsch_align(&src, &dst) {
                Ok(next) => current = next,
                Err(_) => break,
            }
            iters += 1;
        }
        pose = best;
        trace.push(accepted);
    }
    if trace.iter().all(|t| t.is_empty()) {
        return Err(Error::NoOverlap);
    }
    Ok(IcpOutcome { pose, rms_trace: trace })
}
