//! Least-squares rigid alignment of paired point sets.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use nalgebra::Rotation3;

use crate::cloud::{centroid, Vec3};
use crate::error::{Error, Result};
use crate::pose::{Mat3, RigidPose};

/// Relative singular-value threshold below which the cross-covariance is
/// treated as rank-deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Rigid pose minimizing `Σ |T(srcᵢ) − dstᵢ|²` (Kabsch with determinant
/// correction, so the result is always a proper rotation).
pub fn kabsch_align(src: &[Vec3], dst: &[Vec3]) -> Result<RigidPose> {
    if src.len() != dst.len() {
        return Err(Error::DegenerateCorrespondences("source and target sizes differ"));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateCorrespondences("fewer than 3 pairs"));
    }
    let cs = centroid(src).unwrap();
    let cd = centroid(dst).unwrap();
    let mut h = Mat3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let (largest, second) = {
        let mut s = [sv[0], sv[1], sv[2]];
        s.sort_by(|a, b| b.total_cmp(a));
        (s[0], s[1])
    };
    if !(largest > 0.0) || second <= RANK_TOLERANCE * largest {
        return Err(Error::DegenerateCorrespondences("rank-deficient cross-covariance"));
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let [a, b, _] = order;
    // The weakest singular pair is rebuilt from the other two: it is poorly
    // determined when the points are nearly coplanar, and taking both frames
    // right-handed applies the determinant correction at the same time.
    let (ua, ub) = (u.column(a).into_owned(), u.column(b).into_owned());
    let (va, vb) = (v_t.row(a).transpose(), v_t.row(b).transpose());
    let mut rotation = va * ua.transpose() + vb * ub.transpose() + va.cross(&vb) * ua.cross(&ub).transpose();
    for _ in 0..2 {
        rotation = refine_rotation(&rotation, src, dst, &cs, &cd);
    }
    let translation = cd - rotation * cs;
    Ok(RigidPose::from_parts_unchecked(rotation, translation))
}

/// One Gauss-Newton step on `Σ |R(sᵢ − cs) − (dᵢ − cd)|²` over a left
/// rotation increment. The SVD loses precision along the short axis of
/// elongated point sets; working on the residuals recovers it.
fn refine_rotation(rotation: &Mat3, src: &[Vec3], dst: &[Vec3], cs: &Vec3, cd: &Vec3) -> Mat3 {
    let mut normal = Mat3::zeros();
    let mut rhs = Vec3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let p = rotation * (s - cs);
        let r = p - (d - cd);
        normal += Mat3::identity() * p.norm_squared() - p * p.transpose();
        rhs += r.cross(&p);
    }
    match normal.cholesky() {
        Some(c) => Rotation3::new(c.solve(&rhs)).into_inner() * rotation,
        None => *rotation,
    }
}

/// Root-mean-square residual of `pose` over the pairs.
pub fn rms_residual(pose: &RigidPose, src: &[Vec3], dst: &[Vec3]) -> f64 {
    let sum: f64 = src.iter().zip(dst).map(|(s, d)| (pose.apply(s) - d).norm_squared()).sum();
    (sum / src.len() as f64).sqrt()
}
