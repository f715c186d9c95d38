//! Rigid transforms in SE(3).

use core::ops::Mul;

use nalgebra::{Rotation3, Unit};
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::cloud::Vec3;
use crate::error::{invalid, Result};

pub type Mat3 = nalgebra::Matrix3<f64>;

/// Tolerance of the orthonormality check applied to user-supplied rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rotation followed by translation (millimeters): `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    rotation: Mat3,
    translation: Vec3,
}

impl RigidPose {
    pub fn identity() -> Self {
        RigidPose { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    /// Validated constructor: `rotationᵀ·rotation = I` and `det = 1` within
    /// [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !is_rotation(&rotation, ROTATION_TOLERANCE) {
            return Err(invalid("matrix is not a proper rotation"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite translation"));
        }
        Ok(RigidPose { rotation, translation })
    }

    /// Accepts an approximately orthonormal matrix (e.g. printed with few
    /// digits) and snaps it to the nearest rotation.
    pub fn from_matrix_projected(m: &Mat3, translation: Vec3) -> Result<Self> {
        if !is_rotation(m, 1e-3) {
            return Err(invalid("matrix is too far from a rotation"));
        }
        RigidPose::new(project_to_rotation(m), translation)
    }

    pub fn from_rotation(rotation: &Rotation3<f64>, translation: Vec3) -> Self {
        RigidPose { rotation: *rotation.matrix(), translation }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        RigidPose::from_rotation(&r, translation)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        RigidPose { rotation: Mat3::identity(), translation }
    }

    pub(crate) fn from_parts_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        RigidPose { rotation, translation }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidPose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Rotation angle (radians) and translation distance between two poses.
    pub fn distance(&self, other: &RigidPose) -> (f64, f64) {
        (
            rotation_geodesic(&self.rotation, &other.rotation),
            (self.translation - other.translation).norm(),
        )
    }
}

impl Default for RigidPose {
    fn default() -> Self {
        RigidPose::identity()
    }
}

impl Mul for RigidPose {
    type Output = RigidPose;

    fn mul(self, rhs: RigidPose) -> RigidPose {
        self.compose(&rhs)
    }
}

/// Angle of the relative rotation `aᵀ·b`, in `[0, π]`.
pub fn rotation_geodesic(a: &Mat3, b: &Mat3) -> f64 {
    let trace = (a.transpose() * b).trace();
    ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

pub fn is_rotation(m: &Mat3, tol: f64) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let err = (m.transpose() * m - Mat3::identity()).abs().max();
    err <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// Nearest proper rotation in the Frobenius sense (SVD with determinant fix).
pub fn project_to_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * v_t).determinant().signum();
    u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t
}

/// Minimal rotation taking unit vector `from` onto unit vector `to`.
///
/// For anti-parallel inputs the rotation is by π about
/// `normalize(to × x̂)`, or `normalize(to × ŷ)` when that is degenerate.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Mat3 {
    let axis = from.cross(to);
    let sin = axis.norm();
    let cos = from.dot(to);
    if sin > 1e-12 {
        return *Rotation3::from_axis_angle(&Unit::new_unchecked(axis / sin), sin.atan2(cos)).matrix();
    }
    if cos > 0.0 {
        return Mat3::identity();
    }
    let mut perp = to.cross(&Vec3::x());
    if perp.norm() < 1e-6 {
        perp = to.cross(&Vec3::y());
    }
    *Rotation3::from_axis_angle(&Unit::new_normalize(perp), core::f64::consts::PI).matrix()
}

/// Angle between two vectors, accurate near 0 and π.
pub fn vector_angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}
