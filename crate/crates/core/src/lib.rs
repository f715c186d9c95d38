//! Object pose estimation on unordered point clouds.
//!
//! The pipeline detects a known rigid object in a scene cloud and returns its
//! 6-DoF pose:
//!
//! 1. the scene is voxel-downsampled into anchor points,
//! 2. a point-set network scores the spherical neighborhood of every anchor,
//! 3. the best-scoring neighborhoods are segmented into object keypoints,
//! 4. the resulting point-to-keypoint correspondences vote for poses in SE(3),
//! 5. each voted pose is refined with coarse-to-fine ICP,
//! 6. the candidates are ranked by a geometric/color localization loss.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, the CLI and image decoding live in the companion
//! `pointvote` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod align;
pub mod cloud;
pub mod dataset;
pub mod error;
pub mod icp;
pub mod metrics;
pub mod model;
pub mod network;
pub mod normals;
pub mod pipeline;
pub mod pose;
pub mod rgbd;
pub mod shapes;
pub mod spatial;
pub mod synth;
pub mod verify;
pub mod voting;
pub mod voxel;

pub use cloud::{Channels, Intrinsics, Point, PointCloud, Vec3};
pub use error::{Error, Result};
pub use pose::{rotation_geodesic, Mat3, RigidPose};
pub use spatial::NnIndex;

/// Seeded generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Derives an independent, reproducible generator for a sub-task (a scene,
/// an anchor, an epoch) from a master seed.
pub fn sub_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
