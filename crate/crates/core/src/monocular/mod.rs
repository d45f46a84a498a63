//! Single-camera landmark localization from seven cone keypoints.
//!
//! Keypoints come out of a heatmap regressor as probability grids; their
//! expectation gives sub-pixel coordinates ([`dsnt_expectation`]). Training
//! regularises those coordinates with a collinearity penalty along the cone
//! edges ([`collinearity_loss`]). At inference the keypoints feed a PnP solve
//! against the known cone geometry, retried without each single keypoint when
//! the fit is poor ([`robust_pnp`]).

mod dsnt;
mod loss;
mod pnp;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraConfig, LandmarkModel, RigidPose};

pub use dsnt::{dsnt_expectation, dsnt_jacobian, keypoints_from_heatmaps, KeypointHeatmap};
pub use loss::{
    collinearity_loss, collinearity_loss_gradient, LossBreakdown, LossWeights, HORIZONTAL_PAIRS,
    VERTICAL_PAIRS,
};
pub use pnp::{
    landmark_position, pnp_reprojection_error, pnp_solve, pnp_solve_with, robust_pnp, robust_pnp_with,
    upright_rotation, PnpOptions, PnpSolution, PoseModel, RobustPnp, DEFAULT_REPROJ_THRESHOLD,
};

pub const NUM_KEYPOINTS: usize = 7;
pub const ALL_KEYPOINTS: [usize; NUM_KEYPOINTS] = [0, 1, 2, 3, 4, 5, 6];

/// Seven image keypoints: 0 apex, then (1, 2), (3, 4), (5, 6) as left/right
/// pairs from the top down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointSet {
    pub points: [Point2<f64>; NUM_KEYPOINTS],
}

impl KeypointSet {
    pub fn new(points: [Point2<f64>; NUM_KEYPOINTS]) -> Result<Self> {
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::domain("keypoint coordinates must be finite"));
        }
        Ok(Self { points })
    }

    /// `[u0, v0, u1, v1, ...]`
    pub fn to_flat(&self) -> [f64; 2 * NUM_KEYPOINTS] {
        let mut out = [0.0; 2 * NUM_KEYPOINTS];
        for (i, p) in self.points.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        out
    }

    pub fn from_flat(flat: &[f64; 2 * NUM_KEYPOINTS]) -> Self {
        Self {
            points: std::array::from_fn(|i| Point2::new(flat[2 * i], flat[2 * i + 1])),
        }
    }

    /// Projection of the landmark's canonical keypoints at `pose`.
    pub fn project(lm: &LandmarkModel, pose: &RigidPose, cam: &CameraConfig) -> Result<Self> {
        let mut points = [Point2::origin(); NUM_KEYPOINTS];
        for (dst, src) in points.iter_mut().zip(lm.keypoints()) {
            *dst = project_point(cam, pose, src)?;
        }
        Ok(Self { points })
    }
}

impl Serialize for KeypointSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw: Vec<[f64; 2]> = self.points.iter().map(|p| [p.x, p.y]).collect();
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeypointSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        let points: [[f64; 2]; NUM_KEYPOINTS] = raw.try_into().map_err(|v: Vec<_>| {
            serde::de::Error::custom(format!("expected 7 keypoints, got {}", v.len()))
        })?;
        KeypointSet::new(points.map(|[u, v]| Point2::new(u, v))).map_err(serde::de::Error::custom)
    }
}
