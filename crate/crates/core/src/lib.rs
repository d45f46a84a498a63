//! Non-neural core of a low-latency cone-landmark perception stack.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`geometry`]: pin-hole camera model, hardware trade-off sweeps and the
//!   pixels-per-landmark accuracy constant.
//! - [`requirements`]: kinematic derivation of latency, look-ahead and FOV
//!   requirements.
//! - [`monocular`]: heatmap expectation, collinearity-regularised keypoint
//!   loss and drop-one robust PnP.
//! - [`stereo`]: disparity reprojection, HSV filtering, XYZRGB clustering and
//!   hue-based cluster selection.
//! - [`timesync`]: clock model, two-way offset estimation, USB time translation
//!   and restamping.
//! - [`dataset`]: scale/tile preprocessing, k-means anchors and the detector
//!   loss.
//! - [`evaluation`]: IoU, mAP, depth error statistics and latency simulation.
//! - [`report`], [`io`], [`svg`]: tabular output, file formats and plots.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod kmeans;
pub mod monocular;
pub mod report;
pub mod requirements;
pub mod stereo;
pub mod svg;
pub mod timesync;

pub use error::{Error, Result};
pub use geometry::{CameraConfig, ColorClass, LandmarkModel, RigidPose};
pub use monocular::{KeypointHeatmap, KeypointSet, LossWeights};
pub use stereo::{BoundingBox, DisparityMap, LabeledPointCloud, RgbImage};

/// Seed used by every stochastic operation when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_190_817;
