//! Pin-hole camera model and the hardware trade-off math built on it.
//!
//! Everything here assumes an ideal pin-hole: principal point at the image
//! center, square pixels, no distortion. Pixel binning is folded into the
//! effective pixel pitch.

use std::fmt;

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::report::{Table, Value};

/// Default physical landmark height in meters (small track cone).
pub const DEFAULT_LANDMARK_HEIGHT: f64 = 0.33;
/// Default landmark base width in meters.
pub const DEFAULT_LANDMARK_BASE_WIDTH: f64 = 0.228;
/// Pixels on a landmark assumed necessary for reliable detection and localization.
pub const DEFAULT_PIXEL_THRESHOLD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorClass {
    Blue,
    Yellow,
    Orange,
}

impl ColorClass {
    pub const ALL: [ColorClass; 3] = [ColorClass::Blue, ColorClass::Yellow, ColorClass::Orange];

    pub fn as_str(self) -> &'static str {
        match self {
            ColorClass::Blue => "blue",
            ColorClass::Yellow => "yellow",
            ColorClass::Orange => "orange",
        }
    }
}

impl fmt::Display for ColorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ColorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blue" | "0" => Ok(ColorClass::Blue),
            "yellow" | "1" => Ok(ColorClass::Yellow),
            "orange" | "2" => Ok(ColorClass::Orange),
            other => Err(Error::Parse(format!("unknown landmark class `{other}`"))),
        }
    }
}

/// Ideal pin-hole camera.
///
/// `sensor_pixel_pitch` is the native photosite size; the effective pitch used
/// by all projection math is `sensor_pixel_pitch * binning`. `resolution` is
/// the output image size, i.e. after binning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraConfig {
    focal_length: f64,
    sensor_pixel_pitch: f64,
    binning: u32,
    resolution: (u32, u32),
}

impl CameraConfig {
    pub fn new(
        focal_length: f64,
        sensor_pixel_pitch: f64,
        binning: u32,
        resolution: (u32, u32),
    ) -> Result<Self> {
        ensure_positive("focal_length", focal_length)?;
        ensure_positive("sensor_pixel_pitch", sensor_pixel_pitch)?;
        if binning == 0 {
            return Err(Error::domain("binning factor must be >= 1"));
        }
        if resolution.0 == 0 || resolution.1 == 0 {
            return Err(Error::domain("resolution components must be positive"));
        }
        Ok(Self {
            focal_length,
            sensor_pixel_pitch,
            binning,
            resolution,
        })
    }

    /// Long-range stereo camera: 12 mm lens, 4.55 µm pixels binned 2x, 800x320 output.
    pub fn long_range() -> Self {
        Self::new(0.012, 4.55e-6, 2, (800, 320)).expect("valid preset")
    }

    /// Short-range monocular camera: 3.5 mm lens, 5.86 µm pixels, 1600x640 capture.
    pub fn short_range() -> Self {
        Self::new(0.0035, 5.86e-6, 1, (1600, 640)).expect("valid preset")
    }

    /// Camera with a given focal length in pixels; handy for synthetic tests.
    pub fn from_focal_px(focal_px: f64, resolution: (u32, u32)) -> Result<Self> {
        ensure_positive("focal_px", focal_px)?;
        Self::new(focal_px * 1e-6, 1e-6, 1, resolution)
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn sensor_pixel_pitch(&self) -> f64 {
        self.sensor_pixel_pitch
    }

    pub fn binning(&self) -> u32 {
        self.binning
    }

    pub fn resolution(&self) -> (u32, u32) {
        self.resolution
    }

    /// Effective pixel pitch after binning (meters).
    pub fn pixel_pitch(&self) -> f64 {
        self.sensor_pixel_pitch * f64::from(self.binning)
    }

    /// Focal length expressed in pixels, `f / p_h`.
    pub fn focal_px(&self) -> f64 {
        self.focal_length / self.pixel_pitch()
    }

    pub fn principal_point(&self) -> Point2<f64> {
        Point2::new(
            f64::from(self.resolution.0) / 2.0,
            f64::from(self.resolution.1) / 2.0,
        )
    }

    pub fn horizontal_fov_deg(&self) -> f64 {
        let half_width = f64::from(self.resolution.0) * self.pixel_pitch() / 2.0;
        2.0 * (half_width / self.focal_length).atan().to_degrees()
    }

    pub fn vertical_fov_deg(&self) -> f64 {
        let half_height = f64::from(self.resolution.1) * self.pixel_pitch() / 2.0;
        2.0 * (half_height / self.focal_length).atan().to_degrees()
    }
}

#[derive(Serialize, Deserialize)]
struct CameraDoc {
    focal_length_m: f64,
    sensor_pixel_pitch_m: f64,
    #[serde(default = "one")]
    binning: u32,
    resolution: (u32, u32),
    // Derived; written for readers, ignored on input.
    #[serde(default, skip_deserializing)]
    pixel_pitch_m: f64,
    #[serde(default, skip_deserializing)]
    horizontal_fov_deg: f64,
}

fn one() -> u32 {
    1
}

impl Serialize for CameraConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CameraDoc {
            focal_length_m: self.focal_length,
            sensor_pixel_pitch_m: self.sensor_pixel_pitch,
            binning: self.binning,
            resolution: self.resolution,
            pixel_pitch_m: self.pixel_pitch(),
            horizontal_fov_deg: self.horizontal_fov_deg(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = CameraDoc::deserialize(d)?;
        CameraConfig::new(
            doc.focal_length_m,
            doc.sensor_pixel_pitch_m,
            doc.binning,
            doc.resolution,
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Cone landmark of known size with seven canonical keypoints.
///
/// Landmark-local frame: x to the right, y up, origin at the base center, the
/// silhouette lying in the z = 0 plane. Keypoint 0 is the apex; odd indices
/// run down the left edge and even indices down the right edge at heights
/// 2h/3, h/3 and 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkModel {
    height: f64,
    base_width: f64,
    color: ColorClass,
    keypoints: [Point3<f64>; 7],
}

impl LandmarkModel {
    pub fn new(height: f64, base_width: f64, color: ColorClass) -> Result<Self> {
        ensure_positive("landmark height", height)?;
        ensure_positive("landmark base width", base_width)?;
        let half = base_width / 2.0;
        let kp = |x: f64, y: f64| Point3::new(x, y, 0.0);
        let keypoints = [
            kp(0.0, height),
            kp(-half / 3.0, 2.0 * height / 3.0),
            kp(half / 3.0, 2.0 * height / 3.0),
            kp(-2.0 * half / 3.0, height / 3.0),
            kp(2.0 * half / 3.0, height / 3.0),
            kp(-half, 0.0),
            kp(half, 0.0),
        ];
        Ok(Self {
            height,
            base_width,
            color,
            keypoints,
        })
    }

    pub fn with_color(color: ColorClass) -> Self {
        Self::new(DEFAULT_LANDMARK_HEIGHT, DEFAULT_LANDMARK_BASE_WIDTH, color)
            .expect("valid default landmark")
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn base_width(&self) -> f64 {
        self.base_width
    }

    pub fn color(&self) -> ColorClass {
        self.color
    }

    pub fn keypoints(&self) -> &[Point3<f64>; 7] {
        &self.keypoints
    }
}

impl Default for LandmarkModel {
    fn default() -> Self {
        Self::with_color(ColorClass::Yellow)
    }
}

#[derive(Serialize, Deserialize)]
struct LandmarkDoc {
    height_m: f64,
    base_width_m: f64,
    color: ColorClass,
}

impl Serialize for LandmarkModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LandmarkDoc {
            height_m: self.height,
            base_width_m: self.base_width,
            color: self.color,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LandmarkModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = LandmarkDoc::deserialize(d)?;
        LandmarkModel::new(doc.height_m, doc.base_width_m, doc.color)
            .map_err(serde::de::Error::custom)
    }
}

/// Rigid transform from landmark-local coordinates into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(Rotation3::identity(), translation)
    }

    /// Builds a pose from a raw matrix, rejecting anything that is not a proper rotation.
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "rotation is not orthonormal with det +1 (orthogonality residual {ortho:e}, det {det})"
            )));
        }
        Ok(Self::new(
            Rotation3::from_matrix_unchecked(rotation),
            translation,
        ))
    }

    pub fn transform(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::from_translation(Vector3::zeros())
    }
}

#[derive(Serialize, Deserialize)]
struct PoseDoc {
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl Serialize for RigidPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = self.rotation.matrix();
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = m[(row, col)];
            }
        }
        PoseDoc {
            r,
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = PoseDoc::deserialize(d)?;
        let m = Matrix3::from_row_slice(&doc.r);
        RigidPose::from_matrix(m, Vector3::from(doc.t)).map_err(serde::de::Error::custom)
    }
}

/// Landmark height in pixels at a given distance: `f * h / (p_h * d)`.
pub fn pixels_on_landmark(cam: &CameraConfig, lm: &LandmarkModel, distance: f64) -> Result<f64> {
    ensure_positive("distance", distance)?;
    Ok(cam.focal_length() * lm.height() / (cam.pixel_pitch() * distance))
}

/// The bracketed term `(f / p_h) * (ΔD / D)` of the accuracy model: a
/// non-dimensional figure of merit for a localization algorithm.
pub fn nondimensional_constant(cam: &CameraConfig, rel_error: f64) -> Result<f64> {
    ensure_positive("relative error", rel_error)?;
    Ok(cam.focal_px() * rel_error)
}

/// Pixels of landmark height needed to localize with absolute error
/// `abs_error` when the algorithm's relative error is `rel_error`.
pub fn localization_constant(
    cam: &CameraConfig,
    lm: &LandmarkModel,
    rel_error: f64,
    abs_error: f64,
) -> Result<f64> {
    ensure_positive("absolute error", abs_error)?;
    Ok(nondimensional_constant(cam, rel_error)? * lm.height() / abs_error)
}

/// Inverse of [`localization_constant`]: the absolute error reached when the
/// landmark spans `px_landmark` pixels.
pub fn absolute_error_for_pixels(
    cam: &CameraConfig,
    lm: &LandmarkModel,
    rel_error: f64,
    px_landmark: f64,
) -> Result<f64> {
    ensure_positive("landmark pixel height", px_landmark)?;
    Ok(nondimensional_constant(cam, rel_error)? * lm.height() / px_landmark)
}

/// How many times fewer pixels an algorithm with constant `ours` needs compared
/// with one whose constant is `prior`.
pub fn pixel_reduction_factor(ours: f64, prior: f64) -> Result<f64> {
    ensure_positive("constant", ours)?;
    ensure_positive("constant", prior)?;
    Ok(prior / ours)
}

/// One sensor choice in a hardware sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorOption {
    pub pixel_pitch_m: f64,
    #[serde(default = "one")]
    pub binning: u32,
    pub resolution: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwTradeoffRow {
    pub camera: CameraConfig,
    pub px_at_lookahead: f64,
    pub fov_deg: f64,
    pub feasible: bool,
}

/// Evaluates every (lens, sensor) pair at the look-ahead distance.
///
/// Rows come back ordered by FOV descending, then effective pixel pitch
/// descending: the preferred configuration is the first feasible row.
pub fn hw_tradeoff_sweep(
    lens_options: &[f64],
    sensor_options: &[SensorOption],
    lm: &LandmarkModel,
    lookahead: f64,
    px_threshold: f64,
) -> Result<Vec<HwTradeoffRow>> {
    ensure_positive("lookahead", lookahead)?;
    if lens_options.is_empty() || sensor_options.is_empty() {
        return Err(Error::domain("lens and sensor option lists must be non-empty"));
    }
    if !px_threshold.is_finite() || px_threshold < 0.0 {
        return Err(Error::domain("pixel threshold must be finite and non-negative"));
    }
    let mut rows = Vec::with_capacity(lens_options.len() * sensor_options.len());
    for &focal in lens_options {
        for sensor in sensor_options {
            let camera =
                CameraConfig::new(focal, sensor.pixel_pitch_m, sensor.binning, sensor.resolution)?;
            let px = pixels_on_landmark(&camera, lm, lookahead)?;
            rows.push(HwTradeoffRow {
                camera,
                px_at_lookahead: px,
                fov_deg: camera.horizontal_fov_deg(),
                feasible: px >= px_threshold,
            });
        }
    }
    rows.sort_by(|a, b| {
        b.fov_deg
            .total_cmp(&a.fov_deg)
            .then(b.camera.pixel_pitch().total_cmp(&a.camera.pixel_pitch()))
    });
    Ok(rows)
}

pub fn hw_tradeoff_table(rows: &[HwTradeoffRow]) -> Table {
    let mut table = Table::new(["focal_m", "pitch_m", "px_at_lookahead", "fov_deg", "feasible"]);
    for row in rows {
        table.push(vec![
            Value::Float(row.camera.focal_length()),
            Value::Float(row.camera.pixel_pitch()),
            Value::Float(row.px_at_lookahead),
            Value::Float(row.fov_deg),
            Value::Bool(row.feasible),
        ]);
    }
    table
}

/// Pixel height of the landmark at each distance, for look-ahead plots.
pub fn lookahead_curve(
    cam: &CameraConfig,
    lm: &LandmarkModel,
    distances: &[f64],
) -> Result<Vec<(f64, f64)>> {
    distances
        .iter()
        .map(|&d| pixels_on_landmark(cam, lm, d).map(|px| (d, px)))
        .collect()
}

/// Projects a landmark-frame point into continuous pixel coordinates.
pub fn project_point(
    cam: &CameraConfig,
    pose: &RigidPose,
    point: &Point3<f64>,
) -> Result<Point2<f64>> {
    project_camera_point(cam, &pose.transform(point))
}

/// Projects a point already expressed in the camera frame.
pub fn project_camera_point(cam: &CameraConfig, p: &Point3<f64>) -> Result<Point2<f64>> {
    if !(p.z > 0.0) {
        return Err(Error::Projection { depth: p.z });
    }
    let f = cam.focal_px();
    let c = cam.principal_point();
    Ok(Point2::new(c.x + f * p.x / p.z, c.y + f * p.y / p.z))
}

/// Camera-frame point at `depth` along the ray through `pixel`.
pub fn back_project(cam: &CameraConfig, pixel: &Point2<f64>, depth: f64) -> Point3<f64> {
    let f = cam.focal_px();
    let c = cam.principal_point();
    Point3::new(
        (pixel.x - c.x) * depth / f,
        (pixel.y - c.y) * depth / f,
        depth,
    )
}
