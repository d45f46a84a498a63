//! Landmark depth from a dense disparity map.
//!
//! The pipeline for one detection box is: reproject valid disparities to a
//! coloured cloud, drop dull pixels by saturation and value, subsample,
//! cluster on `(x, y, z, r, g, b)`, and return the XYZ centroid of the
//! cluster whose mean hue is closest to the landmark colour.
//!
//! Camera axes are x right, y down, z forward. Clustering features use metres
//! for XYZ and the raw `[0, 1]` range for RGB, with no further scaling.

mod color;
pub mod render;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::geometry::ColorClass;
use crate::kmeans::kmeans;

pub use color::{circular_mean_hue, hue_distance, rgb_to_hsv};

pub const DEFAULT_BASELINE_M: f64 = 0.10;
pub const DEFAULT_HSV_THRESHOLD: f64 = 0.3;
pub const DEFAULT_MAX_POINTS: usize = 200;
pub const DEFAULT_CLUSTERS: usize = 2;
pub const DEFAULT_KMEANS_ITERATIONS: usize = 50;

/// Dense disparity grid in pixels, row-major. Zero marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
    baseline: f64,
    focal_px: f64,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>, baseline: f64, focal_px: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("disparity map dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "disparity map has {} cells, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(&d) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidDisparity(d as f64));
        }
        ensure_positive("baseline", baseline)?;
        ensure_positive("focal_px", focal_px)?;
        Ok(Self {
            width,
            height,
            data,
            baseline,
            focal_px,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn focal_px(&self) -> f64 {
        self.focal_px
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }
}

/// RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "image has {} pixels, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::domain("rgb channels must lie in [0, 1]"));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> [f32; 3] {
        self.data[row * self.width + col]
    }
}

/// Axis-aligned detection box in pixels, `(x, y)` at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub class: ColorClass,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64, class: ColorClass, confidence: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("bounding box coordinates must be finite"));
        }
        ensure_positive("box width", w)?;
        ensure_positive("box height", h)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::domain(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            x,
            y,
            w,
            h,
            class,
            confidence,
        })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Integer pixel range `[c0, c1) × [r0, r1)` covered by the box after
    /// clamping to a `width × height` image; `None` if nothing remains.
    pub fn pixel_range(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let c0 = self.x.floor().max(0.0) as usize;
        let r0 = self.y.floor().max(0.0) as usize;
        let c1 = ((self.x + self.w).ceil().max(0.0) as usize).min(width);
        let r1 = ((self.y + self.h).ceil().max(0.0) as usize).min(height);
        (c0 < c1 && r0 < r1).then_some((c0, r0, c1, r1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub xyz: [f64; 3],
    pub rgb: [f64; 3],
    pub hsv: [f64; 3],
}

impl ColoredPoint {
    pub fn new(xyz: [f64; 3], rgb: [f64; 3]) -> Self {
        Self {
            xyz,
            rgb,
            hsv: rgb_to_hsv(rgb),
        }
    }

    fn features(&self) -> [f64; 6] {
        let [x, y, z] = self.xyz;
        let [r, g, b] = self.rgb;
        [x, y, z, r, g, b]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<ColoredPoint>,
}

impl LabeledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<[f64; 3]> {
        if self.points.is_empty() {
            return None;
        }
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for (a, x) in c.iter_mut().zip(p.xyz) {
                *a += x / n;
            }
        }
        Some(c)
    }

    /// Per-axis `(min, max)` of the XYZ coordinates.
    pub fn bounds(&self) -> Option<[(f64, f64); 3]> {
        let first = self.points.first()?;
        let mut b = first.xyz.map(|v| (v, v));
        for p in &self.points[1..] {
            for (axis, v) in b.iter_mut().zip(p.xyz) {
                axis.0 = axis.0.min(v);
                axis.1 = axis.1.max(v);
            }
        }
        Some(b)
    }

    pub fn mean_hue(&self) -> f64 {
        circular_mean_hue(self.points.iter().map(|p| p.hsv[0]))
    }
}

pub fn disparity_to_depth(d: f64, map: &DisparityMap) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidDisparity(d));
    }
    Ok(map.focal_px * map.baseline / d)
}

pub fn depth_to_disparity(z: f64, map: &DisparityMap) -> Result<f64> {
    ensure_positive("depth", z)?;
    Ok(map.focal_px * map.baseline / z)
}

/// First-order depth uncertainty `Z² Δd / (f B)` for a disparity error `Δd`.
pub fn depth_error_model(distance: f64, map: &DisparityMap, disparity_error: f64) -> Result<f64> {
    depth_error(distance, map.focal_px, map.baseline, disparity_error)
}

/// [`depth_error_model`] without a map.
pub fn depth_error(distance: f64, focal_px: f64, baseline: f64, disparity_error: f64) -> Result<f64> {
    ensure_positive("distance", distance)?;
    ensure_positive("focal_px", focal_px)?;
    ensure_positive("baseline", baseline)?;
    if !(disparity_error >= 0.0) || !disparity_error.is_finite() {
        return Err(Error::domain("disparity error must be non-negative"));
    }
    Ok(distance * distance * disparity_error / (focal_px * baseline))
}

/// Reprojects every valid-disparity pixel inside the box.
pub fn box_to_cloud(map: &DisparityMap, image: &RgbImage, bbox: &BoundingBox) -> Result<LabeledPointCloud> {
    if (map.width, map.height) != (image.width, image.height) {
        return Err(Error::domain(format!(
            "disparity map is {}x{} but image is {}x{}",
            map.width, map.height, image.width, image.height
        )));
    }
    let (c0, r0, c1, r1) = bbox
        .pixel_range(map.width, map.height)
        .ok_or_else(|| Error::domain("bounding box lies outside the image"))?;
    let (cx, cy) = map.principal_point();
    let f = map.focal_px;
    let mut points = Vec::new();
    for row in r0..r1 {
        for col in c0..c1 {
            let d = map.get(col, row) as f64;
            if d <= 0.0 {
                continue;
            }
            let z = f * map.baseline / d;
            let xyz = [(col as f64 - cx) * z / f, (row as f64 - cy) * z / f, z];
            points.push(ColoredPoint::new(xyz, image.get(col, row).map(f64::from)));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud("no valid disparity inside the box".into()));
    }
    Ok(LabeledPointCloud { points })
}

/// Keeps points whose saturation and value both reach `threshold`.
pub fn hsv_filter(cloud: &LabeledPointCloud, threshold: f64) -> LabeledPointCloud {
    LabeledPointCloud {
        points: cloud
            .points
            .iter()
            .filter(|p| p.hsv[1] >= threshold && p.hsv[2] >= threshold)
            .copied()
            .collect(),
    }
}

/// Seeded uniform subsample to `max_points`, preserving input order.
pub fn conditional_downsample(cloud: &LabeledPointCloud, max_points: usize, seed: u64) -> LabeledPointCloud {
    if cloud.len() <= max_points {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, cloud.len(), max_points).into_vec();
    idx.sort_unstable();
    LabeledPointCloud {
        points: idx.into_iter().map(|i| cloud.points[i]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub cloud: LabeledPointCloud,
    pub centroid: [f64; 3],
    pub mean_hue: f64,
}

impl Cluster {
    fn from_cloud(cloud: LabeledPointCloud) -> Option<Self> {
        let centroid = cloud.centroid()?;
        let mean_hue = cloud.mean_hue();
        Some(Self {
            cloud,
            centroid,
            mean_hue,
        })
    }
}

/// k-means on `(x, y, z, r, g, b)`. Clusters that end up empty are omitted.
pub fn cluster_xyzrgb(cloud: &LabeledPointCloud, k: usize, seed: u64) -> Result<Vec<Cluster>> {
    cluster_xyzrgb_with(cloud, k, seed, DEFAULT_KMEANS_ITERATIONS)
}

pub fn cluster_xyzrgb_with(
    cloud: &LabeledPointCloud,
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<Vec<Cluster>> {
    let features: Vec<[f64; 6]> = cloud.points.iter().map(ColoredPoint::features).collect();
    let km = kmeans(&features, k, seed, max_iterations)?;
    let mut parts = vec![LabeledPointCloud::default(); k];
    for (p, &l) in cloud.points.iter().zip(&km.labels) {
        parts[l].points.push(*p);
    }
    Ok(parts.into_iter().filter_map(Cluster::from_cloud).collect())
}

/// Reference hue per landmark colour, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HueReference {
    pub blue: f64,
    pub yellow: f64,
    pub orange: f64,
}

impl Default for HueReference {
    fn default() -> Self {
        Self {
            blue: 220.0,
            yellow: 50.0,
            orange: 25.0,
        }
    }
}

impl HueReference {
    pub fn hue(&self, color: ColorClass) -> f64 {
        match color {
            ColorClass::Blue => self.blue,
            ColorClass::Yellow => self.yellow,
            ColorClass::Orange => self.orange,
        }
    }
}

/// Index of the cluster whose mean hue is circularly closest to `reference_hue`.
/// Ties go to the lower index.
pub fn select_by_hue(clusters: &[Cluster], reference_hue: f64) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in clusters.iter().enumerate() {
        let d = hue_distance(c.mean_hue, reference_hue);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::domain("no clusters to select from"))
}

pub fn select_cone_cluster<'a>(
    clusters: &'a [Cluster],
    target: ColorClass,
    hues: &HueReference,
) -> Result<([f64; 3], &'a Cluster)> {
    let c = &clusters[select_by_hue(clusters, hues.hue(target))?];
    Ok((c.centroid, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StereoParams {
    pub hsv_threshold: f64,
    pub max_points: usize,
    pub clusters: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub hues: HueReference,
}

impl Default for StereoParams {
    fn default() -> Self {
        Self {
            hsv_threshold: DEFAULT_HSV_THRESHOLD,
            max_points: DEFAULT_MAX_POINTS,
            clusters: DEFAULT_CLUSTERS,
            max_iterations: DEFAULT_KMEANS_ITERATIONS,
            seed: crate::DEFAULT_SEED,
            hues: HueReference::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StereoDiagnostics {
    pub points_in_box: usize,
    pub after_filter: usize,
    pub after_downsample: usize,
    pub cluster_sizes: Vec<usize>,
    pub selected_cluster: usize,
    pub selected_mean_hue: f64,
    /// Per-axis `(min, max)` of the selected cluster.
    pub selected_bounds: [(f64, f64); 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StereoLocalization {
    pub position: [f64; 3],
    pub diagnostics: StereoDiagnostics,
}

impl StereoLocalization {
    pub fn distance(&self) -> f64 {
        let [x, y, z] = self.position;
        (x * x + y * y + z * z).sqrt()
    }
}

pub fn stereo_localize(
    map: &DisparityMap,
    image: &RgbImage,
    bbox: &BoundingBox,
    target: ColorClass,
    params: &StereoParams,
) -> Result<StereoLocalization> {
    let cloud = box_to_cloud(map, image, bbox).map_err(|e| e.in_stage("box_to_cloud"))?;
    let filtered = hsv_filter(&cloud, params.hsv_threshold);
    if filtered.len() < params.clusters {
        return Err(Error::EmptyCloud(format!(
            "{} of {} points survive the threshold {}, need {}",
            filtered.len(),
            cloud.len(),
            params.hsv_threshold,
            params.clusters
        ))
        .in_stage("hsv_filter"));
    }
    let sampled = conditional_downsample(&filtered, params.max_points, params.seed);
    let clusters = cluster_xyzrgb_with(&sampled, params.clusters, params.seed, params.max_iterations)
        .map_err(|e| e.in_stage("cluster_xyzrgb"))?;
    let selected = select_by_hue(&clusters, params.hues.hue(target))
        .map_err(|e| e.in_stage("select_cone_cluster"))?;
    let chosen = &clusters[selected];
    Ok(StereoLocalization {
        position: chosen.centroid,
        diagnostics: StereoDiagnostics {
            points_in_box: cloud.len(),
            after_filter: filtered.len(),
            after_downsample: sampled.len(),
            cluster_sizes: clusters.iter().map(|c| c.cloud.len()).collect(),
            selected_cluster: selected,
            selected_mean_hue: chosen.mean_hue,
            selected_bounds: chosen.cloud.bounds().expect("non-empty cluster"),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flat_map(w: usize, h: usize, d: f32) -> DisparityMap {
        DisparityMap::new(w, h, vec![d; w * h], 0.1, 1318.7).unwrap()
    }

    fn solid(w: usize, h: usize, rgb: [f32; 3]) -> RgbImage {
        RgbImage::new(w, h, vec![rgb; w * h]).unwrap()
    }

    fn bbox(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h, ColorClass::Yellow, 0.9).unwrap()
    }

    #[test]
    fn depth_from_disparity() {
        let m = flat_map(4, 4, 1.0);
        assert_relative_eq!(disparity_to_depth(10.0, &m).unwrap(), 13.187, epsilon = 1e-12);
        assert_relative_eq!(
            disparity_to_depth(20.0, &m).unwrap(),
            disparity_to_depth(10.0, &m).unwrap() / 2.0,
            epsilon = 1e-12
        );
        assert!(matches!(disparity_to_depth(0.0, &m), Err(Error::InvalidDisparity(_))));
        assert!(disparity_to_depth(-1.0, &m).is_err());
    }

    #[test]
    fn depth_error_values() {
        let m = flat_map(4, 4, 1.0);
        let e = depth_error_model(20.0, &m, 0.15).unwrap();
        assert_relative_eq!(e, 400.0 * 0.15 / 131.87, epsilon = 1e-12);
        assert!((e - 0.455).abs() < 1e-3);
        assert_eq!(depth_error_model(20.0, &m, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            depth_error_model(40.0, &m, 0.15).unwrap(),
            4.0 * e,
            epsilon = 1e-12
        );
    }

    #[test]
    fn map_validation() {
        assert!(DisparityMap::new(2, 2, vec![0.0, 1.0, f32::NAN, 2.0], 0.1, 100.0).is_err());
        assert!(DisparityMap::new(2, 2, vec![0.0, 1.0, -1.0, 2.0], 0.1, 100.0).is_err());
        assert!(DisparityMap::new(2, 2, vec![0.0; 3], 0.1, 100.0).is_err());
        assert!(DisparityMap::new(2, 2, vec![0.0; 4], 0.0, 100.0).is_err());
        assert!(RgbImage::new(1, 1, vec![[1.5, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn constant_disparity_gives_plane() {
        let m = flat_map(20, 10, 8.0);
        let img = solid(20, 10, [1.0, 0.8, 0.0]);
        let cloud = box_to_cloud(&m, &img, &bbox(2.0, 1.0, 5.0, 4.0)).unwrap();
        assert_eq!(cloud.len(), 20);
        let z = 1318.7 * 0.1 / 8.0;
        assert!(cloud.points.iter().all(|p| (p.xyz[2] - z).abs() < 1e-9));
        // Pixel (10, 5) is the principal point.
        let m = flat_map(20, 10, 8.0);
        let c = box_to_cloud(&m, &img, &bbox(10.0, 5.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(c.points[0].xyz[0], 0.0);
        assert_relative_eq!(c.points[0].xyz[1], 0.0);
    }

    #[test]
    fn zero_disparity_box_is_empty() {
        let m = flat_map(8, 8, 0.0);
        let img = solid(8, 8, [1.0, 0.8, 0.0]);
        assert!(matches!(
            box_to_cloud(&m, &img, &bbox(0.0, 0.0, 4.0, 4.0)),
            Err(Error::EmptyCloud(_))
        ));
    }

    #[test]
    fn box_clamped_to_image() {
        let m = flat_map(8, 8, 4.0);
        let img = solid(8, 8, [1.0, 0.8, 0.0]);
        let cloud = box_to_cloud(&m, &img, &bbox(-3.0, 6.0, 5.0, 10.0)).unwrap();
        assert_eq!(cloud.len(), 2 * 2);
        assert!(box_to_cloud(&m, &img, &bbox(20.0, 0.0, 2.0, 2.0)).is_err());
    }

    fn point(rgb: [f64; 3]) -> ColoredPoint {
        ColoredPoint::new([0.0, 0.0, 5.0], rgb)
    }

    #[test]
    fn filter_removes_gray_keeps_yellow() {
        let cloud = LabeledPointCloud {
            points: vec![
                point([0.35, 0.35, 0.36]),
                point([1.0, 1.0, 0.0]),
                point([0.1, 0.05, 0.0]),
            ],
        };
        let f = hsv_filter(&cloud, 0.3);
        assert_eq!(f.len(), 1);
        assert_eq!(f.points[0].rgb, [1.0, 1.0, 0.0]);
        assert_eq!(hsv_filter(&cloud, 0.0), cloud);
    }

    #[test]
    fn downsample_counts() {
        let cloud = LabeledPointCloud {
            points: (0..1000)
                .map(|i| ColoredPoint::new([i as f64, 0.0, 1.0], [1.0, 0.0, 0.0]))
                .collect(),
        };
        let d = conditional_downsample(&cloud, 200, 4);
        assert_eq!(d.len(), 200);
        assert!(d.points.windows(2).all(|w| w[0].xyz[0] < w[1].xyz[0]));
        assert_eq!(d, conditional_downsample(&cloud, 200, 4));
        let small = LabeledPointCloud {
            points: cloud.points[..150].to_vec(),
        };
        assert_eq!(conditional_downsample(&small, 200, 4), small);
    }

    #[test]
    fn clustering_recovers_blobs() {
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let j = (i % 7) as f64 * 0.01;
            if i % 2 == 0 {
                points.push(ColoredPoint::new([0.1 + j, 0.0, 10.0], [1.0, 0.85, 0.0]));
                truth.push(0);
            } else {
                points.push(ColoredPoint::new([1.5 - j, 0.3, 12.0], [0.0, 0.2, 1.0]));
                truth.push(1);
            }
        }
        let cloud = LabeledPointCloud { points };
        let clusters = cluster_xyzrgb(&cloud, 2, 7).unwrap();
        assert_eq!(clusters.len(), 2);
        for c in &clusters {
            assert_eq!(c.cloud.len(), 20);
            let z = c.cloud.points[0].xyz[2];
            assert!(c.cloud.points.iter().all(|p| p.xyz[2] == z));
        }
        let one = cluster_xyzrgb(&cloud, 1, 7).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].cloud, cloud);
        assert!(cluster_xyzrgb(&LabeledPointCloud { points: vec![point([1.0, 0.0, 0.0])] }, 2, 0).is_err());
    }

    fn cluster_with_hue(h: f64) -> Cluster {
        Cluster {
            cloud: LabeledPointCloud {
                points: vec![point([1.0, 0.0, 0.0])],
            },
            centroid: [h, 0.0, 0.0],
            mean_hue: h,
        }
    }

    #[test]
    fn hue_selection() {
        let cs = [cluster_with_hue(55.0), cluster_with_hue(220.0)];
        let (c, _) = select_cone_cluster(&cs, ColorClass::Yellow, &HueReference::default()).unwrap();
        assert_eq!(c[0], 55.0);
        let (c, _) = select_cone_cluster(&cs, ColorClass::Blue, &HueReference::default()).unwrap();
        assert_eq!(c[0], 220.0);
        let wrap = [cluster_with_hue(180.0), cluster_with_hue(359.0)];
        assert_eq!(select_by_hue(&wrap, 10.0).unwrap(), 1);
        assert_eq!(select_by_hue(&wrap[..1], 300.0).unwrap(), 0);
        assert!(select_by_hue(&[], 10.0).is_err());
    }

    #[test]
    fn ground_only_box_fails_in_filter_stage() {
        let m = flat_map(16, 16, 5.0);
        let img = solid(16, 16, [0.35, 0.35, 0.37]);
        let err = stereo_localize(&m, &img, &bbox(0.0, 0.0, 8.0, 8.0), ColorClass::Yellow, &StereoParams::default())
            .unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "hsv_filter", .. }), "{err}");
        assert!(err.to_string().contains("hsv_filter"));
    }

    proptest! {
        #[test]
        fn depth_disparity_round_trip(z in 0.1f64..200.0) {
            let m = flat_map(2, 2, 1.0);
            let back = disparity_to_depth(depth_to_disparity(z, &m).unwrap(), &m).unwrap();
            prop_assert!((back - z).abs() <= 1e-12 * z.max(1.0));
        }

        #[test]
        fn filter_idempotent(
            rgbs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 0..50),
            t in 0.0f64..1.0,
        ) {
            let cloud = LabeledPointCloud {
                points: rgbs.into_iter().map(|(r, g, b)| point([r, g, b])).collect(),
            };
            let once = hsv_filter(&cloud, t);
            prop_assert_eq!(hsv_filter(&once, t), once);
        }

        #[test]
        fn hsv_round_trip_consistent(r in 0.0f64..=1.0, g in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let [h, s, v] = rgb_to_hsv([r, g, b]);
            prop_assert!((0.0..360.0).contains(&h));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((v - r.max(g).max(b)).abs() < 1e-15);
        }
    }
}
