//! Deterministic inputs shared by the benchmarks.

use conekit_core::dataset::AnnotatedImage;
use conekit_core::evaluation::{flatten_detections, Detection};
use conekit_core::monocular::upright_rotation;
use conekit_core::stereo::render::{SynthCone, SyntheticScene};
use conekit_core::{
    BoundingBox, CameraConfig, ColorClass, DisparityMap, KeypointSet, LandmarkModel, RgbImage, RigidPose,
};
use nalgebra::{Point2, Vector3};

pub struct MonoFixture {
    pub camera: CameraConfig,
    pub landmark: LandmarkModel,
    pub clean: KeypointSet,
    /// `clean` with keypoint 3 pushed 15 px off.
    pub outlier: KeypointSet,
}

pub fn mono_fixture(distance: f64) -> MonoFixture {
    let camera = CameraConfig::long_range();
    let landmark = LandmarkModel::with_color(ColorClass::Blue);
    let t = Vector3::new(0.6, 0.8, distance);
    let pose = RigidPose::new(upright_rotation(&t), t);
    let clean = KeypointSet::project(&landmark, &pose, &camera).expect("landmark in front of camera");
    let mut outlier = clean;
    outlier.points[3] += nalgebra::Vector2::new(15.0, 0.0);
    MonoFixture {
        camera,
        landmark,
        clean,
        outlier,
    }
}

/// Slightly perturbed copy of `kps`, as a network prediction would be.
pub fn jittered(kps: &KeypointSet) -> KeypointSet {
    let mut out = *kps;
    for (i, p) in out.points.iter_mut().enumerate() {
        let s = (i as f64 * 1.7).sin();
        *p = Point2::new(p.x + 0.8 * s, p.y - 0.5 * s);
    }
    out
}

pub struct StereoFixture {
    pub map: DisparityMap,
    pub image: RgbImage,
    pub bbox: BoundingBox,
    pub target: ColorClass,
}

pub fn stereo_fixture(distance: f64) -> StereoFixture {
    let scene = SyntheticScene {
        camera_height: 0.5,
        ..SyntheticScene::new(
            CameraConfig::long_range().focal_px(),
            vec![SynthCone::new(0.4, distance, ColorClass::Yellow)],
        )
    };
    let (map, image) = scene.render().expect("scene renders");
    StereoFixture {
        map,
        image,
        bbox: scene.bounding_box(0, 3.0).expect("cone in view"),
        target: ColorClass::Yellow,
    }
}

/// `n_images` ground-truth images with ten boxes each, and predictions
/// shifted by a few pixels with varied confidences.
pub fn detection_fixture(n_images: usize) -> (Vec<Detection>, Vec<Detection>) {
    let mut gt = Vec::new();
    let mut pred = Vec::new();
    for i in 0..n_images {
        let mut g = Vec::new();
        let mut p = Vec::new();
        for j in 0..10 {
            let class = ColorClass::ALL[j % 3];
            let (x, y) = (60.0 * j as f64 + 5.0, 40.0 + 7.0 * ((i + j) % 5) as f64);
            let (w, h) = (12.0 + j as f64, 24.0 + 2.0 * j as f64);
            g.push(BoundingBox::new(x, y, w, h, class, 1.0).expect("valid box"));
            let shift = ((i * 7 + j * 3) % 5) as f64;
            let conf = 0.3 + 0.07 * ((i + 2 * j) % 10) as f64;
            p.push(BoundingBox::new(x + shift, y - shift / 2.0, w, h, class, conf).expect("valid box"));
        }
        let name = format!("img{i}.png");
        gt.push(AnnotatedImage::new(name.clone(), 800, 320, g).expect("valid image"));
        pred.push(AnnotatedImage::new(name, 800, 320, p).expect("valid image"));
    }
    (flatten_detections(&pred), flatten_detections(&gt))
}

/// `(w, h)` pairs spread over a few size groups.
pub fn anchor_boxes(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let group = (i % 4) as f64;
            let wobble = ((i * 37) % 11) as f64 / 10.0;
            [8.0 + 10.0 * group + wobble, 16.0 + 20.0 * group + 2.0 * wobble]
        })
        .collect()
}
