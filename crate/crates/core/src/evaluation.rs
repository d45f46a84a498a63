//! Detection metrics, depth-error statistics and the latency model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{median, AnnotatedImage};
use crate::error::{ensure_positive, Error, Result};
use crate::geometry::ColorClass;
use crate::report::Table;
use crate::stereo::BoundingBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PDF_BINS: usize = 10;
/// Median human visual reaction latency (ms).
pub const HUMAN_LATENCY_MS: f64 = 261.0;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionMatch {
    pub predicted: BoundingBox,
    pub ground_truth: BoundingBox,
    pub iou: f64,
}

impl DetectionMatch {
    pub fn new(predicted: BoundingBox, ground_truth: BoundingBox) -> Self {
        Self {
            predicted,
            ground_truth,
            iou: iou(&predicted, &ground_truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IouPdf {
    /// Probability mass per bin; bin `i` covers `[i/n, (i+1)/n)`, the last
    /// bin also takes IoU = 1.
    pub masses: Vec<f64>,
    pub median: f64,
}

impl IouPdf {
    pub fn to_table(&self) -> Table {
        let n = self.masses.len() as f64;
        let mut t = Table::new(["bin_lo", "bin_hi", "mass"]);
        for (i, m) in self.masses.iter().enumerate() {
            t.push(vec![(i as f64 / n).into(), ((i + 1) as f64 / n).into(), (*m).into()]);
        }
        t
    }
}

pub fn iou_pdf_values(ious: &[f64], bins: usize) -> Result<IouPdf> {
    if ious.is_empty() {
        return Err(Error::domain("no IoU values"));
    }
    if bins == 0 {
        return Err(Error::domain("need at least one bin"));
    }
    if ious.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::domain("IoU values must lie in [0, 1]"));
    }
    let mut counts = vec![0usize; bins];
    for &v in ious {
        counts[((v * bins as f64).floor() as usize).min(bins - 1)] += 1;
    }
    let n = ious.len() as f64;
    Ok(IouPdf {
        masses: counts.into_iter().map(|c| c as f64 / n).collect(),
        median: median(ious),
    })
}

pub fn iou_pdf(matches: &[DetectionMatch], bins: usize) -> Result<IouPdf> {
    iou_pdf_values(&matches.iter().map(|m| m.iou).collect::<Vec<_>>(), bins)
}

/// A box tagged with the image it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BoundingBox,
}

pub fn flatten_detections(images: &[AnnotatedImage]) -> Vec<Detection> {
    images
        .iter()
        .flat_map(|img| {
            img.boxes.iter().map(|b| Detection {
                image_id: img.path.clone(),
                bbox: *b,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: ColorClass,
    pub ground_truths: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub ap: f64,
    /// `(recall, precision)` after each ranked detection.
    pub curve: Vec<(f64, f64)>,
    /// True-positive pairs in rank order.
    pub matches: Vec<DetectionMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    /// Classes with at least one ground truth, in [`ColorClass::ALL`] order.
    pub classes: Vec<ClassAp>,
    pub map: f64,
}

impl MapResult {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["class", "ground_truths", "detections", "true_positives", "ap"]);
        for c in &self.classes {
            t.push(vec![
                c.class.as_str().into(),
                c.ground_truths.into(),
                c.detections.into(),
                c.true_positives.into(),
                c.ap.into(),
            ]);
        }
        t.push(vec!["mAP".into(), "".into(), "".into(), "".into(), self.map.into()]);
        t
    }
}

/// Confidence-descending order; ties fall back to image id then coordinates
/// so the ranking does not depend on input order.
fn rank_cmp(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.bbox
        .confidence
        .total_cmp(&a.bbox.confidence)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.bbox.x.total_cmp(&b.bbox.x))
        .then_with(|| a.bbox.y.total_cmp(&b.bbox.y))
        .then_with(|| a.bbox.w.total_cmp(&b.bbox.w))
        .then_with(|| a.bbox.h.total_cmp(&b.bbox.h))
}

/// Area under the ranked precision-recall points, trapezoidal, starting
/// from `(recall 0, precision 1)`.
pub fn trapezoid_ap(curve: &[(f64, f64)]) -> f64 {
    let mut prev = (0.0, 1.0);
    let mut area = 0.0;
    for &(r, p) in curve {
        area += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    area
}

/// Per-class AP with greedy matching at `iou_threshold` and their mean.
///
/// Each detection, in rank order, claims the unmatched ground truth of its
/// class and image with the highest IoU (lowest index on ties) if that IoU
/// reaches the threshold.
pub fn precision_recall_map(
    detections: &[Detection],
    ground_truths: &[Detection],
    iou_threshold: f64,
) -> Result<MapResult> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::domain("IoU threshold must lie in [0, 1]"));
    }
    if let Some(d) = detections.iter().find(|d| !(0.0..=1.0).contains(&d.bbox.confidence)) {
        return Err(Error::domain(format!("confidence {} outside [0, 1]", d.bbox.confidence)));
    }
    let mut classes = Vec::new();
    for class in ColorClass::ALL {
        let gts: Vec<&Detection> = ground_truths.iter().filter(|g| g.bbox.class == class).collect();
        let mut dets: Vec<&Detection> = detections.iter().filter(|d| d.bbox.class == class).collect();
        if gts.is_empty() {
            if !dets.is_empty() {
                log::warn!("class {class}: {} detections but no ground truth; AP undefined, excluded", dets.len());
            }
            continue;
        }
        dets.sort_by(|a, b| rank_cmp(a, b));
        let mut used = vec![false; gts.len()];
        let mut tp = 0usize;
        let mut curve = Vec::with_capacity(dets.len());
        let mut matches = Vec::new();
        for (rank, d) in dets.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if used[j] || g.image_id != d.image_id {
                    continue;
                }
                let v = iou(&d.bbox, &g.bbox);
                if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            if let Some((j, v)) = best {
                used[j] = true;
                tp += 1;
                matches.push(DetectionMatch {
                    predicted: d.bbox,
                    ground_truth: gts[j].bbox,
                    iou: v,
                });
            }
            curve.push((tp as f64 / gts.len() as f64, tp as f64 / (rank + 1) as f64));
        }
        classes.push(ClassAp {
            class,
            ground_truths: gts.len(),
            detections: dets.len(),
            true_positives: tp,
            ap: trapezoid_ap(&curve),
            curve,
            matches,
        });
    }
    if classes.is_empty() {
        return Err(Error::degenerate("no class has ground truth; mAP undefined"));
    }
    let map = classes.iter().map(|c| c.ap).sum::<f64>() / classes.len() as f64;
    Ok(MapResult { classes, map })
}

impl MapResult {
    /// Every true-positive pair across classes.
    pub fn matches(&self) -> Vec<DetectionMatch> {
        self.classes.iter().flat_map(|c| c.matches.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthTrial {
    pub true_distance: f64,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBounds {
    /// Bound on |signed mean error| (m).
    pub mean: f64,
    /// Bound on the sample standard deviation (m).
    pub std: f64,
}

impl DepthBounds {
    pub const MONO: DepthBounds = DepthBounds { mean: 0.5, std: 0.05 };
    pub const STEREO: DepthBounds = DepthBounds { mean: 0.5, std: 0.10 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthErrorRow {
    pub true_distance: f64,
    pub frames: usize,
    pub mean_error: f64,
    pub std: f64,
    pub max_abs_error: f64,
    pub pass: bool,
}

pub fn depth_error_stats(trials: &[DepthTrial], bounds: &DepthBounds) -> Result<Vec<DepthErrorRow>> {
    if trials.is_empty() {
        return Err(Error::domain("no depth trials"));
    }
    trials
        .iter()
        .map(|t| {
            if t.estimates.is_empty() {
                return Err(Error::domain(format!("trial at {} m has no estimates", t.true_distance)));
            }
            let n = t.estimates.len();
            let errs: Vec<f64> = t.estimates.iter().map(|e| e - t.true_distance).collect();
            let mean = errs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let max_abs = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            Ok(DepthErrorRow {
                true_distance: t.true_distance,
                frames: n,
                mean_error: mean,
                std,
                max_abs_error: max_abs,
                pass: mean.abs() <= bounds.mean && std <= bounds.std,
            })
        })
        .collect()
}

pub fn depth_error_table(rows: &[DepthErrorRow]) -> Table {
    let mut t = Table::new(["true_distance", "frames", "mean_error", "std", "max_abs_error", "pass"]);
    for r in rows {
        t.push(vec![
            r.true_distance.into(),
            r.frames.into(),
            r.mean_error.into(),
            r.std.into(),
            r.max_abs_error.into(),
            r.pass.into(),
        ]);
    }
    t
}

/// Latency of one stage in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyDist {
    Constant { ms: f64 },
    /// Gaussian truncated at zero by clamping.
    Normal { mean: f64, std: f64 },
    Uniform { min: f64, max: f64 },
}

impl LatencyDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LatencyDist::Constant { ms } => ms >= 0.0 && ms.is_finite(),
            LatencyDist::Normal { mean, std } => mean >= 0.0 && std >= 0.0 && mean.is_finite() && std.is_finite(),
            LatencyDist::Uniform { min, max } => min >= 0.0 && max >= min && max.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid latency distribution {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LatencyDist::Constant { ms } => ms,
            LatencyDist::Normal { mean, .. } => mean,
            LatencyDist::Uniform { min, max } => (min + max) / 2.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            LatencyDist::Constant { ms } => ms,
            LatencyDist::Normal { mean, std } => {
                if std == 0.0 {
                    mean
                } else {
                    Normal::new(mean, std).expect("validated").sample(rng).max(0.0)
                }
            }
            LatencyDist::Uniform { min, max } => {
                if min == max {
                    min
                } else {
                    Uniform::new(min, max).expect("validated").sample(rng)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub latency: LatencyDist,
}

impl Stage {
    pub fn constant(name: &str, ms: f64) -> Self {
        Self {
            name: name.to_string(),
            latency: LatencyDist::Constant { ms },
        }
    }
}

/// Serial stages of one pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub name: String,
    pub stages: Vec<Stage>,
}

/// Parallel branches joined by a serial per-landmark stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineProfile {
    pub frame_period_ms: f64,
    pub branches: Vec<Branch>,
    pub per_landmark: Stage,
}

impl PipelineProfile {
    /// Stage numbers chosen so the shares resemble the measured breakdown;
    /// they are a calibration, not measurements.
    pub fn calibrated() -> Self {
        let branch = |name: &str, stages: &[(&str, f64)]| Branch {
            name: name.to_string(),
            stages: stages.iter().map(|&(n, ms)| Stage::constant(n, ms)).collect(),
        };
        Self {
            frame_period_ms: 50.0,
            branches: vec![
                branch(
                    "mono",
                    &[
                        ("capture", 5.0),
                        ("usb_transfer", 10.0),
                        ("time_sync", 0.5),
                        ("resize", 2.5),
                        ("detector", 30.0),
                        ("keypoints", 12.0),
                    ],
                ),
                branch(
                    "stereo",
                    &[
                        ("capture", 5.0),
                        ("disparity", 14.0),
                        ("transfer", 6.0),
                        ("detector", 30.0),
                        ("point_cloud", 4.0),
                    ],
                ),
            ],
            per_landmark: Stage::constant("per_landmark_depth", 3.4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("frame period", self.frame_period_ms)?;
        if self.branches.is_empty() {
            return Err(Error::domain("profile has no branches"));
        }
        for s in self.branches.iter().flat_map(|b| &b.stages) {
            s.latency.validate()?;
        }
        self.per_landmark.latency.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub branch: String,
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub landmarks: usize,
    /// Worst-case wait for the next frame: one full period.
    pub frame_to_frame_ms: f64,
    /// Expected wait for a uniformly arriving landmark: half a period.
    pub frame_to_frame_expected_ms: f64,
    pub stages: Vec<StageTiming>,
    pub branch_totals: Vec<(String, f64)>,
    pub per_landmark_ms: f64,
    /// Worst-case frame wait + slowest branch + per-landmark work.
    pub total_ms: f64,
    /// As `total_ms` with the expected frame wait.
    pub total_expected_ms: f64,
    pub frame_share: f64,
    pub frame_share_expected: f64,
}

impl LatencyReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["component", "ms"]);
        t.push(vec!["frame_to_frame".into(), self.frame_to_frame_ms.into()]);
        for s in &self.stages {
            t.push(vec![format!("{}/{}", s.branch, s.stage).into(), s.ms.into()]);
        }
        for (b, ms) in &self.branch_totals {
            t.push(vec![format!("{b}/total").into(), (*ms).into()]);
        }
        t.push(vec!["per_landmark_total".into(), self.per_landmark_ms.into()]);
        t.push(vec!["total".into(), self.total_ms.into()]);
        t.push(vec!["frame_to_frame_expected".into(), self.frame_to_frame_expected_ms.into()]);
        t.push(vec!["total_expected".into(), self.total_expected_ms.into()]);
        t.push(vec!["frame_share".into(), self.frame_share.into()]);
        t.push(vec!["frame_share_expected".into(), self.frame_share_expected.into()]);
        t
    }
}

/// One draw of end-to-end latency for `n_landmarks` landmarks.
///
/// Branch stages are sampled in profile order first, then one per-landmark
/// sample per landmark, so the fixed part does not depend on `n_landmarks`.
pub fn simulate_latency(profile: &PipelineProfile, n_landmarks: usize, seed: u64) -> Result<LatencyReport> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages = Vec::new();
    let mut branch_totals = Vec::new();
    for b in &profile.branches {
        let mut total = 0.0;
        for s in &b.stages {
            let ms = s.latency.sample(&mut rng);
            total += ms;
            stages.push(StageTiming {
                branch: b.name.clone(),
                stage: s.name.clone(),
                ms,
            });
        }
        branch_totals.push((b.name.clone(), total));
    }
    let per_landmark_ms: f64 = (0..n_landmarks).map(|_| profile.per_landmark.latency.sample(&mut rng)).sum();
    let slowest = branch_totals.iter().map(|b| b.1).fold(0.0, f64::max);
    let f2f = profile.frame_period_ms;
    let total = f2f + slowest + per_landmark_ms;
    let total_expected = f2f / 2.0 + slowest + per_landmark_ms;
    Ok(LatencyReport {
        landmarks: n_landmarks,
        frame_to_frame_ms: f2f,
        frame_to_frame_expected_ms: f2f / 2.0,
        stages,
        branch_totals,
        per_landmark_ms,
        total_ms: total,
        total_expected_ms: total_expected,
        frame_share: f2f / total,
        frame_share_expected: f2f / 2.0 / total_expected,
    })
}

/// Percentage by which `total_ms` beats the median human reaction latency.
pub fn human_latency_comparison(total_ms: f64) -> Result<f64> {
    ensure_positive("total latency", total_ms)?;
    Ok((1.0 - total_ms / HUMAN_LATENCY_MS) * 100.0)
}
