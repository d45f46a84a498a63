//! Detector training-data preparation.
//!
//! Source image sets are rescaled by one factor so their landmark heights
//! match a target distribution, then padded or tiled onto a fixed canvas.
//! Anchor priors come from k-means in `(w, h)` space, and [`yolo_loss`]
//! evaluates the weighted detector objective on already-matched records.
//!
//! Annotation lines read `image_path w h x y bw bh class [confidence]`, one
//! box per line; a line with only `image_path w h` declares an image with no
//! boxes. Blank lines and lines starting with `#` are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::geometry::ColorClass;
use crate::kmeans::kmeans;
use crate::stereo::BoundingBox;
use crate::report::Table;

pub const DEFAULT_CANVAS: (usize, usize) = (800, 320);
/// Tile pieces smaller than this fraction of the original box are dropped.
pub const MIN_KEPT_FRACTION: f64 = 0.25;
/// Probability clamp for the cross-entropy terms.
pub const LOSS_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BoundingBox>,
}

impl AnnotatedImage {
    pub fn new(path: impl Into<String>, width: usize, height: usize, boxes: Vec<BoundingBox>) -> Result<Self> {
        let img = Self {
            path: path.into(),
            width,
            height,
            boxes,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain(format!("image {} has zero size", self.path)));
        }
        let tol = 1e-9;
        for b in &self.boxes {
            if b.w <= 0.0
                || b.h <= 0.0
                || b.x < -tol
                || b.y < -tol
                || b.x + b.w > self.width as f64 + tol
                || b.y + b.h > self.height as f64 + tol
            {
                return Err(Error::domain(format!(
                    "box ({}, {}, {}, {}) outside image {} ({}x{})",
                    b.x, b.y, b.w, b.h, self.path, self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImageSet {
    pub source_id: String,
    pub images: Vec<AnnotatedImage>,
    pub canvas: (usize, usize),
}

impl AnnotatedImageSet {
    pub fn new(source_id: impl Into<String>, images: Vec<AnnotatedImage>) -> Self {
        Self {
            source_id: source_id.into(),
            images,
            canvas: DEFAULT_CANVAS,
        }
    }

    pub fn boxes(&self) -> impl Iterator<Item = &BoundingBox> {
        self.images.iter().flat_map(|i| &i.boxes)
    }

    pub fn box_count(&self) -> usize {
        self.images.iter().map(|i| i.boxes.len()).sum()
    }

    pub fn total_box_area(&self) -> f64 {
        self.boxes().map(BoundingBox::area).sum()
    }

    pub fn size_distribution(&self) -> Result<SizeDistribution> {
        SizeDistribution::new(self.boxes().map(|b| b.h).collect())
    }

    /// Serialises to the annotation line format.
    pub fn to_annotation_string(&self) -> String {
        let mut out = String::new();
        for img in &self.images {
            if img.boxes.is_empty() {
                let _ = writeln!(out, "{} {} {}", img.path, img.width, img.height);
            }
            for b in &img.boxes {
                let _ = write!(
                    out,
                    "{} {} {} {} {} {} {} {}",
                    img.path, img.width, img.height, b.x, b.y, b.w, b.h, b.class
                );
                if b.confidence < 1.0 {
                    let _ = write!(out, " {}", b.confidence);
                }
                out.push('\n');
            }
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(tok: &str, what: &str, line: usize) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} `{tok}`")))
}

/// Parses annotation lines into images, in order of first appearance.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotatedImage>> {
    let mut images: Vec<AnnotatedImage> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if !matches!(toks.len(), 3 | 8 | 9) {
            return Err(Error::Parse(format!(
                "line {n}: expected 3, 8 or 9 fields, got {}",
                toks.len()
            )));
        }
        let path = toks[0].to_string();
        let width: usize = parse_field(toks[1], "image width", n)?;
        let height: usize = parse_field(toks[2], "image height", n)?;
        let slot = *index.entry(path.clone()).or_insert_with(|| {
            images.push(AnnotatedImage {
                path: path.clone(),
                width,
                height,
                boxes: Vec::new(),
            });
            images.len() - 1
        });
        let img = &mut images[slot];
        if (img.width, img.height) != (width, height) {
            return Err(Error::Parse(format!(
                "line {n}: image {path} declared as {width}x{height}, earlier as {}x{}",
                img.width, img.height
            )));
        }
        if toks.len() == 3 {
            continue;
        }
        let num = |k: usize, what: &str| parse_field::<f64>(toks[k], what, n);
        let class: ColorClass = toks[7]
            .parse()
            .map_err(|e| Error::Parse(format!("line {n}: {e}")))?;
        let confidence = if toks.len() == 9 { num(8, "confidence")? } else { 1.0 };
        let b = BoundingBox::new(num(3, "x")?, num(4, "y")?, num(5, "box width")?, num(6, "box height")?, class, confidence)
            .map_err(|e| Error::Parse(format!("line {n}: {e}")))?;
        img.boxes.push(b);
    }
    for img in &images {
        img.validate()?;
    }
    Ok(images)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatedImage>> {
    parse_annotations(&std::fs::read_to_string(path)?)
}

/// Per-source description: where its annotations live and the canvas to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceManifest {
    pub source_id: String,
    /// Annotation file, relative to the manifest's directory.
    pub annotations: String,
    #[serde(default = "default_canvas")]
    pub canvas: (usize, usize),
}

fn default_canvas() -> (usize, usize) {
    DEFAULT_CANVAS
}

pub fn load_manifest(path: &Path) -> Result<AnnotatedImageSet> {
    let m: SourceManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let images = read_annotations(&base.join(&m.annotations))?;
    Ok(AnnotatedImageSet {
        source_id: m.source_id,
        images,
        canvas: m.canvas,
    })
}

/// Landmark pixel heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SizeDistribution {
    samples: Vec<f64>,
}

impl SizeDistribution {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("size distribution is empty"));
        }
        if samples.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::domain("size samples must be positive and finite"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Middle value, or the mean of the two middle values for even counts.
    pub fn median(&self) -> f64 {
        median(&self.samples)
    }
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Uniform factor taking the source median height to the target median.
pub fn compute_scale_factor(source: &SizeDistribution, target: &SizeDistribution) -> f64 {
    target.median() / source.median()
}

/// Bookkeeping for [`scale_and_tile`]. Areas are in output pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TileStats {
    pub input_images: usize,
    pub output_images: usize,
    pub padded_images: usize,
    pub tiled_images: usize,
    pub input_boxes: usize,
    pub output_boxes: usize,
    /// Boxes cut by a tile edge into more than one kept piece.
    pub split_boxes: usize,
    /// Pieces discarded for covering less than the minimum fraction.
    pub dropped_pieces: usize,
    /// Boxes with no surviving piece.
    pub lost_boxes: usize,
    /// Total box area after scaling, before tiling.
    pub scaled_area: f64,
    pub output_area: f64,
    pub dropped_area: f64,
}

impl TileStats {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["metric", "value"]);
        for (name, v) in [
            ("input_images", self.input_images),
            ("output_images", self.output_images),
            ("padded_images", self.padded_images),
            ("tiled_images", self.tiled_images),
            ("input_boxes", self.input_boxes),
            ("output_boxes", self.output_boxes),
            ("split_boxes", self.split_boxes),
            ("dropped_pieces", self.dropped_pieces),
            ("lost_boxes", self.lost_boxes),
        ] {
            t.push(vec![name.into(), v.into()]);
        }
        for (name, v) in [
            ("scaled_area", self.scaled_area),
            ("output_area", self.output_area),
            ("dropped_area", self.dropped_area),
        ] {
            t.push(vec![name.into(), v.into()]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiledSet {
    pub set: AnnotatedImageSet,
    pub stats: TileStats,
}

fn scaled_dim(d: usize, factor: f64) -> usize {
    ((d as f64 * factor).round() as usize).max(1)
}

/// Scales every image and box by `factor`, then pads small images onto the
/// canvas (content top-left) or cuts large ones into a grid of canvas tiles.
///
/// A box crossing a tile edge is clipped to each tile; a piece covering less
/// than [`MIN_KEPT_FRACTION`] of the scaled box is dropped. Since tiles
/// partition the image, `output_area + dropped_area == scaled_area`.
pub fn scale_and_tile(set: &AnnotatedImageSet, factor: f64) -> Result<TiledSet> {
    ensure_positive("scale factor", factor)?;
    let (cw, ch) = set.canvas;
    if cw == 0 || ch == 0 {
        return Err(Error::domain("canvas dimensions must be positive"));
    }
    let mut stats = TileStats {
        input_images: set.images.len(),
        input_boxes: set.box_count(),
        ..TileStats::default()
    };
    let mut out = Vec::new();
    for img in &set.images {
        let sw = scaled_dim(img.width, factor);
        let sh = scaled_dim(img.height, factor);
        let boxes: Vec<BoundingBox> = img
            .boxes
            .iter()
            .map(|b| BoundingBox {
                x: b.x * factor,
                y: b.y * factor,
                w: b.w * factor,
                h: b.h * factor,
                ..*b
            })
            .collect();
        stats.scaled_area += boxes.iter().map(BoundingBox::area).sum::<f64>();

        if sw <= cw && sh <= ch {
            stats.padded_images += 1;
            stats.output_area += boxes.iter().map(BoundingBox::area).sum::<f64>();
            stats.output_boxes += boxes.len();
            out.push(AnnotatedImage {
                path: img.path.clone(),
                width: cw,
                height: ch,
                boxes,
            });
            continue;
        }

        stats.tiled_images += 1;
        let cols = sw.div_ceil(cw);
        let rows = sh.div_ceil(ch);
        let mut kept_pieces = vec![0usize; boxes.len()];
        for r in 0..rows {
            for c in 0..cols {
                let (tx, ty) = ((c * cw) as f64, (r * ch) as f64);
                let (tx1, ty1) = (((c + 1) * cw).min(sw) as f64, ((r + 1) * ch).min(sh) as f64);
                let mut tile_boxes = Vec::new();
                for (b, kept) in boxes.iter().zip(kept_pieces.iter_mut()) {
                    let x0 = b.x.max(tx);
                    let y0 = b.y.max(ty);
                    let x1 = (b.x + b.w).min(tx1);
                    let y1 = (b.y + b.h).min(ty1);
                    if x1 <= x0 || y1 <= y0 {
                        continue;
                    }
                    let area = (x1 - x0) * (y1 - y0);
                    if area < MIN_KEPT_FRACTION * b.area() {
                        stats.dropped_pieces += 1;
                        stats.dropped_area += area;
                        continue;
                    }
                    *kept += 1;
                    stats.output_area += area;
                    tile_boxes.push(BoundingBox {
                        x: x0 - tx,
                        y: y0 - ty,
                        w: x1 - x0,
                        h: y1 - y0,
                        ..*b
                    });
                }
                stats.output_boxes += tile_boxes.len();
                out.push(AnnotatedImage {
                    path: format!("{}#r{r}c{c}", img.path),
                    width: cw,
                    height: ch,
                    boxes: tile_boxes,
                });
            }
        }
        // Scaled boxes that spill past the rounded image edge lose that sliver.
        stats.dropped_area += boxes
            .iter()
            .map(|b| {
                let inside = ((b.x + b.w).min(sw as f64) - b.x.max(0.0)).max(0.0)
                    * ((b.y + b.h).min(sh as f64) - b.y.max(0.0)).max(0.0);
                b.area() - inside
            })
            .sum::<f64>();
        stats.split_boxes += kept_pieces.iter().filter(|&&k| k > 1).count();
        stats.lost_boxes += kept_pieces.iter().filter(|&&k| k == 0).count();
    }
    stats.output_images = out.len();
    Ok(TiledSet {
        set: AnnotatedImageSet {
            source_id: set.source_id.clone(),
            images: out,
            canvas: set.canvas,
        },
        stats,
    })
}

/// k-means anchors in `(w, h)` space, sorted by area ascending.
pub fn kmeans_anchors(boxes: &[[f64; 2]], k: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    let mut anchors = kmeans(boxes, k, seed, 300)?.centroids;
    anchors.sort_by(|a, b| (a[0] * a[1]).total_cmp(&(b[0] * b[1])));
    Ok(anchors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoloLossWeights {
    pub gamma_cls: f64,
    pub gamma_bg: f64,
    pub gamma_fg: f64,
    pub gamma_xy: f64,
    pub gamma_wh: f64,
}

impl Default for YoloLossWeights {
    fn default() -> Self {
        Self {
            gamma_cls: 1.0,
            gamma_bg: 25.41,
            gamma_fg: 0.09,
            gamma_xy: 1.92,
            gamma_wh: 1.33,
        }
    }
}

impl YoloLossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma_cls, self.gamma_bg, self.gamma_fg, self.gamma_xy, self.gamma_wh];
        if all.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::domain("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A prediction already assigned to a ground-truth object. Coordinates are
/// raw `(x, y, w, h)`, no log-space transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedRecord {
    pub pred: [f64; 4],
    pub target: [f64; 4],
    pub objectness: f64,
    pub class_probs: Vec<f64>,
    pub target_class: usize,
}

/// Unweighted per-term means and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct YoloLossBreakdown {
    pub cls: f64,
    pub bg: f64,
    pub fg: f64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub total: f64,
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON)
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} {p} outside [0, 1]")))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Weighted detector loss. Each term is averaged over its own record set
/// (matched for class, foreground and coordinates; background for the
/// no-object term); an empty set contributes zero. Probabilities are clamped
/// to `[ε, 1 - ε]` before taking logs.
pub fn yolo_loss(
    matched: &[MatchedRecord],
    background_objectness: &[f64],
    w: &YoloLossWeights,
) -> Result<YoloLossBreakdown> {
    w.validate()?;
    for r in matched {
        check_prob(r.objectness, "objectness")?;
        for &p in &r.class_probs {
            check_prob(p, "class probability")?;
        }
        if r.target_class >= r.class_probs.len() {
            return Err(Error::domain(format!(
                "target class {} but only {} class probabilities",
                r.target_class,
                r.class_probs.len()
            )));
        }
        if r.pred.iter().chain(&r.target).any(|v| !v.is_finite()) {
            return Err(Error::domain("box coordinates must be finite"));
        }
    }
    for &p in background_objectness {
        check_prob(p, "objectness")?;
    }
    let sq = |k: usize| mean(matched.iter().map(|r| (r.pred[k] - r.target[k]).powi(2)));
    let mut l = YoloLossBreakdown {
        cls: mean(matched.iter().map(|r| -clamp_prob(r.class_probs[r.target_class]).ln())),
        bg: mean(background_objectness.iter().map(|&p| -(1.0 - clamp_prob(p)).ln())),
        fg: mean(matched.iter().map(|r| -clamp_prob(r.objectness).ln())),
        x: sq(0),
        y: sq(1),
        w: sq(2),
        h: sq(3),
        total: 0.0,
    };
    l.total = w.gamma_cls * l.cls
        + w.gamma_bg * l.bg
        + w.gamma_fg * l.fg
        + w.gamma_xy * (l.x + l.y)
        + w.gamma_wh * (l.w + l.h);
    Ok(l)
}
