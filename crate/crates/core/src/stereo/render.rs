//! Ray-cast renderer for flat ground with upright cones.
//!
//! Produces a disparity map and a colour image from the left camera so the
//! stereo pipeline can be checked against known geometry. Each pixel casts a
//! ray through `(col - cx, row - cy, f)`, matching the reprojection used by
//! [`super::box_to_cloud`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ensure_positive, Error, Result};
use crate::geometry::ColorClass;

use super::{BoundingBox, DisparityMap, RgbImage};

/// One cone standing on the ground. `(x, z)` is the base centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthCone {
    pub x: f64,
    pub z: f64,
    pub height: f64,
    pub base_radius: f64,
    pub color: ColorClass,
}

impl SynthCone {
    pub fn new(x: f64, z: f64, color: ColorClass) -> Self {
        Self {
            x,
            z,
            height: crate::geometry::DEFAULT_LANDMARK_HEIGHT,
            base_radius: crate::geometry::DEFAULT_LANDMARK_BASE_WIDTH / 2.0,
            color,
        }
    }

    /// Body colour; the mid-height stripe uses [`Self::stripe_rgb`].
    pub fn body_rgb(&self) -> [f32; 3] {
        match self.color {
            ColorClass::Blue => [0.05, 0.25, 0.85],
            ColorClass::Yellow => [0.95, 0.8, 0.05],
            ColorClass::Orange => [0.95, 0.4, 0.05],
        }
    }

    pub fn stripe_rgb(&self) -> [f32; 3] {
        match self.color {
            ColorClass::Yellow => [0.08, 0.08, 0.08],
            _ => [0.95, 0.95, 0.95],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub baseline: f64,
    /// Camera height above the ground plane in metres.
    pub camera_height: f64,
    pub ground_rgb: [f32; 3],
    pub cones: Vec<SynthCone>,
    /// Disparity step after quantisation; `0` keeps full precision.
    pub disparity_step: f64,
    /// Standard deviation of additive disparity noise in pixels.
    pub disparity_noise: f64,
    pub seed: u64,
}

impl SyntheticScene {
    /// 800x320 view, camera 1 m above the ground, 1/16 px disparity steps, no noise.
    pub fn new(focal_px: f64, cones: Vec<SynthCone>) -> Self {
        Self {
            width: 800,
            height: 320,
            focal_px,
            baseline: super::DEFAULT_BASELINE_M,
            camera_height: 1.0,
            ground_rgb: [0.33, 0.33, 0.35],
            cones,
            disparity_step: 1.0 / 16.0,
            disparity_noise: 0.0,
            seed: crate::DEFAULT_SEED,
        }
    }

    fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Nearest hit along the ray `t * dir`: returns `(t, rgb)`.
    fn trace(&self, dir: [f64; 3]) -> Option<(f64, [f32; 3])> {
        let mut best: Option<(f64, [f32; 3])> = None;
        let mut consider = |t: f64, rgb: [f32; 3]| {
            if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, rgb));
            }
        };
        let [dx, dy, dz] = dir;
        if dy > 0.0 {
            consider(self.camera_height / dy, self.ground_rgb);
        }
        for cone in &self.cones {
            // Surface: (x - cx)^2 + (z - cz)^2 = k^2 (y - apex_y)^2, y in [apex_y, ground].
            let k = cone.base_radius / cone.height;
            let apex_y = self.camera_height - cone.height;
            let (k2, cx, cz) = (k * k, cone.x, cone.z);
            let a = dx * dx + dz * dz - k2 * dy * dy;
            let b = -2.0 * (dx * cx + dz * cz) + 2.0 * k2 * apex_y * dy;
            let c = cx * cx + cz * cz - k2 * apex_y * apex_y;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 || a.abs() < 1e-15 {
                continue;
            }
            let sq = disc.sqrt();
            let mut roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
            roots.sort_by(f64::total_cmp);
            for t in roots {
                let y = t * dy;
                if t > 0.0 && y >= apex_y && y <= self.camera_height {
                    let frac = (self.camera_height - y) / cone.height;
                    let rgb = if (0.4..0.6).contains(&frac) {
                        cone.stripe_rgb()
                    } else {
                        cone.body_rgb()
                    };
                    consider(t, rgb);
                    break;
                }
            }
        }
        best
    }

    pub fn render(&self) -> Result<(DisparityMap, RgbImage)> {
        ensure_positive("focal_px", self.focal_px)?;
        ensure_positive("baseline", self.baseline)?;
        ensure_positive("camera height", self.camera_height)?;
        if !(self.disparity_noise >= 0.0) || !(self.disparity_step >= 0.0) {
            return Err(Error::domain("disparity step and noise must be non-negative"));
        }
        let noise = Normal::new(0.0, self.disparity_noise).map_err(|e| Error::domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (cx, cy) = self.principal_point();
        let f = self.focal_px;
        let sky = [0.55f32, 0.7, 0.9];
        let mut disp = Vec::with_capacity(self.width * self.height);
        let mut rgb = Vec::with_capacity(self.width * self.height);
        for row in 0..self.height {
            for col in 0..self.width {
                let dir = [(col as f64 - cx) / f, (row as f64 - cy) / f, 1.0];
                match self.trace(dir) {
                    Some((t, color)) => {
                        // Ray z-component is 1, so t is the depth.
                        let mut d = f * self.baseline / t;
                        if self.disparity_noise > 0.0 {
                            d += noise.sample(&mut rng);
                        }
                        if self.disparity_step > 0.0 {
                            d = (d / self.disparity_step).round() * self.disparity_step;
                        }
                        disp.push(d.max(0.0) as f32);
                        rgb.push(color);
                    }
                    None => {
                        disp.push(0.0);
                        rgb.push(sky);
                    }
                }
            }
        }
        Ok((
            DisparityMap::new(self.width, self.height, disp, self.baseline, f)?,
            RgbImage::new(self.width, self.height, rgb)?,
        ))
    }

    /// Tight box around the projection of cone `index`'s bounding cylinder,
    /// padded by `margin` pixels on each side.
    pub fn bounding_box(&self, index: usize, margin: f64) -> Result<BoundingBox> {
        let cone = self
            .cones
            .get(index)
            .ok_or_else(|| Error::domain(format!("no cone at index {index}")))?;
        let (cx, cy) = self.principal_point();
        let f = self.focal_px;
        let (mut u0, mut v0, mut u1, mut v1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for dxr in [-1.0, 1.0] {
            for dzr in [-1.0, 1.0] {
                for y in [self.camera_height - cone.height, self.camera_height] {
                    let x = cone.x + dxr * cone.base_radius;
                    let z = cone.z + dzr * cone.base_radius;
                    if z <= 0.0 {
                        return Err(Error::Projection { depth: z });
                    }
                    let u = cx + f * x / z;
                    let v = cy + f * y / z;
                    u0 = u0.min(u);
                    u1 = u1.max(u);
                    v0 = v0.min(v);
                    v1 = v1.max(v);
                }
            }
        }
        BoundingBox::new(
            u0 - margin,
            v0 - margin,
            u1 - u0 + 2.0 * margin,
            v1 - v0 + 2.0 * margin,
            cone.color,
            1.0,
        )
    }

    /// Position of a cone's volumetric centroid in camera coordinates.
    pub fn cone_centroid(&self, index: usize) -> Option<[f64; 3]> {
        let c = self.cones.get(index)?;
        // A solid cone's centroid sits a quarter of the height above the base.
        Some([c.x, self.camera_height - c.height / 4.0, c.z])
    }
}
