use nalgebra::Point2;

use crate::error::{Error, Result};

use super::{KeypointSet, NUM_KEYPOINTS};

/// Non-negative probability grid for one keypoint, row-major, `height` rows
/// of `width` cells. Cell `(col, row)` sits at pixel coordinate `(col, row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointHeatmap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl KeypointHeatmap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("heatmap dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::domain(format!(
                "heatmap data has {} cells, expected {}",
                data.len(),
                width * height
            )));
        }
        if data.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::domain("heatmap entries must be finite and non-negative"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height]).expect("valid dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64) -> Result<()> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::domain("heatmap entries must be finite and non-negative"));
        }
        self.data[row * self.width + col] = value;
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Copy scaled to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::degenerate("heatmap has zero total mass"));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|x| x / mass).collect(),
        })
    }
}

/// Expected pixel coordinate under the normalised heatmap.
pub fn dsnt_expectation(hm: &KeypointHeatmap) -> Result<Point2<f64>> {
    let mass = hm.mass();
    if !(mass > 0.0) {
        return Err(Error::degenerate("heatmap has zero total mass"));
    }
    let (mut su, mut sv) = (0.0, 0.0);
    for row in 0..hm.height {
        for col in 0..hm.width {
            let w = hm.get(col, row);
            su += w * col as f64;
            sv += w * row as f64;
        }
    }
    Ok(Point2::new(su / mass, sv / mass))
}

/// Partial derivatives of the expectation with respect to each raw grid entry.
///
/// With `S` the total mass, `dE[u]/dg_ij = (col_j - E[u]) / S` and likewise for
/// `v`. Returned as two row-major grids `(d_u, d_v)`.
pub fn dsnt_jacobian(hm: &KeypointHeatmap) -> Result<(Vec<f64>, Vec<f64>)> {
    let mean = dsnt_expectation(hm)?;
    let mass = hm.mass();
    let mut du = Vec::with_capacity(hm.data.len());
    let mut dv = Vec::with_capacity(hm.data.len());
    for row in 0..hm.height {
        for col in 0..hm.width {
            du.push((col as f64 - mean.x) / mass);
            dv.push((row as f64 - mean.y) / mass);
        }
    }
    Ok((du, dv))
}

/// Converts seven heatmaps (keypoint index order) into a keypoint set.
pub fn keypoints_from_heatmaps(maps: &[KeypointHeatmap]) -> Result<KeypointSet> {
    if maps.len() != NUM_KEYPOINTS {
        return Err(Error::domain(format!(
            "expected {NUM_KEYPOINTS} heatmaps, got {}",
            maps.len()
        )));
    }
    let mut points = [Point2::origin(); NUM_KEYPOINTS];
    for (i, (dst, hm)) in points.iter_mut().zip(maps).enumerate() {
        *dst = dsnt_expectation(hm).map_err(|e| match e {
            Error::Degenerate(msg) => Error::Degenerate(format!("keypoint {i}: {msg}")),
            other => other,
        })?;
    }
    KeypointSet::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn point_mass() {
        let mut hm = KeypointHeatmap::zeros(8, 6);
        hm.set(3, 5, 2.5).unwrap();
        assert_eq!(dsnt_expectation(&hm).unwrap(), Point2::new(3.0, 5.0));
    }

    #[test]
    fn uniform_is_grid_centroid() {
        let hm = KeypointHeatmap::new(7, 4, vec![1.0; 28]).unwrap();
        let e = dsnt_expectation(&hm).unwrap();
        assert_relative_eq!(e.x, 3.0, epsilon = 1e-12);
        assert_relative_eq!(e.y, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn two_point_midpoint() {
        let mut hm = KeypointHeatmap::zeros(5, 1);
        hm.set(0, 0, 1.0).unwrap();
        hm.set(4, 0, 1.0).unwrap();
        assert_eq!(dsnt_expectation(&hm).unwrap(), Point2::new(2.0, 0.0));
    }

    #[test]
    fn zero_mass_is_degenerate() {
        let hm = KeypointHeatmap::zeros(3, 3);
        assert!(matches!(dsnt_expectation(&hm), Err(Error::Degenerate(_))));
        assert!(hm.normalized().is_err());
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(KeypointHeatmap::new(2, 1, vec![1.0, -0.1]).is_err());
        assert!(KeypointHeatmap::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn normalized_sums_to_one() {
        let hm = KeypointHeatmap::new(3, 2, vec![0.5, 3.0, 1.0, 0.0, 7.25, 2.0]).unwrap();
        let n = hm.normalized().unwrap();
        assert!((n.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let hm = KeypointHeatmap::new(4, 3, (0..12).map(|i| 0.3 + (i * 7 % 5) as f64).collect())
            .unwrap();
        let (du, dv) = dsnt_jacobian(&hm).unwrap();
        let h = 1e-6;
        for k in 0..12 {
            let mut plus = hm.clone();
            let mut minus = hm.clone();
            plus.data[k] += h;
            minus.data[k] -= h;
            let ep = dsnt_expectation(&plus).unwrap();
            let em = dsnt_expectation(&minus).unwrap();
            assert_relative_eq!((ep.x - em.x) / (2.0 * h), du[k], epsilon = 1e-8);
            assert_relative_eq!((ep.y - em.y) / (2.0 * h), dv[k], epsilon = 1e-8);
        }
    }

    #[test]
    fn heatmap_set_to_keypoints() {
        let maps: Vec<_> = (0..7)
            .map(|i| {
                let mut hm = KeypointHeatmap::zeros(10, 10);
                hm.set(i, 9 - i, 1.0).unwrap();
                hm
            })
            .collect();
        let kps = keypoints_from_heatmaps(&maps).unwrap();
        assert_eq!(kps.points[4], Point2::new(4.0, 5.0));
        assert!(keypoints_from_heatmaps(&maps[..3]).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariant(
            cells in proptest::collection::vec(0.0f64..10.0, 20),
            scale in 1e-3f64..1e3,
        ) {
            prop_assume!(cells.iter().sum::<f64>() > 1e-6);
            let hm = KeypointHeatmap::new(5, 4, cells.clone()).unwrap();
            let scaled = KeypointHeatmap::new(5, 4, cells.iter().map(|c| c * scale).collect()).unwrap();
            let a = dsnt_expectation(&hm).unwrap();
            let b = dsnt_expectation(&scaled).unwrap();
            prop_assert!((a - b).norm() < 1e-9);
        }
    }
}
