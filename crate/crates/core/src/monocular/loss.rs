use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{KeypointSet, NUM_KEYPOINTS};

/// Weights of the two geometric penalty terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma_vert: f64,
    pub gamma_horz: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma_vert: 0.038,
            gamma_horz: 0.055,
        }
    }
}

impl LossWeights {
    pub fn new(gamma_vert: f64, gamma_horz: f64) -> Result<Self> {
        if !(gamma_vert >= 0.0) || !(gamma_horz >= 0.0) {
            return Err(Error::domain("loss weights must be non-negative"));
        }
        Ok(Self {
            gamma_vert,
            gamma_horz,
        })
    }
}

type Edge = (usize, usize);

/// Consecutive horizontal vectors across the cone: (1→2, 3→4), (3→4, 5→6).
pub const HORIZONTAL_PAIRS: [(Edge, Edge); 2] = [((1, 2), (3, 4)), ((3, 4), (5, 6))];

/// Consecutive vectors down each cone edge.
pub const VERTICAL_PAIRS: [(Edge, Edge); 4] = [
    ((0, 1), (1, 3)),
    ((1, 3), (3, 5)),
    ((0, 2), (2, 4)),
    ((2, 4), (4, 6)),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean over keypoints of squared euclidean coordinate error.
    pub mse: f64,
    /// `2 - Σ` of horizontal dot products, unweighted.
    pub horizontal: f64,
    /// `4 - Σ` of vertical dot products, unweighted.
    pub vertical: f64,
    pub total: f64,
}

struct UnitEdge {
    dir: Vector2<f64>,
    len: f64,
}

fn unit_edge(kps: &KeypointSet, (from, to): Edge) -> Result<UnitEdge> {
    let d = kps.points[to] - kps.points[from];
    let len = d.norm();
    if !(len > 1e-12) {
        return Err(Error::degenerate(format!(
            "keypoints {from} and {to} coincide; unit vector undefined"
        )));
    }
    Ok(UnitEdge { dir: d / len, len })
}

fn dot_sum(kps: &KeypointSet, pairs: &[(Edge, Edge)]) -> Result<f64> {
    let mut sum = 0.0;
    for &(a, b) in pairs {
        sum += unit_edge(kps, a)?.dir.dot(&unit_edge(kps, b)?.dir);
    }
    Ok(sum)
}

fn mse(pred: &KeypointSet, target: &KeypointSet) -> f64 {
    pred.points
        .iter()
        .zip(&target.points)
        .map(|(p, t)| (p - t).norm_squared())
        .sum::<f64>()
        / NUM_KEYPOINTS as f64
}

/// Coordinate MSE plus weighted collinearity penalties on `pred`.
pub fn collinearity_loss(
    pred: &KeypointSet,
    target: &KeypointSet,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let mse = mse(pred, target);
    let horizontal = HORIZONTAL_PAIRS.len() as f64 - dot_sum(pred, &HORIZONTAL_PAIRS)?;
    let vertical = VERTICAL_PAIRS.len() as f64 - dot_sum(pred, &VERTICAL_PAIRS)?;
    Ok(LossBreakdown {
        mse,
        horizontal,
        vertical,
        total: mse + w.gamma_horz * horizontal + w.gamma_vert * vertical,
    })
}

/// Analytic gradient of [`collinearity_loss`]'s total with respect to the
/// prediction, flattened as `[du0, dv0, du1, dv1, ...]`.
pub fn collinearity_loss_gradient(
    pred: &KeypointSet,
    target: &KeypointSet,
    w: &LossWeights,
) -> Result<[f64; 2 * NUM_KEYPOINTS]> {
    let mut grad = [Vector2::zeros(); NUM_KEYPOINTS];
    for (g, (p, t)) in grad.iter_mut().zip(pred.points.iter().zip(&target.points)) {
        *g = 2.0 * (p - t) / NUM_KEYPOINTS as f64;
    }

    // d(a_hat . b_hat)/da = (I - a_hat a_hat^T) b_hat / |a|; the edge vector
    // a = p_to - p_from so the gradient lands with + on `to` and - on `from`.
    let mut accumulate = |pairs: &[(Edge, Edge)], weight: f64| -> Result<()> {
        for &(ea, eb) in pairs {
            let a = unit_edge(pred, ea)?;
            let b = unit_edge(pred, eb)?;
            let da = (Matrix2::identity() - a.dir * a.dir.transpose()) * b.dir / a.len;
            let db = (Matrix2::identity() - b.dir * b.dir.transpose()) * a.dir / b.len;
            // The loss carries minus the dot product.
            grad[ea.1] -= weight * da;
            grad[ea.0] += weight * da;
            grad[eb.1] -= weight * db;
            grad[eb.0] += weight * db;
        }
        Ok(())
    };
    accumulate(&HORIZONTAL_PAIRS, w.gamma_horz)?;
    accumulate(&VERTICAL_PAIRS, w.gamma_vert)?;

    let mut flat = [0.0; 2 * NUM_KEYPOINTS];
    for (i, g) in grad.iter().enumerate() {
        flat[2 * i] = g.x;
        flat[2 * i + 1] = g.y;
    }
    Ok(flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraConfig, LandmarkModel, RigidPose};
    use nalgebra::Vector3;

    fn canonical() -> KeypointSet {
        let cam = CameraConfig::from_focal_px(1000.0, (800, 320)).unwrap();
        let pose = RigidPose::from_translation(Vector3::new(0.2, -0.1, 6.0));
        KeypointSet::project(&LandmarkModel::default(), &pose, &cam).unwrap()
    }

    #[test]
    fn canonical_projection_has_zero_loss() {
        let kps = canonical();
        let l = collinearity_loss(&kps, &kps, &LossWeights::default()).unwrap();
        assert!(l.horizontal.abs() < 1e-12);
        assert!(l.vertical.abs() < 1e-12);
        assert!(l.total.abs() < 1e-12);
    }

    #[test]
    fn bending_an_edge_raises_vertical_term() {
        let target = canonical();
        let mut bent = target;
        bent.points[3].x += 4.0;
        let w = LossWeights::default();
        let straight = collinearity_loss(&target, &target, &w).unwrap();
        let l = collinearity_loss(&bent, &target, &w).unwrap();
        assert!(l.vertical > straight.vertical + 1e-6);
        assert!(l.vertical > 0.0);
    }

    #[test]
    fn zero_weights_leave_plain_mse() {
        let target = canonical();
        let mut pred = target;
        pred.points[1] += nalgebra::Vector2::new(1.5, -0.5);
        pred.points[6] += nalgebra::Vector2::new(-2.0, 3.0);
        let l = collinearity_loss(&pred, &target, &LossWeights::new(0.0, 0.0).unwrap()).unwrap();
        let expected = (1.5f64.powi(2) + 0.25 + 4.0 + 9.0) / 7.0;
        assert_eq!(l.total, l.mse);
        assert!((l.mse - expected).abs() < 1e-12);
    }

    #[test]
    fn mse_gradient_alone() {
        let target = canonical();
        let mut pred = target;
        pred.points[2] += nalgebra::Vector2::new(0.7, -1.1);
        let g = collinearity_loss_gradient(&pred, &target, &LossWeights::new(0.0, 0.0).unwrap())
            .unwrap();
        let p = pred.to_flat();
        let t = target.to_flat();
        for k in 0..14 {
            assert!((g[k] - 2.0 * (p[k] - t[k]) / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_vanishes_at_minimum() {
        let kps = canonical();
        let g = collinearity_loss_gradient(&kps, &kps, &LossWeights::default()).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-9), "{g:?}");
    }

    #[test]
    fn coincident_keypoints_rejected() {
        let target = canonical();
        let mut pred = target;
        pred.points[3] = pred.points[1];
        assert!(matches!(
            collinearity_loss(&pred, &target, &LossWeights::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(collinearity_loss_gradient(&pred, &target, &LossWeights::default()).is_err());
    }

    #[test]
    fn reversed_chain_is_penalised() {
        // Swapping left and right flips the horizontal vectors' orientation
        // consistently, so dot products stay +1; flipping only one row does not.
        let target = canonical();
        let mut pred = target;
        pred.points.swap(3, 4);
        let l = collinearity_loss(&pred, &target, &LossWeights::default()).unwrap();
        assert!((l.horizontal - 4.0).abs() < 1e-9);
    }
}
