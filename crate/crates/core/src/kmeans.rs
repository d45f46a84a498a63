//! Seeded Lloyd's k-means over fixed-dimension feature vectors.
//!
//! Used both for stereo point-cloud segmentation (6-D XYZRGB) and for anchor
//! box priors (2-D width/height). Initialisation is k-means++ driven by a
//! ChaCha8 stream, so results are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<const D: usize> {
    pub centroids: Vec<[f64; D]>,
    /// Cluster index for each input point.
    pub labels: Vec<usize>,
    /// Sum of squared distances after initialisation and after each update.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl<const D: usize> KMeans<D> {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("non-empty history")
    }
}

fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest<const D: usize>(p: &[f64; D], centroids: &[[f64; D]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init<const D: usize>(points: &[[f64; D]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; D]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).expect("positive mass");
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // Every point coincides with a chosen centroid.
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters `points` into `k` groups.
///
/// Stops when assignments no longer change or after `max_iterations` updates.
/// A cluster that loses all its points keeps its previous centroid.
pub fn kmeans<const D: usize>(
    points: &[[f64; D]],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<KMeans<D>> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::domain(format!(
            "need at least k = {k} points, got {}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);

    let assign = |centroids: &[[f64; D]]| -> (Vec<usize>, f64) {
        let mut objective = 0.0;
        let labels = points
            .iter()
            .map(|p| {
                let (i, d) = nearest(p, centroids);
                objective += d;
                i
            })
            .collect();
        (labels, objective)
    };

    let (mut labels, objective) = assign(&centroids);
    let mut history = vec![objective];
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut sums = vec![[0.0; D]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                *c = s.map(|x| x / n as f64);
            }
        }
        let (next, objective) = assign(&centroids);
        history.push(objective);
        let changed = next != labels;
        labels = next;
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        labels,
        objective_history: history,
        iterations,
    })
}
