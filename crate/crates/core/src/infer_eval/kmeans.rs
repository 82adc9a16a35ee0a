//! Lloyd's k-means with farthest-point seeding, and elbow selection of k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lower index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Clusters `points` (all of equal width) into `k` groups.
///
/// The first centre is a point drawn with `seed`; each further centre is the
/// point farthest from the centres chosen so far. Iterates until the
/// assignment stops changing or [`KMEANS_MAX_ITERATIONS`] is reached. An
/// empty cluster is moved to the point farthest from its current centre.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= n, got k={k} n={n}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("k-means points have differing widths"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mut far = 0;
        for i in 1..n {
            if min_d[i] > min_d[far] {
                far = i;
            }
        }
        centroids.push(points[far].clone());
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(p, &points[far]));
        }
    }

    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dist = vec![0f64; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dist[i] = d;
            inertia += d;
        }
        history.push(inertia);
        if !changed || iterations >= KMEANS_MAX_ITERATIONS {
            return Ok(KMeans {
                assignments,
                centroids,
                inertia,
                history,
                iterations,
            });
        }

        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let mut far = 0;
                for i in 1..n {
                    if dist[i] > dist[far] {
                        far = i;
                    }
                }
                centroids[c] = points[far].clone();
                dist[far] = 0.0;
            }
        }
    }
}

/// Elbow choice of k over `[k_min, k_max]`: the k whose inertia lies
/// farthest from the straight line joining the end points of the curve.
pub fn elbow_k(points: &[Vec<f64>], k_min: usize, k_max: usize, seed: u64) -> Result<usize> {
    let k_max = k_max.min(points.len());
    if k_min == 0 || k_min > k_max {
        return Err(Error::invalid(format!("empty elbow range [{k_min}, {k_max}]")));
    }
    if k_max - k_min < 2 {
        return Ok(k_min);
    }
    let curve: Vec<(f64, f64)> = (k_min..=k_max)
        .map(|k| kmeans(points, k, seed).map(|m| (k as f64, m.inertia)))
        .collect::<Result<_>>()?;
    let (x0, y0) = curve[0];
    let (x1, y1) = *curve.last().expect("non-empty");
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = (dx * dx + dy * dy).sqrt();
    if norm == 0.0 {
        return Ok(k_min);
    }
    let mut best = (k_min, -1.0);
    for &(x, y) in &curve {
        let d = (dy * (x - x0) - dx * (y - y0)).abs() / norm;
        if d > best.1 + 1e-12 {
            best = (x as usize, d);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn k_one_is_mean() {
        let pts = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        let m = kmeans(&pts, 1, 5).unwrap();
        assert_eq!(m.centroids[0], vec![2.0, 1.0]);
        assert_eq!(m.assignments, vec![0, 0, 0]);
    }

    #[test]
    fn separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut pts = Vec::new();
        for i in 0..40 {
            let c = if i % 2 == 0 { 10.0 } else { -10.0 };
            pts.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
        }
        for seed in 0..5 {
            let m = kmeans(&pts, 2, seed).unwrap();
            for i in 0..40 {
                assert_eq!(m.assignments[i] == m.assignments[0], i % 2 == 0);
            }
        }
    }

    #[test]
    fn k_equals_n() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]];
        let m = kmeans(&pts, 4, 0).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut ids = m.assignments.clone();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmeans(&[vec![1.0]], 2, 0).is_err());
        assert!(kmeans(&[vec![1.0]], 0, 0).is_err());
    }

    #[test]
    fn inertia_non_increasing() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![((i * 37) % 11) as f64, ((i * 13) % 7) as f64]).collect();
        let m = kmeans(&pts, 4, 1).unwrap();
        for w in m.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn elbow_finds_three_blobs() {
        let mut pts = Vec::new();
        for c in [0.0, 10.0, 20.0] {
            for j in 0..5 {
                pts.push(vec![c + j as f64 * 0.01, c]);
            }
        }
        assert_eq!(elbow_k(&pts, 1, 6, 0).unwrap(), 3);
    }
}
