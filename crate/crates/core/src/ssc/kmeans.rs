use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Restart that produced this fit.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeded Lloyd iterations on the rows of `points`.
///
/// Restart `r` draws from `seed + r`; the lowest inertia wins and ties keep
/// the earlier restart. No cluster is ever left empty.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("cannot form {k} clusters from {n} points")));
    }
    if restarts == 0 {
        return Err(Error::Parameter("k-means needs at least one restart".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let fit = lloyd(points, init_plus_plus(points, k, &mut rng), r);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn init_plus_plus(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let dim = points.cols();
    let mut centroids = Matrix::zeros(k, dim);
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn lloyd(points: &Matrix, mut centroids: Matrix, restart: usize) -> KMeansFit {
    let n = points.rows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let nearest = nearest(&centroids, points.row(i)).0;
            if *label != nearest {
                *label = nearest;
                changed = true;
            }
        }
        changed |= fill_empty_clusters(points, &mut centroids, &mut labels);
        if !changed {
            break;
        }
        update_centroids(points, &mut centroids, &labels);
    }
    let inertia = (0..n)
        .map(|i| sq_dist(points.row(i), centroids.row(labels[i])))
        .sum();
    KMeansFit {
        labels,
        centroids,
        inertia,
        restart,
    }
}

fn nearest(centroids: &Matrix, p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(p, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Moves the point farthest from its centroid into each empty cluster.
fn fill_empty_clusters(points: &Matrix, centroids: &mut Matrix, labels: &mut [usize]) -> bool {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let mut changed = false;
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] < 2 {
                continue;
            }
            let d = sq_dist(points.row(i), centroids.row(l));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n leaves a cluster with two members");
        sizes[labels[i]] -= 1;
        labels[i] = empty;
        sizes[empty] = 1;
        centroids.row_mut(empty).copy_from_slice(points.row(i));
        changed = true;
    }
    changed
}

fn update_centroids(points: &Matrix, centroids: &mut Matrix, labels: &[usize]) {
    let k = centroids.rows();
    let dim = points.cols();
    let mut sums = Matrix::zeros(k, dim);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
            *dst = s * inv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Matrix {
        Matrix::from_rows(&[
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [5.0, 5.0],
            [5.1, 5.0],
            [9.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn separates_obvious_blobs() {
        let fit = kmeans(&blobs(), 3, 10, 42).unwrap();
        let l = &fit.labels;
        assert_eq!(l[0], l[1]);
        assert_eq!(l[0], l[2]);
        assert_eq!(l[3], l[4]);
        assert_ne!(l[0], l[3]);
        assert_ne!(l[5], l[0]);
        assert_ne!(l[5], l[3]);
    }

    #[test]
    fn every_cluster_non_empty_with_duplicate_points() {
        let pts = Matrix::from_rows(&[[1.0], [1.0], [1.0], [1.0], [2.0]]).unwrap();
        let fit = kmeans(&pts, 4, 3, 0).unwrap();
        let mut sizes = [0; 4];
        fit.labels.iter().for_each(|&l| sizes[l] += 1);
        assert!(sizes.iter().all(|&s| s > 0));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = kmeans(&blobs(), 2, 10, 7).unwrap();
        let b = kmeans(&blobs(), 2, 10, 7).unwrap();
        assert_eq!(a, b);
        assert!(kmeans(&blobs(), 7, 1, 0).is_err());
    }
}
