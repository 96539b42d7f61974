//! Seeded k-means++ with Lloyd refinement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index of each input point, in input order.
    pub assignments: Vec<usize>,
    /// Sum of squared distances to assigned centroids.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration; non-increasing.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = sq_dist(point, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first centroid uniform, the rest drawn with probability
/// proportional to squared distance from the nearest chosen centroid.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut dists: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with chosen centroids
            rng.random_range(0..points.len())
        } else {
            let mut draw = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in dists.iter().enumerate() {
                draw -= d;
                if draw <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centroids.last().unwrap());
            if d < dists[i] {
                dists[i] = d;
            }
        }
    }
    centroids
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::validation(format!(
            "need at least k={k} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::validation("points must share one dimensionality"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut inertia_history = Vec::new();
    let mut inertia = f64::INFINITY;

    for _ in 0..max_iter.max(1) {
        // assignment step
        let mut new_inertia = 0.0;
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
            new_inertia += d;
        }
        inertia_history.push(new_inertia);
        let converged = !changed && new_inertia >= inertia - 1e-12 && inertia.is_finite();
        inertia = new_inertia;
        if converged {
            break;
        }

        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed an empty cluster to the point farthest from its
                // assigned centroid
                let mut far = 0usize;
                let mut far_d = -1.0;
                for (i, p) in points.iter().enumerate() {
                    let d = sq_dist(p, &centroids[assignments[i]]);
                    if d > far_d {
                        far_d = d;
                        far = i;
                    }
                }
                centroids[j] = points[far].clone();
            } else {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
    }

    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        inertia,
        inertia_history,
    })
}

/// Seeded uniform sampling without replacement of `per_cluster` members from
/// every cluster. Returns indices into the original point list, cluster by
/// cluster.
pub fn sample_cluster_subset(
    model: &ClusterModel,
    per_cluster: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(model.k * per_cluster);
    for cluster in 0..model.k {
        let mut members: Vec<usize> = model
            .assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == cluster).then_some(i))
            .collect();
        if members.len() < per_cluster {
            return Err(Error::validation(format!(
                "cluster {cluster} has only {} members, need {per_cluster}",
                members.len()
            )));
        }
        // partial Fisher-Yates: the first per_cluster entries are the sample
        for i in 0..per_cluster {
            let j = rng.random_range(i..members.len());
            members.swap(i, j);
        }
        out.extend_from_slice(&members[..per_cluster]);
    }
    Ok(out)
}

/// Mean silhouette score of a clustering (cohesion vs separation), for
/// quantifying claims about cluster tightness.
pub fn silhouette_score(points: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n < 2 || k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut intra = 0.0;
        let mut intra_n = 0usize;
        let mut inter = vec![0.0; k];
        let mut inter_n = vec![0usize; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = sq_dist(&points[i], &points[j]).sqrt();
            if assignments[j] == assignments[i] {
                intra += d;
                intra_n += 1;
            } else {
                inter[assignments[j]] += d;
                inter_n[assignments[j]] += 1;
            }
        }
        let a = if intra_n > 0 { intra / intra_n as f64 } else { 0.0 };
        let b = (0..k)
            .filter(|&c| c != assignments[i] && inter_n[c] > 0)
            .map(|c| inter[c] / inter_n[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b).max(1e-12);
        }
    }
    total / n as f64
}
