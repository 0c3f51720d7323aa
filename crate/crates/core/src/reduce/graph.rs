use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::par;
use crate::store::EmbeddingSet;

/// Exact k-nearest-neighbor graph with fuzzy membership weights.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    /// Per-sample neighbor indices, nearest first (self excluded).
    pub indices: Vec<Vec<usize>>,
    /// Euclidean distances matching `indices`, ascending.
    pub distances: Vec<Vec<f64>>,
    /// Distance to the nearest neighbor.
    pub rhos: Vec<f64>,
    /// Smoothing scale of each sample's membership kernel.
    pub sigmas: Vec<f64>,
    /// Undirected edges `(i, j, w)` with `i < j`, sorted, `w` in `(0, 1]`.
    pub edges: Vec<(usize, usize, f64)>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Brute-force neighbor lists: for each sample, the `k` nearest others by
/// Euclidean distance (ties broken by index).
pub fn exact_knn(e: &EmbeddingSet, k: usize) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let n = e.n();
    let lists = par::map_range(n, |i| {
        let xi = e.row(i);
        let mut cand: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (euclidean(xi, e.row(j)), j)).collect();
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k, by_dist);
            cand.truncate(k);
        }
        cand.sort_unstable_by(by_dist);
        cand
    });
    lists
        .into_iter()
        .map(|l| l.into_iter().map(|(d, j)| (j, d)).unzip())
        .unzip()
}

/// Finds `sigma` with `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)`.
fn smooth_scale(dists: &[f64], rho: f64, target: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut mid = 1.0;
    for _ in 0..200 {
        let psum: f64 = dists.iter().map(|&d| (-(d - rho).max(0.0) / mid).exp()).sum();
        if (psum - target).abs() <= 1e-5 * target {
            break;
        }
        if psum > target {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = if hi.is_finite() { 0.5 * (lo + hi) } else { mid * 2.0 };
        }
        if hi.is_finite() && hi - lo <= 1e-5 * mid {
            break;
        }
    }
    mid
}

pub fn build_neighbor_graph(e: &EmbeddingSet, n_neighbors: usize) -> Result<NeighborGraph> {
    let n = e.n();
    if n_neighbors < 1 || n_neighbors >= n {
        return Err(Error::Config(format!(
            "n_neighbors={n_neighbors} must lie in [1, n={n})"
        )));
    }
    let (indices, distances) = exact_knn(e, n_neighbors);
    let target = (n_neighbors as f64).log2().max(1e-3);
    let global_mean = distances.iter().flatten().sum::<f64>() / (n * n_neighbors) as f64;

    let mut rhos = Vec::with_capacity(n);
    let mut sigmas = Vec::with_capacity(n);
    for dists in &distances {
        let rho = dists[0];
        let mut sigma = smooth_scale(dists, rho, target);
        let local_mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let floor = 1e-3 * if rho > 0.0 { local_mean } else { global_mean };
        if sigma < floor {
            sigma = floor;
        }
        if !(sigma > 0.0) {
            sigma = 1.0;
        }
        rhos.push(rho);
        sigmas.push(sigma);
    }

    // fuzzy union: w = a + b - a*b
    let mut union: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 0..n {
        for (&j, &d) in indices[i].iter().zip(&distances[i]) {
            let a = (-(d - rhos[i]).max(0.0) / sigmas[i]).exp();
            if a <= 0.0 {
                continue;
            }
            let key = (i.min(j), i.max(j));
            let w = union.entry(key).or_insert(0.0);
            *w = *w + a - *w * a;
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = union.into_iter().map(|((i, j), w)| (i, j, w.min(1.0))).collect();
    edges.sort_unstable_by_key(|e| (e.0, e.1));
    Ok(NeighborGraph {
        indices,
        distances,
        rhos,
        sigmas,
        edges,
    })
}
