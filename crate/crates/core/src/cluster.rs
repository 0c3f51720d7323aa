//! Seeded k-means with k-means++ initialization.
//!
//! Under the cosine distance the samples are unit-normalized, the distance is
//! `1 - cos`, and each centroid update is the normalized mean of its members
//! (spherical k-means). Under the Euclidean distance the per-sample cost is the
//! squared Euclidean distance, i.e. the usual within-cluster sum of squares.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::store::{EmbeddingSet, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Cosine,
    Euclidean,
}

impl Distance {
    /// Per-sample cost between a (prepared) sample and a centroid.
    pub fn cost(self, x: &[f64], c: &[f64]) -> f64 {
        match self {
            Distance::Cosine => 1.0 - x.iter().zip(c).map(|(a, b)| a * b).sum::<f64>(),
            Distance::Euclidean => x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }
}

impl std::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Distance::Cosine),
            "euclidean" => Ok(Distance::Euclidean),
            other => Err(Error::Config(format!("unknown distance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub distance: Distance,
    pub n_restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 10,
            distance: Distance::Cosine,
            n_restarts: 10,
            max_iters: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub partition: Partition,
    /// Row-major `k x d` centroids (unit vectors under cosine).
    pub centroids: Vec<f64>,
    pub objective: f64,
    pub iterations_run: usize,
    pub restart_index: usize,
    /// Objective after each assignment step of the winning restart.
    pub objective_history: Vec<f64>,
}

/// Rows prepared for the configured distance: unit-normalized for cosine.
pub fn prepare_points(e: &EmbeddingSet, distance: Distance) -> Result<Vec<f64>> {
    match distance {
        Distance::Euclidean => Ok(e.values().to_vec()),
        Distance::Cosine => {
            let mut out = Vec::with_capacity(e.values().len());
            for (i, r) in e.rows().enumerate() {
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm <= 1e-12 {
                    return Err(Error::ZeroNormRow { row: i });
                }
                out.extend(r.iter().map(|x| x / norm));
            }
            Ok(out)
        }
    }
}

/// Total cost of `partition` against `centroids`, recomputed from scratch.
pub fn objective(e: &EmbeddingSet, partition: &Partition, centroids: &[f64], distance: Distance) -> Result<f64> {
    let points = prepare_points(e, distance)?;
    let d = e.d();
    Ok(partition
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &c)| distance.cost(&points[i * d..(i + 1) * d], &centroids[c * d..(c + 1) * d]))
        .sum())
}

struct Workspace<'a> {
    points: &'a [f64],
    d: usize,
    k: usize,
    distance: Distance,
}

impl Workspace<'_> {
    fn n(&self) -> usize {
        self.points.len() / self.d
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    fn kmeans_pp(&self, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.n();
        let mut centroids = Vec::with_capacity(self.k * self.d);
        let first = rng.random_range(0..n);
        centroids.extend_from_slice(self.point(first));
        let mut best: Vec<f64> = (0..n).map(|i| self.distance.cost(self.point(i), self.point(first)).max(0.0)).collect();
        for _ in 1..self.k {
            let total: f64 = best.iter().sum();
            let pick = if total > 0.0 {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (i, &w) in best.iter().enumerate() {
                    acc += w;
                    if acc > target && w > 0.0 {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            let c = self.point(pick).to_vec();
            for (i, b) in best.iter_mut().enumerate() {
                *b = b.min(self.distance.cost(self.point(i), &c).max(0.0));
            }
            centroids.extend_from_slice(&c);
        }
        centroids
    }

    fn assign(&self, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let d = self.d;
        let nearest = par::map_range(self.n(), |i| {
            let x = self.point(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..self.k {
                let cost = self.distance.cost(x, &centroids[c * d..(c + 1) * d]);
                if cost < best.1 {
                    best = (c, cost);
                }
            }
            best
        });
        nearest.into_iter().unzip()
    }

    fn update(&self, assign: &[usize], centroids: &mut [f64]) {
        let d = self.d;
        let mut sums = vec![0.0; self.k * d];
        let mut counts = vec![0usize; self.k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(self.point(i)) {
                *s += x;
            }
        }
        for c in 0..self.k {
            if counts[c] == 0 {
                continue;
            }
            let s = &sums[c * d..(c + 1) * d];
            let dst = &mut centroids[c * d..(c + 1) * d];
            match self.distance {
                Distance::Euclidean => {
                    for (o, v) in dst.iter_mut().zip(s) {
                        *o = v / counts[c] as f64;
                    }
                }
                Distance::Cosine => {
                    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                    // a zero mean direction leaves every unit centroid equally good
                    if norm > 1e-300 {
                        for (o, v) in dst.iter_mut().zip(s) {
                            *o = v / norm;
                        }
                    }
                }
            }
        }
    }
}

/// Hands each empty cluster the sample farthest from its current centroid.
///
/// Empty clusters are processed in increasing index order. Only samples whose
/// cluster still has at least two members are eligible, ties going to the
/// lowest sample index. The seized sample becomes the centroid of the empty
/// cluster, so its cost drops to zero and the objective cannot increase.
/// Returns true when anything was repaired.
pub fn empty_cluster_repair(
    points: &[f64],
    d: usize,
    assign: &mut [usize],
    costs: &mut [f64],
    centroids: &mut [f64],
    k: usize,
) -> bool {
    let mut sizes = vec![0usize; k];
    for &c in assign.iter() {
        sizes[c] += 1;
    }
    let mut repaired = false;
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut pick: Option<usize> = None;
        for i in 0..assign.len() {
            if sizes[assign[i]] < 2 {
                continue;
            }
            if pick.is_none_or(|p| costs[i] > costs[p]) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        sizes[assign[i]] -= 1;
        sizes[empty] += 1;
        assign[i] = empty;
        costs[i] = 0.0;
        centroids[empty * d..(empty + 1) * d].copy_from_slice(&points[i * d..(i + 1) * d]);
        repaired = true;
    }
    repaired
}

fn run_restart(ws: &Workspace, cfg: &KMeansConfig, restart: usize) -> ClusteringResult {
    let mut rng = seed::rng(cfg.seed, "kmeans/restart", restart as u64);
    let mut centroids = ws.kmeans_pp(&mut rng);
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    let mut iters = 0;
    loop {
        let (mut assign, mut costs) = ws.assign(&centroids);
        let repaired = empty_cluster_repair(ws.points, ws.d, &mut assign, &mut costs, &mut centroids, ws.k);
        let obj: f64 = costs.iter().sum();
        history.push(obj);
        let converged = obj <= 0.0 || (!repaired && prev.is_finite() && prev - obj <= cfg.tol * prev.abs());
        if converged || iters >= cfg.max_iters {
            return ClusteringResult {
                partition: Partition::new(assign, ws.k).expect("labels below k"),
                centroids,
                objective: obj,
                iterations_run: iters,
                restart_index: restart,
                objective_history: history,
            };
        }
        ws.update(&assign, &mut centroids);
        prev = obj;
        iters += 1;
    }
}

pub fn kmeans(e: &EmbeddingSet, cfg: &KMeansConfig) -> Result<ClusteringResult> {
    if cfg.k == 0 || cfg.k > e.n() {
        return Err(Error::Config(format!("k={} must lie in [1, n={}]", cfg.k, e.n())));
    }
    if cfg.n_restarts == 0 || cfg.max_iters == 0 {
        return Err(Error::Config("n_restarts and max_iters must be at least 1".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::Config(format!("tol must be non-negative, got {}", cfg.tol)));
    }
    let points = prepare_points(e, cfg.distance)?;
    let ws = Workspace {
        points: &points,
        d: e.d(),
        k: cfg.k,
        distance: cfg.distance,
    };
    let runs = par::map_range(cfg.n_restarts, |r| run_restart(&ws, cfg, r));
    let best = runs
        .into_iter()
        .reduce(|best, r| if r.objective < best.objective { r } else { best })
        .expect("at least one restart");
    Ok(best)
}

/// Clusters at `k1` and `2 * k1` with independent seed streams.
pub fn cluster_pair(e: &EmbeddingSet, k1: usize, cfg: &KMeansConfig) -> Result<(ClusteringResult, ClusteringResult)> {
    if k1 == 0 || 2 * k1 > e.n() {
        return Err(Error::Config(format!(
            "k1={k1} requires 2*k1 <= n={} and k1 >= 1",
            e.n()
        )));
    }
    let first = KMeansConfig {
        k: k1,
        seed: seed::derive(cfg.seed, "kmeans/k1", 0),
        ..*cfg
    };
    let second = KMeansConfig {
        k: 2 * k1,
        seed: seed::derive(cfg.seed, "kmeans/k2", 0),
        ..*cfg
    };
    Ok((kmeans(e, &first)?, kmeans(e, &second)?))
}
