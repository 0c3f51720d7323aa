//! Geometric quality measures: silhouette scores and binned-histogram entropy.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::store::{EmbeddingSet, Partition};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_pair(e: &EmbeddingSet, p: &Partition) -> Result<()> {
    if e.n() != p.len() {
        return Err(Error::LengthMismatch {
            expected: e.n(),
            found: p.len(),
        });
    }
    let found = p.non_empty_clusters();
    if found < 2 {
        return Err(Error::TooFewClusters { found });
    }
    Ok(())
}

/// Per-sample silhouette values `(b - a) / max(a, b)` under Euclidean
/// distance. Members of singleton clusters score 0.
pub fn per_sample_silhouettes(e: &EmbeddingSet, p: &Partition) -> Result<Vec<f64>> {
    check_pair(e, p)?;
    let k = p.k();
    let sizes = p.cluster_sizes();
    let labels = p.labels();
    Ok(par::map_range(e.n(), |i| {
        let own = labels[i];
        if sizes[own] <= 1 {
            return 0.0;
        }
        let xi = e.row(i);
        let mut sums = vec![0.0; k];
        for (j, xj) in e.rows().enumerate() {
            if j != i {
                sums[labels[j]] += euclidean(xi, xj);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            (b - a) / m
        } else {
            0.0
        }
    }))
}

/// Mean silhouette over all samples.
pub fn silhouette(e: &EmbeddingSet, p: &Partition) -> Result<f64> {
    let s = per_sample_silhouettes(e, p)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Bin-width rule: `width_i = sigma_factor * std_i`, origin at the
/// per-dimension minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub sigma_factor: f64,
}

impl HistogramSpec {
    pub const DEFAULT_FACTOR: f64 = 0.4;
    /// Wider bins for supervised pre-trained encoders, whose embedding spread
    /// is roughly twice that of self-supervised ones.
    pub const PRETRAINED_FACTOR: f64 = 0.8;

    pub fn new(sigma_factor: f64) -> Result<Self> {
        if !(sigma_factor > 0.0 && sigma_factor.is_finite()) {
            return Err(Error::Config(format!("sigma factor must be positive, got {sigma_factor}")));
        }
        Ok(Self { sigma_factor })
    }
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            sigma_factor: Self::DEFAULT_FACTOR,
        }
    }
}

/// Sparse grid of occupied bins.
#[derive(Debug, Clone)]
pub struct HistogramGrid {
    pub bins: HashMap<Vec<i64>, u64>,
    /// Widths of the binned dimensions (dropped dimensions excluded).
    pub widths: Vec<f64>,
    pub origins: Vec<f64>,
    /// Indices of the dimensions that were binned.
    pub dims: Vec<usize>,
    pub n: u64,
}

impl HistogramGrid {
    pub fn build(e: &EmbeddingSet, spec: HistogramSpec) -> Self {
        let n = e.n();
        let nf = n as f64;
        let mut dims = Vec::new();
        let mut widths = Vec::new();
        let mut origins = Vec::new();
        let mut counts_per_dim = Vec::new();
        for c in 0..e.d() {
            let col = e.rows().map(|r| r[c]);
            let mean = col.clone().sum::<f64>() / nf;
            let var = col.clone().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
            let sigma = var.sqrt();
            if sigma < 1e-12 {
                continue;
            }
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            let width = spec.sigma_factor * sigma;
            let nbins = ((hi - lo) / width).ceil().max(1.0) as i64;
            dims.push(c);
            widths.push(width);
            origins.push(lo);
            counts_per_dim.push(nbins);
        }
        let mut bins: HashMap<Vec<i64>, u64> = HashMap::new();
        for r in e.rows() {
            let key: Vec<i64> = dims
                .iter()
                .enumerate()
                .map(|(slot, &c)| {
                    let idx = ((r[c] - origins[slot]) / widths[slot]).floor() as i64;
                    idx.clamp(0, counts_per_dim[slot] - 1)
                })
                .collect();
            *bins.entry(key).or_insert(0) += 1;
        }
        Self {
            bins,
            widths,
            origins,
            dims,
            n: n as u64,
        }
    }

    pub fn occupied(&self) -> usize {
        self.bins.len()
    }

    /// Entropy of the empirical bin distribution, summed in a fixed bin order.
    pub fn entropy(&self) -> f64 {
        let mut counts: Vec<u64> = self.bins.values().copied().collect();
        counts.sort_unstable();
        let n = self.n as f64;
        -counts
            .iter()
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntropy {
    /// Entropy in nats.
    pub value: f64,
    pub occupied_bins: usize,
    /// Dimensions with (near-)zero spread, excluded from binning.
    pub dropped_dims: Vec<usize>,
    /// Every dimension was dropped; `value` is 0.
    pub degenerate: bool,
}

pub fn histogram_entropy(e: &EmbeddingSet, spec: HistogramSpec) -> HistogramEntropy {
    let grid = HistogramGrid::build(e, spec);
    let dropped_dims: Vec<usize> = (0..e.d()).filter(|c| !grid.dims.contains(c)).collect();
    let degenerate = grid.dims.is_empty();
    HistogramEntropy {
        value: if degenerate { 0.0 } else { grid.entropy() },
        occupied_bins: grid.occupied(),
        dropped_dims,
        degenerate,
    }
}
