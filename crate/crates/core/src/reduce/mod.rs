//! Dimensionality reduction of raw embeddings prior to clustering and entropy
//! estimation.
//!
//! Two methods are available: a PCA projection, and `umap-lite`, a simplified
//! UMAP-style neighbor-graph embedding (exact k-NN, fuzzy union of membership
//! weights, PCA initialization, negative-sampling SGD layout).

mod graph;
mod layout;
mod pca;

use serde::{Deserialize, Serialize};

pub use graph::{build_neighbor_graph, exact_knn, NeighborGraph};
pub use layout::{cross_entropy, fit_ab, optimize, LayoutParams};
pub use pca::{pca_fit_transform, PcaResult};

use crate::error::{Error, Result};
use crate::seed;
use crate::store::EmbeddingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReducerMethod {
    #[serde(rename = "pca")]
    Pca,
    #[serde(rename = "umap-lite")]
    NeighborGraph,
}

impl ReducerMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReducerMethod::Pca => "pca",
            ReducerMethod::NeighborGraph => "umap-lite",
        }
    }
}

impl std::fmt::Display for ReducerMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ReducerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ReducerMethod::Pca),
            "umap-lite" | "neighbor-graph" | "umap" => Ok(ReducerMethod::NeighborGraph),
            other => Err(Error::Config(format!("unknown reducer {other:?} (expected pca or umap-lite)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducerConfig {
    pub method: ReducerMethod,
    pub target_dim: usize,
    pub n_neighbors: usize,
    pub layout_epochs: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub negative_rate: usize,
    pub seed: u64,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        Self {
            method: ReducerMethod::NeighborGraph,
            target_dim: 3,
            n_neighbors: 50,
            layout_epochs: 200,
            min_dist: 0.1,
            spread: 1.0,
            negative_rate: 5,
            seed: 0,
        }
    }
}

impl ReducerConfig {
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if self.target_dim == 0 || self.target_dim >= d {
            return Err(Error::Config(format!(
                "target_dim={} must lie in [1, d={d})",
                self.target_dim
            )));
        }
        if self.method == ReducerMethod::NeighborGraph {
            if self.n_neighbors < 2 || self.n_neighbors >= n {
                return Err(Error::Config(format!(
                    "n_neighbors={} must lie in [2, n={n})",
                    self.n_neighbors
                )));
            }
            if self.layout_epochs == 0 {
                return Err(Error::Config("layout_epochs must be at least 1".into()));
            }
            if !(self.min_dist >= 0.0 && self.spread > 0.0 && self.min_dist < self.spread) {
                return Err(Error::Config(format!(
                    "need 0 <= min_dist < spread (got min_dist={}, spread={})",
                    self.min_dist, self.spread
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutStats {
    pub a: f64,
    pub b: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub edges: usize,
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub embeddings: EmbeddingSet,
    pub method: ReducerMethod,
    pub pca_rank_deficient: bool,
    pub layout: Option<LayoutStats>,
}

/// Reduces `e` to `cfg.target_dim` columns.
pub fn reduce(e: &EmbeddingSet, cfg: &ReducerConfig) -> Result<EmbeddingSet> {
    reduce_detailed(e, cfg).map(|r| r.embeddings)
}

/// Like [`reduce`], also returning layout diagnostics.
pub fn reduce_detailed(e: &EmbeddingSet, cfg: &ReducerConfig) -> Result<Reduction> {
    cfg.validate(e.n(), e.d())?;
    let init = pca_fit_transform(e, cfg.target_dim)?;
    match cfg.method {
        ReducerMethod::Pca => Ok(Reduction {
            embeddings: init.embeddings,
            method: ReducerMethod::Pca,
            pca_rank_deficient: init.rank_deficient,
            layout: None,
        }),
        ReducerMethod::NeighborGraph => {
            let graph = build_neighbor_graph(e, cfg.n_neighbors)?;
            let (a, b) = fit_ab(cfg.spread, cfg.min_dist);
            let dim = cfg.target_dim;
            let mut rng = seed::rng(cfg.seed, "reducer/layout", 0);
            // compact start: unit root-mean-square row norm, whatever the data scale
            let mut coords = init.embeddings.values().to_vec();
            let rms = (coords.iter().map(|x| x * x).sum::<f64>() / e.n() as f64).sqrt();
            if rms > 0.0 {
                coords.iter_mut().for_each(|x| *x /= rms);
            } else {
                use rand::Rng;
                coords.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
            }
            let initial_objective = cross_entropy(&coords, dim, &graph.edges, a, b);
            let params = LayoutParams {
                a,
                b,
                epochs: cfg.layout_epochs,
                negative_rate: cfg.negative_rate,
                initial_alpha: 1.0,
                repulsion: 1.0,
            };
            optimize(&mut coords, dim, &graph.edges, &params, &mut rng);
            let final_objective = cross_entropy(&coords, dim, &graph.edges, a, b);
            Ok(Reduction {
                embeddings: EmbeddingSet::new(coords, e.n(), dim, e.milestone_id.clone())?,
                method: ReducerMethod::NeighborGraph,
                pca_rank_deficient: init.rank_deficient,
                layout: Some(LayoutStats {
                    a,
                    b,
                    initial_objective,
                    final_objective,
                    edges: graph.edges.len(),
                }),
            })
        }
    }
}
