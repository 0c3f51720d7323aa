//! Label-free monitoring of representation quality across training milestones.
//!
//! Embeddings dumped at each milestone are reduced to a low-dimensional space,
//! clustered twice with k-means (at `k1` and `2 * k1`), and scored with
//! clustering agreement (AMI between the two clusterings), silhouette, and a
//! binned-histogram entropy. When labels are available the same pipeline also
//! produces label-based references (AMI against ground truth, kNN and linear
//! probe accuracy), and [`trajectory::correlate_run`] reports how each metric
//! tracks the reference over the run.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is
//! enabled (the default) and sequentially otherwise. Results are identical in
//! both modes: every floating-point reduction is performed in a fixed order.

pub mod cluster;
pub mod error;
pub mod geometry;
pub mod par;
pub mod partition_metrics;
pub mod probes;
pub mod reduce;
pub mod seed;
pub mod special;
pub mod store;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
pub use store::{EmbeddingSet, Milestone, Partition, RunManifest};
