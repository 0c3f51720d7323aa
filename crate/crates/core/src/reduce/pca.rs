use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::par;
use crate::store::EmbeddingSet;

/// Result of a principal component projection.
#[derive(Debug, Clone)]
pub struct PcaResult {
    pub embeddings: EmbeddingSet,
    /// Row-major `target_dim x d` projection directions.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Fewer than `target_dim` directions carry variance; the trailing
    /// components come from an arbitrary orthonormal completion.
    pub rank_deficient: bool,
}

/// Projects mean-centered rows onto the top `target_dim` principal axes.
///
/// Components are ordered by decreasing variance. Each component is signed so
/// that its entry of largest magnitude (first such entry on ties) is
/// non-negative.
pub fn pca_fit_transform(e: &EmbeddingSet, target_dim: usize) -> Result<PcaResult> {
    let (n, d) = (e.n(), e.d());
    if target_dim == 0 || target_dim > n.min(d) {
        return Err(Error::Config(format!(
            "pca target_dim={target_dim} must lie in [1, min(n={n}, d={d})]"
        )));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..d).map(|c| e.rows().map(|r| r[c]).sum::<f64>() / nf).collect();
    let centered: Vec<f64> = e
        .rows()
        .flat_map(|r| r.iter().zip(&mean).map(|(x, m)| x - m))
        .collect();

    let cov_rows = par::map_range(d, |a| {
        (0..d)
            .map(|b| (0..n).map(|i| centered[i * d + a] * centered[i * d + b]).sum::<f64>() / nf)
            .collect::<Vec<f64>>()
    });
    let cov = DMatrix::from_fn(d, d, |a, b| cov_rows[a][b]);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .partial_cmp(&eig.eigenvalues[x])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });

    let mut components = Vec::with_capacity(target_dim * d);
    let mut explained_variance = Vec::with_capacity(target_dim);
    for &col in order.iter().take(target_dim) {
        let v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let mut pivot = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| x * sign));
        explained_variance.push(eig.eigenvalues[col].max(0.0));
    }
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let top = explained_variance[0];
    let rank_deficient = top <= 0.0 || explained_variance[target_dim - 1] <= 1e-12 * top;

    let projected: Vec<f64> = centered
        .chunks_exact(d)
        .flat_map(|row| {
            components
                .chunks_exact(d)
                .map(|comp| comp.iter().zip(row).map(|(a, b)| a * b).sum::<f64>())
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(PcaResult {
        embeddings: EmbeddingSet::new(projected, n, target_dim, e.milestone_id.clone())?,
        components,
        explained_variance,
        explained_variance_ratio,
        rank_deficient,
    })
}
