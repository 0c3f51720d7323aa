//! Information-theoretic comparison of partitions.
//!
//! All quantities are in nats. The expected mutual information follows the
//! permutation (hypergeometric) model with both sets of marginals fixed, and
//! the adjusted mutual information normalizes by the arithmetic mean of the two
//! entropies.

use crate::error::{Error, Result};
use crate::par;
use crate::store::Partition;

/// Joint counts of two partitions over the same samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<u64>,
    rows: usize,
    cols: usize,
    n: u64,
    row_marginals: Vec<u64>,
    col_marginals: Vec<u64>,
}

impl ContingencyTable {
    /// Builds a table from a row-major `rows x cols` count matrix.
    pub fn from_counts(counts: Vec<u64>, rows: usize, cols: usize) -> Result<Self> {
        if counts.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: counts.len(),
            });
        }
        let row_marginals: Vec<u64> = counts.chunks_exact(cols.max(1)).map(|r| r.iter().sum()).collect();
        let col_marginals: Vec<u64> = (0..cols)
            .map(|j| (0..rows).map(|i| counts[i * cols + j]).sum())
            .collect();
        let n: u64 = row_marginals.iter().sum();
        if n == 0 {
            return Err(Error::Shape("contingency table must hold at least one sample".into()));
        }
        Ok(Self {
            counts,
            rows,
            cols,
            n,
            row_marginals: if cols == 0 { vec![0; rows] } else { row_marginals },
            col_marginals,
        })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged contingency rows".into()));
        }
        Self::from_counts(rows.concat(), rows.len(), cols)
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn row_marginals(&self) -> &[u64] {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &[u64] {
        &self.col_marginals
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks_exact(self.cols).map(<[u64]>::to_vec).collect()
    }

    /// Swaps the roles of the two partitions.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0; self.counts.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                counts[j * self.rows + i] = self.count(i, j);
            }
        }
        Self {
            counts,
            rows: self.cols,
            cols: self.rows,
            n: self.n,
            row_marginals: self.col_marginals.clone(),
            col_marginals: self.row_marginals.clone(),
        }
    }
}

pub fn contingency(p: &Partition, q: &Partition) -> Result<ContingencyTable> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let (rows, cols) = (p.k(), q.k());
    let mut counts = vec![0u64; rows * cols];
    for (&a, &b) in p.labels().iter().zip(q.labels()) {
        counts[a * cols + b] += 1;
    }
    ContingencyTable::from_counts(counts, rows, cols)
}

fn entropy_of_counts(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Shannon entropy (nats) of the cluster-size distribution.
pub fn partition_entropy(p: &Partition) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let sizes: Vec<u64> = p.cluster_sizes().into_iter().map(|c| c as u64).collect();
    entropy_of_counts(&sizes, p.len() as u64)
}

pub fn mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n as f64;
    let mut mi = 0.0;
    for i in 0..t.rows {
        let a = t.row_marginals[i] as f64;
        for j in 0..t.cols {
            let c = t.count(i, j);
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let b = t.col_marginals[j] as f64;
            mi += (c / n) * (c * n / (a * b)).ln();
        }
    }
    mi.max(0.0)
}

/// `ln(k!)` for `k` in `0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Expected mutual information of two random partitions with the marginals of
/// `t`, under the hypergeometric model.
pub fn expected_mutual_information(t: &ContingencyTable) -> f64 {
    let n = t.n as usize;
    let nf = n as f64;
    let lf = log_factorials(n);
    let rows: Vec<usize> = t.row_marginals.iter().filter(|&&a| a > 0).map(|&a| a as usize).collect();
    let cols: Vec<usize> = t.col_marginals.iter().filter(|&&b| b > 0).map(|&b| b as usize).collect();
    let per_row = par::map_slice(&rows, |&a| {
        let mut acc = 0.0;
        for &b in &cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
            for nij in lo..=hi {
                let log_p = fixed - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n + nij - a - b];
                let x = nij as f64;
                acc += (x / nf) * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
        acc
    });
    per_row.iter().sum()
}

/// Adjusted mutual information with the arithmetic-mean normalizer.
///
/// When the denominator vanishes (both partitions carry no information beyond
/// chance, e.g. single-cluster partitions) the score is 1 for identical
/// groupings and 0 otherwise.
pub fn adjusted_mutual_information(p: &Partition, q: &Partition) -> Result<f64> {
    let t = contingency(p, q)?;
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t);
    let mean_h = 0.5 * (partition_entropy(p) + partition_entropy(q));
    let den = mean_h - emi;
    if den.abs() < 1e-12 {
        return Ok(if p.same_grouping(q) { 1.0 } else { 0.0 });
    }
    Ok(((mi - emi) / den).clamp(-1.0, 1.0))
}

/// Label-free agreement between two k-means runs at `k1` and `2 * k1`.
pub fn clustering_agreement(c1: &Partition, c2: &Partition) -> Result<f64> {
    adjusted_mutual_information(c1, c2)
}

/// AMI of a clustering against ground-truth classes (label-dependent baseline).
pub fn ami_vs_ground_truth(c1: &Partition, gt: &Partition) -> Result<f64> {
    adjusted_mutual_information(c1, gt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(v: &[usize]) -> Partition {
        Partition::from_labels(v.to_vec())
    }

    #[test]
    fn contingency_examples() {
        let p = part(&[0, 0, 1, 1]);
        assert_eq!(contingency(&p, &part(&[0, 0, 1, 1])).unwrap().to_rows(), vec![vec![2, 0], vec![0, 2]]);
        assert_eq!(contingency(&p, &part(&[1, 1, 0, 0])).unwrap().to_rows(), vec![vec![0, 2], vec![2, 0]]);
        assert_eq!(contingency(&p, &part(&[0, 1, 0, 1])).unwrap().to_rows(), vec![vec![1, 1], vec![1, 1]]);
        assert!(matches!(contingency(&p, &part(&[0, 1])), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(partition_entropy(&part(&[3, 3, 3])), 0.0);
        assert!((partition_entropy(&part(&[0, 1, 2, 3])) - 4f64.ln()).abs() < 1e-15);
        let direct = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((partition_entropy(&part(&[0, 0, 0, 1])) - direct).abs() < 1e-15);
        assert!((direct - 0.5623).abs() < 1e-4);
        // unused label slots contribute nothing
        let wide = Partition::new(vec![0, 0, 0, 1], 5).unwrap();
        assert_eq!(partition_entropy(&wide), partition_entropy(&part(&[0, 0, 0, 1])));
    }

    #[test]
    fn mi_examples() {
        let t = ContingencyTable::from_rows(&[vec![2, 0], vec![0, 2]]).unwrap();
        assert!((mutual_information(&t) - 2f64.ln()).abs() < 1e-12);
        let t = ContingencyTable::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(mutual_information(&t), 0.0);

        // joint {2,1;0,1}/4, marginals (3/4,1/4) x (1/2,1/2)
        let cells: [(f64, f64, f64); 3] = [(0.5, 0.75, 0.5), (0.25, 0.75, 0.5), (0.25, 0.25, 0.5)];
        let oracle: f64 = cells.iter().map(|&(pxy, px, py)| pxy * (pxy / (px * py)).ln()).sum();
        let t = ContingencyTable::from_rows(&[vec![2, 1], vec![0, 1]]).unwrap();
        assert!((mutual_information(&t) - oracle).abs() < 1e-12);
        assert!((oracle - 0.2158).abs() < 1e-4);
    }

    #[test]
    fn emi_small_cases() {
        let t = ContingencyTable::from_rows(&[vec![5]]).unwrap();
        assert_eq!(expected_mutual_information(&t), 0.0);
        // marginals (1,1) x (1,1): the diagonal and anti-diagonal tables are equally likely,
        // each with I = ln 2
        let t = ContingencyTable::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let emi = expected_mutual_information(&t);
        assert!((emi - 2f64.ln()).abs() < 1e-12, "{emi}");
    }

    #[test]
    fn ami_identity_and_relabeling() {
        let p = part(&[0, 1, 1, 2, 2, 2, 0, 1]);
        assert!((adjusted_mutual_information(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        let relabeled = part(&[2, 0, 0, 1, 1, 1, 2, 0]);
        assert!((adjusted_mutual_information(&p, &relabeled).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ami_degenerate_denominator() {
        let gt = part(&[0, 0, 0, 0]);
        assert_eq!(ami_vs_ground_truth(&part(&[0, 1, 0, 1]), &gt).unwrap(), 0.0);
        assert_eq!(ami_vs_ground_truth(&part(&[1, 1, 1, 1]), &gt).unwrap(), 1.0);
    }

    #[test]
    fn transpose_swaps_marginals() {
        let t = ContingencyTable::from_rows(&[vec![2, 1, 0], vec![0, 1, 3]]).unwrap();
        let tt = t.transpose();
        assert_eq!(tt.shape(), (3, 2));
        assert_eq!(tt.row_marginals(), t.col_marginals());
        assert_eq!(tt.count(2, 1), 3);
    }
}
