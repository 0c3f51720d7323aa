//! Brute-force reference implementations shared by the integration tests.
//! They deliberately share no code with the library.

#![allow(dead_code)]

use std::collections::HashMap;

/// All set partitions of `n` items into at most `max_blocks` blocks, as
/// restricted growth strings.
pub fn set_partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, n: usize, max_blocks: usize, used: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let limit = (used + 1).min(max_blocks);
        for b in 0..limit {
            cur.push(b);
            rec(cur, n, max_blocks, used.max(b + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    rec(&mut Vec::new(), n, max_blocks, 0, &mut out);
    out
}

/// Mutual information in nats straight from the joint label frequencies.
pub fn mi_direct(p: &[usize], q: &[usize]) -> f64 {
    let n = p.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in p.iter().zip(q) {
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *pa.entry(a).or_default() += 1.0 / n;
        *pb.entry(b).or_default() += 1.0 / n;
    }
    let mut keys: Vec<_> = joint.keys().copied().collect();
    keys.sort_unstable();
    keys.iter()
        .map(|k| {
            let pxy = joint[k];
            pxy * (pxy / (pa[&k.0] * pb[&k.1])).ln()
        })
        .sum()
}

pub fn entropy_direct(p: &[usize]) -> f64 {
    let n = p.len() as f64;
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for &a in p {
        *counts.entry(a).or_default() += 1.0;
    }
    counts.values().map(|&c| -(c / n) * (c / n).ln()).sum()
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Expected MI under the permutation model: `p` is held fixed and `q`'s
/// labels are averaged over every distinct arrangement, which is the
/// hypergeometric model for fixed marginals.
pub fn emi_enumeration(p: &[usize], q: &[usize]) -> f64 {
    let mut arr = q.to_vec();
    arr.sort_unstable();
    let mut total = 0.0;
    let mut count = 0usize;
    loop {
        total += mi_direct(p, &arr);
        count += 1;
        if !next_permutation(&mut arr) {
            break;
        }
    }
    total / count as f64
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Silhouette by the textbook double loop: for each point, mean distance to
/// every cluster in turn.
pub fn silhouette_naive(rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = rows.len();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for i in 0..n {
        let own_size = labels.iter().filter(|&&l| l == labels[i]).count();
        if own_size == 1 {
            continue;
        }
        let mut a = 0.0;
        let mut b = f64::INFINITY;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c && j != i).collect();
            if members.is_empty() {
                continue;
            }
            let mean = members.iter().map(|&j| dist(&rows[i], &rows[j])).sum::<f64>() / members.len() as f64;
            if c == labels[i] {
                a = mean;
            } else {
                b = b.min(mean);
            }
        }
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cost {
    SquaredEuclidean,
    Cosine,
}

/// Relabels by order of first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// k-means objective of a labelling with its optimal centers: squared
/// distances to the mean, or `|C| - |sum of unit vectors|` per cluster under
/// cosine. Label names do not affect the result.
pub fn partition_cost(rows: &[Vec<f64>], labels: &[usize], k: usize, cost: Cost) -> f64 {
    let labels = &canonical(labels)[..];
    let d = rows[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = rows.iter().zip(labels).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        if members.is_empty() {
            continue;
        }
        match cost {
            Cost::SquaredEuclidean => {
                let mean: Vec<f64> =
                    (0..d).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64).collect();
                total += members.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>()).sum::<f64>();
            }
            Cost::Cosine => {
                let mut s = vec![0.0; d];
                for r in &members {
                    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                    for j in 0..d {
                        s[j] += r[j] / norm;
                    }
                }
                total += members.len() as f64 - s.iter().map(|x| x * x).sum::<f64>().sqrt();
            }
        }
    }
    total
}

/// Best 2-cluster objective over every split into two non-empty groups.
pub fn best_two_split(rows: &[Vec<f64>], cost: Cost) -> f64 {
    let n = rows.len();
    let mut best = f64::INFINITY;
    // item 0 stays in group 0 to skip mirrored labellings
    for mask in 1u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n).map(|i| if i > 0 && mask >> (i - 1) & 1 == 1 { 1 } else { 0 }).collect();
        best = best.min(partition_cost(rows, &labels, 2, cost));
    }
    best
}
