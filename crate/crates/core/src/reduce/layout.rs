//! Stochastic-gradient layout of a fuzzy neighbor graph in low dimension.
//!
//! The low-dimensional similarity kernel is `1 / (1 + a * r^(2b))`, with `a`
//! and `b` fitted so the kernel approximates an offset exponential decay set
//! by `min_dist` and `spread`. Attractive updates follow graph edges, sampled
//! in proportion to their weight; each positive sample is followed by a fixed
//! number of uniformly drawn negative (repulsive) samples.

use rand::Rng;

use crate::par;

/// Least-squares fit of `(a, b)` in `1 / (1 + a x^(2b))` to
/// `1` for `x < min_dist` and `exp(-(x - min_dist) / spread)` beyond, over
/// 300 points on `[0, 3 * spread]` (Levenberg-Marquardt).
pub fn fit_ab(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let u = x.powf(2.0 * b);
            let f = 1.0 / (1.0 + a * u);
            let r = f - y;
            let da = -u * f * f;
            let db = -a * u * 2.0 * x.ln() * f * f;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let m11 = jaa * (1.0 + lambda);
            let m22 = jbb * (1.0 + lambda);
            let det = m11 * m22 - jab * jab;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let c = sse(na, nb);
                if c < cost {
                    let rel = (cost - c) / cost.max(1e-300);
                    a = na;
                    b = nb;
                    cost = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

#[derive(Debug, Clone, Copy)]
pub struct LayoutParams {
    pub a: f64,
    pub b: f64,
    pub epochs: usize,
    pub negative_rate: usize,
    pub initial_alpha: f64,
    pub repulsion: f64,
}

fn clip(v: f64) -> f64 {
    v.clamp(-4.0, 4.0)
}

/// Optimizes `coords` (row-major, `dim` columns) in place. Updates run in a
/// fixed edge order driven by a single generator, so the result depends only
/// on the inputs and the generator state.
pub fn optimize(
    coords: &mut [f64],
    dim: usize,
    edges: &[(usize, usize, f64)],
    params: &LayoutParams,
    rng: &mut impl Rng,
) {
    let n = coords.len() / dim;
    if edges.is_empty() || n < 2 {
        return;
    }
    let w_max = edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let cutoff = w_max / params.epochs as f64;
    // both directions of each undirected edge, as in a symmetric COO matrix
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut eps = Vec::new();
    for &(i, j, w) in edges {
        if w < cutoff {
            continue;
        }
        for (h, t) in [(i, j), (j, i)] {
            heads.push(h);
            tails.push(t);
            eps.push(w_max / w);
        }
    }
    let neg_rate = params.negative_rate.max(1) as f64;
    let eps_neg: Vec<f64> = eps.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = eps.clone();
    let mut next_neg = eps_neg.clone();
    let (a, b) = (params.a, params.b);
    let mut alpha = params.initial_alpha;
    let mut delta = vec![0.0; dim];

    for epoch in 0..params.epochs {
        let epoch_f = epoch as f64;
        for e in 0..heads.len() {
            if next_sample[e] > epoch_f {
                continue;
            }
            let (h, t) = (heads[e], tails[e]);
            let mut d2 = 0.0;
            for c in 0..dim {
                delta[c] = coords[h * dim + c] - coords[t * dim + c];
                d2 += delta[c] * delta[c];
            }
            if d2 > 0.0 {
                let pow_b = d2.powf(b);
                let coeff = -2.0 * a * b * pow_b / d2 / (a * pow_b + 1.0);
                for c in 0..dim {
                    let g = clip(coeff * delta[c]) * alpha;
                    coords[h * dim + c] += g;
                    coords[t * dim + c] -= g;
                }
            }
            next_sample[e] += eps[e];

            let n_neg = ((epoch_f - next_neg[e]) / eps_neg[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let o = rng.random_range(0..n);
                if o == h {
                    continue;
                }
                let mut d2 = 0.0;
                for c in 0..dim {
                    delta[c] = coords[h * dim + c] - coords[o * dim + c];
                    d2 += delta[c] * delta[c];
                }
                let coeff = if d2 > 0.0 {
                    2.0 * params.repulsion * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                } else {
                    0.0
                };
                for c in 0..dim {
                    let g = if coeff > 0.0 { clip(coeff * delta[c]) } else { 4.0 };
                    coords[h * dim + c] += g * alpha;
                }
            }
            next_neg[e] += n_neg as f64 * eps_neg[e];
        }
        alpha = params.initial_alpha * (1.0 - (epoch_f + 1.0) / params.epochs as f64);
    }
}

/// Fuzzy cross-entropy between the graph memberships and the layout's
/// low-dimensional similarities, summed over all unordered pairs.
pub fn cross_entropy(coords: &[f64], dim: usize, edges: &[(usize, usize, f64)], a: f64, b: f64) -> f64 {
    const EPS: f64 = 1e-12;
    let n = coords.len() / dim;
    let q = |i: usize, j: usize| -> f64 {
        let d2: f64 = (0..dim).map(|c| (coords[i * dim + c] - coords[j * dim + c]).powi(2)).sum();
        (1.0 / (1.0 + a * d2.powf(b))).clamp(EPS, 1.0 - EPS)
    };
    let rows = par::map_range(n, |i| ((i + 1)..n).map(|j| -(1.0 - q(i, j)).ln()).sum::<f64>());
    let background: f64 = rows.iter().sum();
    let correction: f64 = edges
        .iter()
        .map(|&(i, j, w)| {
            let qij = q(i, j);
            -w * qij.ln() - (1.0 - w) * (1.0 - qij).ln() + (1.0 - qij).ln()
        })
        .sum();
    background + correction
}
