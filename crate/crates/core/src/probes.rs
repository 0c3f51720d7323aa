//! Label-dependent reference metrics on frozen embeddings: a cosine kNN
//! classifier and a softmax linear probe.
//!
//! Both probes split the samples into disjoint train and eval sets with a
//! seeded permutation and report top-1 accuracy on the eval set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::store::{EmbeddingSet, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Knn,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub knn_k: usize,
    pub train_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Linear,
            knn_k: 20,
            train_fraction: 0.5,
            epochs: 200,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Disjoint train/eval index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

pub fn split(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train_fraction must lie in (0, 1), got {train_fraction}")));
    }
    if n < 2 {
        return Err(Error::Config("probes need at least 2 samples".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed, "probe/split", 0));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let eval = idx.split_off(n_train);
    Ok(Split { train: idx, eval })
}

fn check_inputs(e: &EmbeddingSet, gt: &Partition) -> Result<()> {
    if e.n() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: e.n(),
            found: gt.len(),
        });
    }
    Ok(())
}

fn check_train_coverage(gt: &Partition, train: &[usize]) -> Result<()> {
    let mut seen = vec![false; gt.k()];
    for &i in train {
        seen[gt.label(i)] = true;
    }
    let sizes = gt.cluster_sizes();
    match (0..gt.k()).find(|&c| sizes[c] > 0 && !seen[c]) {
        Some(class) => Err(Error::ClassMissingFromTrain { class }),
        None => Ok(()),
    }
}

/// Accuracy of majority-vote classification by the `knn_k` most
/// cosine-similar training samples. Vote ties go to the smallest class index.
pub fn knn_probe(e: &EmbeddingSet, gt: &Partition, cfg: &ProbeConfig) -> Result<f64> {
    check_inputs(e, gt)?;
    if cfg.knn_k == 0 {
        return Err(Error::Config("knn_k must be at least 1".into()));
    }
    let d = e.d();
    let mut unit = Vec::with_capacity(e.values().len());
    for (i, r) in e.rows().enumerate() {
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(Error::ZeroNormRow { row: i });
        }
        unit.extend(r.iter().map(|x| x / norm));
    }
    let s = split(e.n(), cfg.train_fraction, cfg.seed)?;
    check_train_coverage(gt, &s.train)?;
    let k = cfg.knn_k.min(s.train.len());
    let row = |i: usize| &unit[i * d..(i + 1) * d];

    let correct = par::map_slice(&s.eval, |&q| {
        let xq = row(q);
        // (similarity, position in train list)
        let mut sims: Vec<(f64, usize)> = s
            .train
            .iter()
            .enumerate()
            .map(|(pos, &t)| (xq.iter().zip(row(t)).map(|(a, b)| a * b).sum::<f64>(), pos))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k < sims.len() {
            sims.select_nth_unstable_by(k - 1, order);
            sims.truncate(k);
        }
        let mut votes = vec![0usize; gt.k()];
        for &(_, pos) in &sims {
            votes[gt.label(s.train[pos])] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best == gt.label(q)
    });
    Ok(correct.iter().filter(|&&c| c).count() as f64 / s.eval.len() as f64)
}

/// Mean softmax cross-entropy plus `l2 / 2 * |W|^2` and its gradient.
///
/// `x` is row-major `n x d`; `params` is row-major `k x (d + 1)` with the bias
/// in the last column (not penalized). Samples are accumulated in fixed chunks
/// so the result does not depend on the thread count.
pub fn softmax_loss_and_grad(x: &[f64], d: usize, y: &[usize], k: usize, params: &[f64], l2: f64) -> (f64, Vec<f64>) {
    const CHUNK: usize = 256;
    let n = y.len();
    let stride = d + 1;
    let n_chunks = n.div_ceil(CHUNK);
    let partial = par::map_range(n_chunks, |c| {
        let mut loss = 0.0;
        let mut grad = vec![0.0; k * stride];
        let mut logits = vec![0.0; k];
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            let xi = &x[i * d..(i + 1) * d];
            for (cls, l) in logits.iter_mut().enumerate() {
                let w = &params[cls * stride..(cls + 1) * stride];
                *l = w[d] + w[..d].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            let log_z = m + z.ln();
            loss += log_z - logits[y[i]];
            for cls in 0..k {
                let p = (logits[cls] - log_z).exp() - if cls == y[i] { 1.0 } else { 0.0 };
                let g = &mut grad[cls * stride..(cls + 1) * stride];
                for (gj, xj) in g[..d].iter_mut().zip(xi) {
                    *gj += p * xj;
                }
                g[d] += p;
            }
        }
        (loss, grad)
    });
    let mut loss = 0.0;
    let mut grad = vec![0.0; k * stride];
    for (l, g) in partial {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let nf = n as f64;
    loss /= nf;
    grad.iter_mut().for_each(|g| *g /= nf);
    for cls in 0..k {
        for j in 0..d {
            let w = params[cls * stride + j];
            loss += 0.5 * l2 * w * w;
            grad[cls * stride + j] += l2 * w;
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct LinearProbeFit {
    pub accuracy: f64,
    /// Training loss before each update (length `epochs + 1`, last is final).
    pub loss_history: Vec<f64>,
    pub params: Vec<f64>,
}

/// Centers features on the training mean and scales them so the mean squared
/// row norm of the training set is 1.
fn standardize(e: &EmbeddingSet, train: &[usize]) -> Vec<f64> {
    let d = e.d();
    let nt = train.len() as f64;
    let mean: Vec<f64> = (0..d).map(|c| train.iter().map(|&i| e.row(i)[c]).sum::<f64>() / nt).collect();
    let ms: f64 = train
        .iter()
        .map(|&i| e.row(i).iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum::<f64>()
        / nt;
    let scale = if ms > 0.0 { 1.0 / ms.sqrt() } else { 1.0 };
    e.rows()
        .flat_map(|r| r.iter().zip(&mean).map(move |(x, m)| (x - m) * scale))
        .collect()
}

pub fn linear_probe_detailed(e: &EmbeddingSet, gt: &Partition, cfg: &ProbeConfig) -> Result<LinearProbeFit> {
    check_inputs(e, gt)?;
    if !(cfg.learning_rate > 0.0) || !(cfg.l2 >= 0.0) {
        return Err(Error::Config("learning_rate must be positive and l2 non-negative".into()));
    }
    let s = split(e.n(), cfg.train_fraction, cfg.seed)?;
    let d = e.d();
    let k = gt.k().max(1);
    let feats = standardize(e, &s.train);
    let gather = |idx: &[usize]| -> Vec<f64> { idx.iter().flat_map(|&i| feats[i * d..(i + 1) * d].iter().copied()).collect() };
    let x_train = gather(&s.train);
    let y_train: Vec<usize> = s.train.iter().map(|&i| gt.label(i)).collect();

    let mut params = vec![0.0; k * (d + 1)];
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = softmax_loss_and_grad(&x_train, d, &y_train, k, &params, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(loss);
        let lr = cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos());
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
    }
    let (final_loss, _) = softmax_loss_and_grad(&x_train, d, &y_train, k, &params, cfg.l2);
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    history.push(final_loss);

    let stride = d + 1;
    let correct = s
        .eval
        .iter()
        .filter(|&&i| {
            let xi = &feats[i * d..(i + 1) * d];
            let mut best = (0, f64::NEG_INFINITY);
            for cls in 0..k {
                let w = &params[cls * stride..(cls + 1) * stride];
                let logit = w[d] + w[..d].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                if logit > best.1 {
                    best = (cls, logit);
                }
            }
            best.0 == gt.label(i)
        })
        .count();
    Ok(LinearProbeFit {
        accuracy: correct as f64 / s.eval.len() as f64,
        loss_history: history,
        params,
    })
}

/// Eval-split accuracy of a softmax regression trained by full-batch gradient
/// descent with a cosine-decayed learning rate, starting from zero weights.
pub fn linear_probe(e: &EmbeddingSet, gt: &Partition, cfg: &ProbeConfig) -> Result<f64> {
    linear_probe_detailed(e, gt, cfg).map(|f| f.accuracy)
}
