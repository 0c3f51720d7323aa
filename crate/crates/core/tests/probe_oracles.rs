use emblens_core::probes::{self, knn_probe, linear_probe, linear_probe_detailed, softmax_loss_and_grad, ProbeConfig, ProbeKind};
use emblens_core::synth::{self, SynthConfig};
use emblens_core::{EmbeddingSet, Partition};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn cfg(kind: ProbeKind, seed: u64) -> ProbeConfig {
    ProbeConfig {
        kind,
        seed,
        ..ProbeConfig::default()
    }
}

/// Two Gaussian blobs far apart along the first axis.
fn blobs(n: usize, d: usize, seed: u64) -> (EmbeddingSet, Partition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let values: Vec<f64> = labels
        .iter()
        .flat_map(|&c| {
            let mut row: Vec<f64> = (0..d).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
            row[0] += if c == 0 { 10.0 } else { -10.0 };
            row[1] += 1.0;
            row
        })
        .collect();
    (EmbeddingSet::new(values, n, d, "b").unwrap(), Partition::from_labels(labels))
}

#[test]
fn softmax_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let (n, d, k) = (rng.random_range(5..40), rng.random_range(1..6), rng.random_range(2..5));
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let params: Vec<f64> = (0..k * (d + 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l2 = 0.01;
        let (_, grad) = softmax_loss_and_grad(&x, d, &y, k, &params, l2);
        let h = 1e-5;
        let fd: Vec<f64> = (0..params.len())
            .map(|j| {
                let mut up = params.clone();
                let mut dn = params.clone();
                up[j] += h;
                dn[j] -= h;
                (softmax_loss_and_grad(&x, d, &y, k, &up, l2).0 - softmax_loss_and_grad(&x, d, &y, k, &dn, l2).0) / (2.0 * h)
            })
            .collect();
        let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-5, "relative error {}", diff / norm);
    }
}

/// kNN by sorting every training sample by cosine similarity.
fn knn_oracle(e: &EmbeddingSet, gt: &Partition, c: &ProbeConfig) -> f64 {
    let s = probes::split(e.n(), c.train_fraction, c.seed).unwrap();
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let mut correct = 0;
    for &q in &s.eval {
        let mut ranked: Vec<(f64, usize)> = s.train.iter().enumerate().map(|(pos, &t)| (cos(e.row(q), e.row(t)), pos)).collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut votes = vec![0; gt.k()];
        for &(_, pos) in ranked.iter().take(c.knn_k) {
            votes[gt.label(s.train[pos])] += 1;
        }
        let top = *votes.iter().max().unwrap();
        let pred = votes.iter().position(|&v| v == top).unwrap();
        if pred == gt.label(q) {
            correct += 1;
        }
    }
    correct as f64 / s.eval.len() as f64
}

#[test]
fn knn_matches_sorting_oracle() {
    for seed in 0..6 {
        let cfg_s = SynthConfig {
            n_samples: 300,
            dim: 8,
            n_classes: 5,
            n_milestones: 2,
            seed,
            ..SynthConfig::default()
        };
        for m in synth::generate_trajectory(&cfg_s).unwrap() {
            let gt = m.ground_truth.unwrap();
            for k in [1, 4, 20] {
                let c = ProbeConfig { knn_k: k, ..cfg(ProbeKind::Knn, seed) };
                assert_eq!(knn_probe(&m.embeddings, &gt, &c).unwrap(), knn_oracle(&m.embeddings, &gt, &c));
            }
        }
    }
}

#[test]
fn knn_separated_blobs_and_shuffled_labels() {
    let (e, gt) = blobs(2000, 8, 1);
    assert_eq!(knn_probe(&e, &gt, &cfg(ProbeKind::Knn, 1)).unwrap(), 1.0);
    let mut labels = gt.labels().to_vec();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    let acc = knn_probe(&e, &Partition::from_labels(labels), &cfg(ProbeKind::Knn, 1)).unwrap();
    assert!((acc - 0.5).abs() <= 0.05, "{acc}");
}

#[test]
fn linear_probe_loss_is_monotone_on_synthetic_milestones() {
    let cfg_s = SynthConfig {
        n_samples: 600,
        dim: 16,
        n_milestones: 4,
        seed: 4,
        ..SynthConfig::default()
    };
    for m in synth::generate_trajectory(&cfg_s).unwrap() {
        let fit = linear_probe_detailed(&m.embeddings, m.ground_truth.as_ref().unwrap(), &cfg(ProbeKind::Linear, 3)).unwrap();
        for w in fit.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} {:?}", m.id, w);
        }
    }
    let (e, gt) = blobs(400, 4, 9);
    assert_eq!(linear_probe(&e, &gt, &cfg(ProbeKind::Linear, 0)).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn knn_ignores_positive_row_scaling(seed in 0u64..500, scales in prop::collection::vec(0.1f64..10.0, 120)) {
        let (e, gt) = blobs(120, 5, seed);
        let mut labels = gt.labels().to_vec();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let gt = Partition::from_labels(labels);
        let scaled: Vec<f64> = e.rows().zip(&scales).flat_map(|(r, s)| r.iter().map(move |x| x * s)).collect();
        let scaled = EmbeddingSet::new(scaled, e.n(), e.d(), "s").unwrap();
        let c = cfg(ProbeKind::Knn, seed);
        prop_assert_eq!(knn_probe(&e, &gt, &c).unwrap(), knn_probe(&scaled, &gt, &c).unwrap());
    }

    #[test]
    fn probes_are_deterministic_and_bounded(seed in 0u64..500, frac in 0.2f64..0.8) {
        let (e, gt) = blobs(80, 3, seed);
        for kind in [ProbeKind::Knn, ProbeKind::Linear] {
            let c = ProbeConfig { train_fraction: frac, epochs: 30, ..cfg(kind, seed) };
            let run = || match kind {
                ProbeKind::Knn => knn_probe(&e, &gt, &c).unwrap(),
                ProbeKind::Linear => linear_probe(&e, &gt, &c).unwrap(),
            };
            let a = run();
            prop_assert_eq!(a, run());
            prop_assert!((0.0..=1.0).contains(&a));
        }
        let s = probes::split(80, frac, seed).unwrap();
        prop_assert!(s.train.iter().all(|i| !s.eval.contains(i)));
        prop_assert_eq!(s.train.len() + s.eval.len(), 80);
    }
}
