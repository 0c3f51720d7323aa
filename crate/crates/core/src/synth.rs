//! Seeded synthetic training trajectories.
//!
//! Class centers are drawn once, uniformly on a sphere of radius
//! `between_scale`, and stay fixed for the whole run. The milestone at
//! progression `t` draws each sample around its class center with isotropic
//! spread `lerp(within_sigma_start, within_sigma_end, t)`, so class structure
//! tightens as the run advances. Each milestone carries its ground-truth
//! classes and, as a reference value, the measured accuracy of a
//! nearest-center classifier on the generated points.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::store::{EmbeddingSet, Milestone, Partition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub dim: usize,
    pub n_classes: usize,
    pub n_milestones: usize,
    /// Progression of each milestone in `[0, 1]`; empty means evenly spaced.
    pub t_schedule: Vec<f64>,
    pub within_sigma_start: f64,
    pub within_sigma_end: f64,
    pub between_scale: f64,
    /// Fraction of samples replaced by outliers at each milestone; empty means
    /// no outliers anywhere.
    pub outlier_rate: Vec<f64>,
    pub outlier_radius_factor: f64,
    /// Epoch spacing between milestones (the first milestone is epoch 0).
    pub epoch_step: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            dim: 32,
            n_classes: 10,
            n_milestones: 10,
            t_schedule: Vec::new(),
            within_sigma_start: 0.4,
            within_sigma_end: 0.02,
            between_scale: 1.0,
            outlier_rate: Vec::new(),
            outlier_radius_factor: 50.0,
            epoch_step: 20,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn schedule(&self) -> Vec<f64> {
        if !self.t_schedule.is_empty() {
            return self.t_schedule.clone();
        }
        match self.n_milestones {
            0 => Vec::new(),
            1 => vec![1.0],
            m => (0..m).map(|i| i as f64 / (m - 1) as f64).collect(),
        }
    }

    pub fn sigma_at(&self, t: f64) -> f64 {
        self.within_sigma_start + (self.within_sigma_end - self.within_sigma_start) * t
    }

    pub fn outlier_count(&self, milestone: usize) -> usize {
        let rate = self.outlier_rate.get(milestone).copied().unwrap_or(0.0);
        (rate * self.n_samples as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_samples == 0 || self.dim == 0 || self.n_classes == 0 || self.n_milestones == 0 {
            return bad("n_samples, dim, n_classes and n_milestones must be positive".into());
        }
        if self.n_classes > self.n_samples {
            return bad(format!(
                "n_classes={} exceeds n_samples={}",
                self.n_classes, self.n_samples
            ));
        }
        if !(self.within_sigma_end > 0.0 && self.within_sigma_end < self.within_sigma_start) {
            return bad("need 0 < within_sigma_end < within_sigma_start".into());
        }
        if !(self.between_scale > 0.0 && self.outlier_radius_factor > 0.0) {
            return bad("between_scale and outlier_radius_factor must be positive".into());
        }
        let sched = self.schedule();
        if sched.len() != self.n_milestones || sched.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return bad("t_schedule must hold n_milestones values in [0, 1]".into());
        }
        if !self.outlier_rate.is_empty() && self.outlier_rate.len() != self.n_milestones {
            return bad("outlier_rate must be empty or hold one rate per milestone".into());
        }
        if self.outlier_rate.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("outlier rates must lie in [0, 1)".into());
        }
        Ok(())
    }
}

fn random_direction(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Class centers on the sphere of radius `between_scale` (row-major).
pub fn class_centers(cfg: &SynthConfig) -> Vec<f64> {
    let mut rng = seed::rng(cfg.seed, "synth/centers", 0);
    (0..cfg.n_classes)
        .flat_map(|_| {
            random_direction(&mut rng, cfg.dim)
                .into_iter()
                .map(|x| x * cfg.between_scale)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Accuracy of assigning each sample to its nearest class center.
pub fn nearest_center_accuracy(e: &EmbeddingSet, gt: &Partition, centers: &[f64]) -> f64 {
    let d = e.d();
    let k = centers.len() / d;
    let correct = e
        .rows()
        .zip(gt.labels())
        .filter(|(r, &label)| {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let dist: f64 = r.iter().zip(&centers[c * d..(c + 1) * d]).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            best.0 == label
        })
        .count();
    correct as f64 / e.n() as f64
}

fn replace_rows(values: &mut [f64], d: usize, n: usize, count: usize, radius: f64, rng: &mut impl Rng) {
    let rows = index::sample(rng, n, count).into_vec();
    let mut rows = rows;
    rows.sort_unstable();
    for r in rows {
        let dir = random_direction(rng, d);
        for (dst, x) in values[r * d..(r + 1) * d].iter_mut().zip(dir) {
            *dst = x * radius;
        }
    }
}

/// Replaces `count` seeded-chosen rows with points at distance
/// `radius_factor * max_row_norm` from the origin, in random directions.
pub fn inject_outliers(e: &EmbeddingSet, count: usize, radius_factor: f64, seed: u64) -> Result<EmbeddingSet> {
    if count >= e.n() {
        return Err(Error::Config(format!("outlier count {count} must be below n={}", e.n())));
    }
    if count == 0 {
        return Ok(e.clone());
    }
    let max_norm = e
        .rows()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut values = e.values().to_vec();
    let mut rng = seed::rng(seed, "synth/inject", 0);
    replace_rows(&mut values, e.d(), e.n(), count, radius_factor * max_norm, &mut rng);
    EmbeddingSet::new(values, e.n(), e.d(), e.milestone_id.clone())
}

pub fn milestone_id(i: usize) -> String {
    format!("m{i:03}")
}

pub fn generate_trajectory(cfg: &SynthConfig) -> Result<Vec<Milestone>> {
    cfg.validate()?;
    let centers = class_centers(cfg);
    let schedule = cfg.schedule();
    let (n, d) = (cfg.n_samples, cfg.dim);
    let labels: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
    let gt = Partition::new(labels.clone(), cfg.n_classes)?;

    par::map_range(cfg.n_milestones, |m| {
        let sigma = cfg.sigma_at(schedule[m]);
        let mut rng = seed::rng(cfg.seed, "synth/milestone", m as u64);
        let mut values = Vec::with_capacity(n * d);
        for &c in &labels {
            let center = &centers[c * d..(c + 1) * d];
            values.extend(center.iter().map(|mu| mu + sigma * rng.sample::<f64, _>(StandardNormal)));
        }
        let count = cfg.outlier_count(m);
        if count > 0 {
            let mut orng = seed::rng(cfg.seed, "synth/outliers", m as u64);
            replace_rows(&mut values, d, n, count, cfg.outlier_radius_factor * cfg.between_scale, &mut orng);
        }
        let id = milestone_id(m);
        let embeddings = EmbeddingSet::new(values, n, d, id.clone())?;
        let reference = nearest_center_accuracy(&embeddings, &gt, &centers);
        Ok(Milestone {
            id,
            epoch: m as u64 * cfg.epoch_step,
            embeddings,
            ground_truth: Some(gt.clone()),
            reference_value: Some(reference),
        })
    })
    .into_iter()
    .collect()
}
