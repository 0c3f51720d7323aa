//! Per-milestone evaluation and metric-trend correlation over a run.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::{self, Distance, KMeansConfig};
use crate::error::{Error, Result};
use crate::geometry::{self, HistogramSpec};
use crate::par;
use crate::partition_metrics;
use crate::probes::{self, ProbeConfig, ProbeKind};
use crate::reduce::{self, LayoutStats, ReducerConfig, ReducerMethod};
use crate::seed;
use crate::special;
use crate::store::{EmbeddingSet, ManifestSettings, Milestone, MilestoneDescriptor};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    AmiGt,
    ClusteringAgreement,
    SilhouetteGt,
    SilhouetteC1,
    HistogramEntropy,
    KnnProbe,
    LinearProbe,
    Reference,
}

impl MetricName {
    pub const ALL: [MetricName; 8] = [
        MetricName::AmiGt,
        MetricName::ClusteringAgreement,
        MetricName::SilhouetteGt,
        MetricName::SilhouetteC1,
        MetricName::HistogramEntropy,
        MetricName::KnnProbe,
        MetricName::LinearProbe,
        MetricName::Reference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::AmiGt => "ami_gt",
            MetricName::ClusteringAgreement => "clustering_agreement",
            MetricName::SilhouetteGt => "silhouette_gt",
            MetricName::SilhouetteC1 => "silhouette_c1",
            MetricName::HistogramEntropy => "histogram_entropy",
            MetricName::KnnProbe => "knn_probe",
            MetricName::LinearProbe => "linear_probe",
            MetricName::Reference => "reference",
        }
    }

    /// Metrics that need no labels.
    pub fn is_label_free(self) -> bool {
        matches!(
            self,
            MetricName::ClusteringAgreement | MetricName::SilhouetteC1 | MetricName::HistogramEntropy
        )
    }
}

impl std::fmt::Display for MetricName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// The reduced space holds points far from the bulk of the data.
    OutlierSuspect,
    /// A zero-spread dimension was dropped from binning.
    DegenerateDimension,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::OutlierSuspect => "outlier-suspect",
            Flag::DegenerateDimension => "degenerate-dimension",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceChoice {
    Auto,
    Knn,
    Linear,
    External,
}

impl std::str::FromStr for ReferenceChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "knn" => Ok(Self::Knn),
            "linear" => Ok(Self::Linear),
            "external" => Ok(Self::External),
            other => Err(Error::Config(format!("unknown reference {other:?}"))),
        }
    }
}

/// Fully resolved evaluation settings. Every report embeds a copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub seed: u64,
    pub k1: usize,
    pub k2: usize,
    pub reducer: ReducerSettings,
    pub kmeans: KMeansSettings,
    pub sigma_factor: f64,
    /// Standard deviation convention of the histogram widths.
    pub sigma_convention: String,
    pub probe: ProbeSettings,
    pub reference: ReferenceChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducerSettings {
    pub method: ReducerMethod,
    pub target_dim: usize,
    pub n_neighbors: usize,
    pub layout_epochs: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub negative_rate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansSettings {
    pub distance: Distance,
    pub n_restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub knn_k: usize,
    pub train_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let r = ReducerConfig::default();
        let km = KMeansConfig::default();
        let p = ProbeConfig::default();
        Self {
            seed: 0,
            k1: 10,
            k2: 20,
            reducer: ReducerSettings {
                method: r.method,
                target_dim: r.target_dim,
                n_neighbors: r.n_neighbors,
                layout_epochs: r.layout_epochs,
                min_dist: r.min_dist,
                spread: r.spread,
                negative_rate: r.negative_rate,
            },
            kmeans: KMeansSettings {
                distance: km.distance,
                n_restarts: km.n_restarts,
                max_iters: km.max_iters,
                tol: km.tol,
            },
            sigma_factor: HistogramSpec::DEFAULT_FACTOR,
            sigma_convention: "population".into(),
            probe: ProbeSettings {
                knn_k: p.knn_k,
                train_fraction: p.train_fraction,
                epochs: p.epochs,
                learning_rate: p.learning_rate,
                l2: p.l2,
            },
            reference: ReferenceChoice::Auto,
        }
    }
}

impl EvalSettings {
    pub fn with_k1(mut self, k1: usize) -> Self {
        self.k1 = k1;
        self.k2 = 2 * k1;
        self
    }

    /// Overlays the values a manifest sets explicitly.
    pub fn apply_manifest(&mut self, m: &ManifestSettings) -> Result<()> {
        if let Some(k1) = m.k1 {
            *self = self.clone().with_k1(k1);
        }
        if let Some(f) = m.bin_sigma_factor {
            self.sigma_factor = HistogramSpec::new(f)?.sigma_factor;
        }
        if let Some(r) = &m.reducer {
            self.reducer.method = r.parse()?;
        }
        if let Some(seed) = m.seed {
            self.seed = seed;
        }
        if let Some(k) = m.n_neighbors {
            self.reducer.n_neighbors = k;
        }
        if let Some(r) = &m.reference {
            self.reference = r.parse()?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 < 2 || self.k2 != 2 * self.k1 {
            return Err(Error::Config(format!(
                "need k1 >= 2 and k2 = 2 * k1 (got k1={}, k2={})",
                self.k1, self.k2
            )));
        }
        HistogramSpec::new(self.sigma_factor)?;
        if self.reducer.target_dim == 0 || self.reducer.n_neighbors < 2 {
            return Err(Error::Config("target_dim must be positive and n_neighbors at least 2".into()));
        }
        Ok(())
    }

    fn milestone_seed(&self, id: &str) -> u64 {
        seed::derive(self.seed, &format!("milestone/{id}"), 0)
    }

    fn reducer_config(&self, seed: u64, method: ReducerMethod) -> ReducerConfig {
        let r = &self.reducer;
        ReducerConfig {
            method,
            target_dim: r.target_dim,
            n_neighbors: r.n_neighbors,
            layout_epochs: r.layout_epochs,
            min_dist: r.min_dist,
            spread: r.spread,
            negative_rate: r.negative_rate,
            seed: seed::derive(seed, "reducer", 0),
        }
    }

    fn kmeans_config(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k: self.k1,
            distance: self.kmeans.distance,
            n_restarts: self.kmeans.n_restarts,
            max_iters: self.kmeans.max_iters,
            tol: self.kmeans.tol,
            seed: seed::derive(seed, "kmeans", 0),
        }
    }

    fn probe_config(&self, seed: u64, kind: ProbeKind) -> ProbeConfig {
        let p = &self.probe;
        ProbeConfig {
            kind,
            knn_k: p.knn_k,
            train_fraction: p.train_fraction,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            l2: p.l2,
            seed: seed::derive(seed, "probe", 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric: MetricName,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneRecord {
    pub id: String,
    pub epoch: u64,
    pub seed: u64,
    /// Reducer that actually ran (`identity` when the input is already low-dimensional).
    pub reducer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: Vec<MetricEntry>,
}

impl MilestoneRecord {
    pub fn get(&self, metric: MetricName) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).map(|m| m.value)
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    fn failure(id: &str, epoch: u64, seed: u64, err: &Error) -> Self {
        Self {
            id: id.to_string(),
            epoch,
            seed,
            reducer: String::new(),
            layout: None,
            error: Some(err.to_string()),
            metrics: Vec::new(),
        }
    }
}

/// Points farther from the coordinate-wise median than 10x the median such
/// distance.
fn has_outliers(e: &EmbeddingSet) -> bool {
    let d = e.d();
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let center: Vec<f64> = (0..d).map(|c| median(e.rows().map(|r| r[c]).collect())).collect();
    let dists: Vec<f64> = e
        .rows()
        .map(|r| r.iter().zip(&center).map(|(x, m)| (x - m) * (x - m)).sum::<f64>().sqrt())
        .collect();
    let typical = median(dists.clone());
    typical > 0.0 && dists.iter().any(|&x| x > 10.0 * typical)
}

/// Runs the full metric pipeline on one milestone.
///
/// Order: reduce the raw embeddings, cluster the reduced space at `k1` and
/// `2 * k1`, then clustering agreement, histogram entropy of the reduced
/// space, and silhouette of `C1` on the raw space. With labels: AMI of `C1`
/// against ground truth, ground-truth silhouette on the raw space, and both
/// probes. An external reference value is recorded as `reference`.
pub fn evaluate_milestone(m: &Milestone, settings: &EvalSettings) -> Result<MilestoneRecord> {
    evaluate_inner(m, settings).map_err(|e| e.in_milestone(&m.id))
}

fn evaluate_inner(m: &Milestone, settings: &EvalSettings) -> Result<MilestoneRecord> {
    let seed = settings.milestone_seed(&m.id);
    let raw = &m.embeddings;
    let target = settings.reducer.target_dim;
    let (reduced, reducer_name, layout) = if raw.d() <= target {
        (raw.clone(), "identity".to_string(), None)
    } else {
        let mut method = settings.reducer.method;
        if method == ReducerMethod::NeighborGraph && raw.n() <= settings.reducer.n_neighbors {
            method = ReducerMethod::Pca;
        }
        let r = reduce::reduce_detailed(raw, &settings.reducer_config(seed, method))?;
        (r.embeddings, r.method.name().to_string(), r.layout)
    };

    let (c1, c2) = cluster::cluster_pair(&reduced, settings.k1, &settings.kmeans_config(seed))?;
    let mut metrics = Vec::new();
    let mut push = |metric, value, flags| metrics.push(MetricEntry { metric, value, flags });

    if let Some(gt) = &m.ground_truth {
        if gt.len() != raw.n() {
            return Err(Error::LengthMismatch {
                expected: raw.n(),
                found: gt.len(),
            });
        }
        push(MetricName::AmiGt, partition_metrics::ami_vs_ground_truth(&c1.partition, gt)?, vec![]);
    }
    push(
        MetricName::ClusteringAgreement,
        partition_metrics::clustering_agreement(&c1.partition, &c2.partition)?,
        vec![],
    );
    if let Some(gt) = &m.ground_truth {
        push(MetricName::SilhouetteGt, geometry::silhouette(raw, gt)?, vec![]);
    }
    push(MetricName::SilhouetteC1, geometry::silhouette(raw, &c1.partition)?, vec![]);

    let h = geometry::histogram_entropy(&reduced, HistogramSpec::new(settings.sigma_factor)?);
    let mut flags = Vec::new();
    if has_outliers(&reduced) {
        flags.push(Flag::OutlierSuspect);
    }
    if !h.dropped_dims.is_empty() {
        flags.push(Flag::DegenerateDimension);
    }
    push(MetricName::HistogramEntropy, h.value, flags);

    if let Some(gt) = &m.ground_truth {
        push(
            MetricName::KnnProbe,
            probes::knn_probe(raw, gt, &settings.probe_config(seed, ProbeKind::Knn))?,
            vec![],
        );
        push(
            MetricName::LinearProbe,
            probes::linear_probe(raw, gt, &settings.probe_config(seed, ProbeKind::Linear))?,
            vec![],
        );
    }
    if let Some(r) = m.reference_value {
        push(MetricName::Reference, r, vec![]);
    }
    Ok(MilestoneRecord {
        id: m.id.clone(),
        epoch: m.epoch,
        seed,
        reducer: reducer_name,
        layout,
        error: None,
        metrics,
    })
}

/// Evaluates in-memory milestones in parallel; output follows input order.
pub fn evaluate_milestones(milestones: &[Milestone], settings: &EvalSettings) -> Vec<MilestoneRecord> {
    par::map_slice(milestones, |m| {
        evaluate_milestone(m, settings)
            .unwrap_or_else(|e| MilestoneRecord::failure(&m.id, m.epoch, settings.milestone_seed(&m.id), &e))
    })
}

/// Loads and evaluates manifest milestones in parallel; load failures become
/// failed records.
pub fn evaluate_descriptors(descriptors: &[MilestoneDescriptor], settings: &EvalSettings) -> Vec<MilestoneRecord> {
    par::map_slice(descriptors, |desc| {
        desc.load()
            .and_then(|m| evaluate_milestone(&m, settings))
            .unwrap_or_else(|e| {
                MilestoneRecord::failure(&desc.id, desc.epoch, settings.milestone_seed(&desc.id), &e)
            })
    })
}

// ---------------------------------------------------------------------------
// Correlation

/// Pearson correlation and its two-sided p-value from the t statistic with
/// `n - 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Correlation(format!("need at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Correlation("constant input; correlation undefined".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / ((1.0 - r) * (1.0 + r))).sqrt();
        special::student_t_two_sided(t, df)
    };
    Ok((r, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Significance {
    Positive,
    Negative,
    NotSignificant,
    /// Too few points or a constant series.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStat {
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n_points: usize,
    pub significance: Significance,
}

impl CorrelationStat {
    fn compute(x: &[f64], y: &[f64]) -> Self {
        match pearson(x, y) {
            Ok((r, p)) => Self {
                r: Some(r),
                p: Some(p),
                n_points: x.len(),
                significance: if p >= SIGNIFICANCE_LEVEL {
                    Significance::NotSignificant
                } else if r > 0.0 {
                    Significance::Positive
                } else {
                    Significance::Negative
                },
            },
            Err(_) => Self {
                r: None,
                p: None,
                n_points: x.len(),
                significance: Significance::Undefined,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub metric: MetricName,
    pub with_init: CorrelationStat,
    /// Restricted to milestones with epoch > 0.
    pub without_init: CorrelationStat,
}

/// Values of one metric across the run, aligned to milestone order. Missing
/// values (failed milestones, metric unavailable) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub metric: MetricName,
    pub values: Vec<Option<f64>>,
    pub flags: Vec<Vec<Flag>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub ids: Vec<String>,
    pub epochs: Vec<u64>,
    pub series: Vec<MetricSeries>,
}

impl RunSeries {
    pub fn from_records(records: &[MilestoneRecord]) -> Self {
        let series = MetricName::ALL
            .iter()
            .filter(|&&name| records.iter().any(|r| r.get(name).is_some()))
            .map(|&metric| {
                let entries: Vec<Option<&MetricEntry>> =
                    records.iter().map(|r| r.metrics.iter().find(|m| m.metric == metric)).collect();
                MetricSeries {
                    metric,
                    values: entries.iter().map(|e| e.map(|e| e.value)).collect(),
                    flags: entries.iter().map(|e| e.map(|e| e.flags.clone()).unwrap_or_default()).collect(),
                }
            })
            .collect();
        Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            epochs: records.iter().map(|r| r.epoch).collect(),
            series,
        }
    }

    pub fn get(&self, metric: MetricName) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric == metric)
    }

    fn complete(&self, metric: MetricName) -> bool {
        self.get(metric).is_some_and(|s| s.values.iter().all(Option::is_some))
    }

    /// Picks the reference series: external values, else the linear probe,
    /// else the kNN probe. `None` when nothing qualifies under `Auto`.
    pub fn resolve_reference(&self, choice: ReferenceChoice) -> Result<Option<MetricName>> {
        let explicit = |m: MetricName| {
            if self.complete(m) {
                Ok(Some(m))
            } else {
                Err(Error::Correlation(format!("reference series {m} is missing for some milestones")))
            }
        };
        match choice {
            ReferenceChoice::External => explicit(MetricName::Reference),
            ReferenceChoice::Linear => explicit(MetricName::LinearProbe),
            ReferenceChoice::Knn => explicit(MetricName::KnnProbe),
            ReferenceChoice::Auto => Ok([MetricName::Reference, MetricName::LinearProbe, MetricName::KnnProbe]
                .into_iter()
                .find(|&m| self.complete(m))),
        }
    }
}

/// Correlates every other series with `reference`, with and without the
/// initialization milestones (epoch 0).
pub fn correlate_run(run: &RunSeries, reference: MetricName) -> Result<Vec<CorrelationResult>> {
    let reference_series = run
        .get(reference)
        .ok_or_else(|| Error::Correlation(format!("reference series {reference} not present")))?;
    if run.epochs.len() < 3 {
        return Err(Error::Correlation(format!(
            "need at least 3 milestones, got {}",
            run.epochs.len()
        )));
    }
    let mut out = Vec::new();
    for s in &run.series {
        if s.metric == reference || s.metric == MetricName::Reference {
            continue;
        }
        let mut all = (Vec::new(), Vec::new());
        let mut trained = (Vec::new(), Vec::new());
        for i in 0..run.epochs.len() {
            if let (Some(x), Some(y)) = (s.values[i], reference_series.values[i]) {
                all.0.push(x);
                all.1.push(y);
                if run.epochs[i] > 0 {
                    trained.0.push(x);
                    trained.1.push(y);
                }
            }
        }
        out.push(CorrelationResult {
            metric: s.metric,
            with_init: CorrelationStat::compute(&all.0, &all.1),
            without_init: CorrelationStat::compute(&trained.0, &trained.1),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reports

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub run_id: String,
    pub settings: EvalSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<MetricName>,
    pub milestones: Vec<MilestoneRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<CorrelationResult>>,
}

impl Report {
    /// Assembles a report, correlating when a reference series is available.
    pub fn build(run_id: &str, settings: &EvalSettings, records: Vec<MilestoneRecord>) -> Result<Self> {
        let run = RunSeries::from_records(&records);
        let reference = run.resolve_reference(settings.reference)?;
        let correlations = match reference {
            Some(r) if records.len() >= 3 => Some(correlate_run(&run, r)?),
            _ => None,
        };
        Ok(Self {
            format_version: REPORT_VERSION,
            run_id: run_id.to_string(),
            settings: settings.clone(),
            reference,
            milestones: records,
            correlations,
        })
    }

    /// A report without a correlation section.
    pub fn series_only(run_id: &str, settings: &EvalSettings, records: Vec<MilestoneRecord>) -> Self {
        Self {
            format_version: REPORT_VERSION,
            run_id: run_id.to_string(),
            settings: settings.clone(),
            reference: None,
            milestones: records,
            correlations: None,
        }
    }

    pub fn any_failed(&self) -> bool {
        self.milestones.iter().any(MilestoneRecord::failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Pretty-printed JSON.
    Json,
    Csv,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn emit_report(report: &Report, format: ReportFormat) -> Result<String> {
    if report.milestones.is_empty() {
        return Err(Error::Report("report holds no milestones".into()));
    }
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Report(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut s = String::from("milestone_id,epoch,metric,value,flags\n");
            for m in &report.milestones {
                let id = csv_field(&m.id);
                if m.failed() {
                    let _ = writeln!(s, "{id},{},failed,,failed", m.epoch);
                    continue;
                }
                for e in &m.metrics {
                    let flags: Vec<&str> = e.flags.iter().map(|f| f.as_str()).collect();
                    let _ = writeln!(s, "{id},{},{},{},{}", m.epoch, e.metric, e.value, flags.join(";"));
                }
            }
            Ok(s)
        }
    }
}

pub fn parse_report(json: &str) -> Result<Report> {
    serde_json::from_str(json).map_err(|e| Error::Report(e.to_string()))
}
