use emblens_core::geometry::silhouette;
use emblens_core::par;
use emblens_core::store::{self, Dtype};
use emblens_core::synth::{self, SynthConfig};
use emblens_core::trajectory::{
    emit_report, evaluate_milestones, parse_report, EvalSettings, MetricName, Report, ReportFormat,
};
use emblens_core::{EmbeddingSet, Milestone};
use proptest::prelude::*;

fn small_run(seed: u64) -> Vec<Milestone> {
    synth::generate_trajectory(&SynthConfig {
        n_samples: 240,
        dim: 12,
        n_classes: 4,
        n_milestones: 4,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn settings() -> EvalSettings {
    let mut s = EvalSettings::default().with_k1(4);
    s.reducer.n_neighbors = 15;
    s.reducer.layout_epochs = 60;
    s.seed = 17;
    s
}

fn report_json(milestones: &[Milestone], s: &EvalSettings) -> String {
    let report = Report::build("t", s, evaluate_milestones(milestones, s)).unwrap();
    emit_report(&report, ReportFormat::Json).unwrap()
}

#[test]
fn report_bytes_do_not_depend_on_thread_count() {
    let ms = small_run(2);
    let s = settings();
    let one = par::with_jobs(Some(1), || report_json(&ms, &s));
    let four = par::with_jobs(Some(4), || report_json(&ms, &s));
    assert_eq!(one, four);
    assert_eq!(one, report_json(&ms, &s));
}

#[test]
fn report_round_trips_exactly() {
    let ms = small_run(3);
    let s = settings();
    let report = Report::build("t", &s, evaluate_milestones(&ms, &s)).unwrap();
    let json = emit_report(&report, ReportFormat::Json).unwrap();
    let back = parse_report(&json).unwrap();
    assert_eq!(back, report);
    assert_eq!(emit_report(&back, ReportFormat::Json).unwrap(), json);
}

#[test]
fn unlabeled_milestones_give_only_label_free_metrics() {
    let mut ms = small_run(4);
    for m in &mut ms {
        m.ground_truth = None;
        m.reference_value = None;
    }
    let recs = evaluate_milestones(&ms, &settings());
    for r in &recs {
        let names: Vec<MetricName> = r.metrics.iter().map(|m| m.metric).collect();
        assert_eq!(
            names,
            [MetricName::ClusteringAgreement, MetricName::SilhouetteC1, MetricName::HistogramEntropy]
        );
    }
    let report = Report::build("t", &settings(), recs).unwrap();
    assert!(report.correlations.is_none());
}

#[test]
fn silhouette_c1_is_scored_on_the_raw_space() {
    let ms = small_run(5);
    let s = settings();
    let rec = &evaluate_milestones(&ms[3..], &s)[0];
    let gt = ms[3].ground_truth.as_ref().unwrap();
    let raw = silhouette(&ms[3].embeddings, gt).unwrap();
    assert_eq!(rec.get(MetricName::SilhouetteGt), Some(raw));
}

#[test]
fn synthetic_class_silhouette_rises_along_the_schedule() {
    for seed in 0..3 {
        let ms = small_run(seed);
        let s: Vec<f64> = ms
            .iter()
            .map(|m| silhouette(&m.embeddings, m.ground_truth.as_ref().unwrap()).unwrap())
            .collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]), "{s:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn binary_files_round_trip_bit_exactly(
        n in 1usize..30,
        d in 1usize..6,
        seed in any::<u64>(),
        wide in any::<bool>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n * d)
            .map(|_| {
                let v: f64 = rng.random_range(-1e6..1e6);
                if wide { v } else { f64::from(v as f32) }
            })
            .collect();
        let e = EmbeddingSet::new(values, n, d, "p").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let dtype = if wide { Dtype::F64 } else { Dtype::F32 };
        store::save_embeddings_as(&e, &path, dtype).unwrap();
        let a = store::load_embeddings(&path).unwrap();
        let b = store::load_embeddings(&path).unwrap();
        prop_assert_eq!(a.values(), e.values());
        prop_assert_eq!(a, b);
    }
}
