//! `emblens` command-line front end.
//!
//! Exit status: 0 on success, 1 when an evaluation fails, 2 for bad input or
//! usage.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use emblens_core::cluster::Distance;
use emblens_core::geometry::HistogramSpec;
use emblens_core::probes::{self, ProbeConfig, ProbeKind};
use emblens_core::reduce::ReducerMethod;
use emblens_core::store::{self, ManifestDoc, MilestoneEntry};
use emblens_core::synth::{self, SynthConfig};
use emblens_core::trajectory::{
    self, EvalSettings, MilestoneRecord, ReferenceChoice, Report, ReportFormat, RunSeries, Significance,
};
use emblens_core::{par, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EVAL_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

pub const SEED_ENV: &str = "EMBLENS_SEED";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Parser)]
#[command(name = "emblens", version, about = "Evaluate embedding quality along a training run")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every milestone of a manifest and correlate the metric trends.
    Eval(EvalArgs),
    /// Re-emit or re-correlate an existing JSON report.
    Report(ReportArgs),
    /// Write a synthetic trajectory (manifest, embeddings, labels).
    Synth(SynthArgs),
    /// Run the kNN and linear probes on one labelled embedding file.
    Probe(ProbeArgs),
    /// Check a manifest and its files without evaluating.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Structured JSON
    Text,
    Csv,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReducerArg {
    Pca,
    UmapLite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    Auto,
    Knn,
    Linear,
    External,
}

impl From<ReferenceArg> for ReferenceChoice {
    fn from(r: ReferenceArg) -> Self {
        match r {
            ReferenceArg::Auto => ReferenceChoice::Auto,
            ReferenceArg::Knn => ReferenceChoice::Knn,
            ReferenceArg::Linear => ReferenceChoice::Linear,
            ReferenceArg::External => ReferenceChoice::External,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceArg {
    Cosine,
    Euclidean,
}

impl From<DistanceArg> for Distance {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::Cosine => Distance::Cosine,
            DistanceArg::Euclidean => Distance::Euclidean,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run manifest (TOML).
    pub manifest: PathBuf,
    /// Output directory for report files (default: next to the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Base seed; falls back to the manifest, then $EMBLENS_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clusters in the first clustering; the second uses twice as many.
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long, value_enum)]
    pub reducer: Option<ReducerArg>,
    /// Neighbors of the umap-lite graph.
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Histogram bin width in units of each dimension's standard deviation.
    #[arg(long, conflicts_with = "pretrained")]
    pub sigma_factor: Option<f64>,
    /// Use the wider bins suited to pre-trained models.
    #[arg(long)]
    pub pretrained: bool,
    #[arg(long, value_enum)]
    pub reference: Option<ReferenceArg>,
    #[arg(long, value_enum)]
    pub distance: Option<DistanceArg>,
    #[arg(long, value_enum, default_value = "both")]
    pub format: Format,
    /// Start from the settings embedded in an earlier JSON report.
    #[arg(long)]
    pub settings_from: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report written by `eval`.
    pub report: PathBuf,
    /// Output directory for re-emitted files (default: print the summary only).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Re-correlate against a different reference series.
    #[arg(long, value_enum)]
    pub reference: Option<ReferenceArg>,
    #[arg(long, value_enum, default_value = "both")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = SynthConfig::default().n_samples)]
    pub samples: usize,
    #[arg(long, default_value_t = SynthConfig::default().dim)]
    pub dim: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_classes)]
    pub classes: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_milestones)]
    pub milestones: usize,
    #[arg(long, default_value_t = SynthConfig::default().within_sigma_start)]
    pub sigma_start: f64,
    #[arg(long, default_value_t = SynthConfig::default().within_sigma_end)]
    pub sigma_end: f64,
    /// Milestone indices that receive outliers, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub outlier_milestones: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub outlier_count: usize,
    /// Outlier distance in units of the class-center radius.
    #[arg(long, default_value_t = 50.0)]
    pub outlier_factor: f64,
    /// Leave label files out of the manifest.
    #[arg(long)]
    pub no_labels: bool,
    /// Leave reference values out of the manifest.
    #[arg(long)]
    pub no_reference: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeKindArg {
    Knn,
    Linear,
    Both,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    pub embeddings: PathBuf,
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: ProbeKindArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = ProbeConfig::default().knn_k)]
    pub knn_k: usize,
    #[arg(long, default_value_t = ProbeConfig::default().train_fraction)]
    pub train_fraction: f64,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub manifest: PathBuf,
    /// Distance the clustering will use; cosine makes zero-norm rows a warning.
    #[arg(long, value_enum, default_value = "cosine")]
    pub distance: DistanceArg,
}

/// Failure carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: e.into(),
    }
}

fn eval_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_EVAL_FAILURE,
        error: e.into(),
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Eval(a) => cmd_eval(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Probe(a) => cmd_probe(&a),
        Command::Validate(a) => cmd_validate(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn env_seed() -> std::result::Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| input(anyhow!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Defaults, then a report's embedded settings, then the manifest, then flags.
pub fn resolve_settings(
    args: &EvalArgs,
    manifest: &store::ManifestSettings,
) -> std::result::Result<EvalSettings, Failure> {
    let mut s = match &args.settings_from {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(input)?;
            trajectory::parse_report(&text).map_err(input)?.settings
        }
        None => EvalSettings::default(),
    };
    if args.settings_from.is_none() && manifest.seed.is_none() {
        if let Some(seed) = env_seed()? {
            s.seed = seed;
        }
    }
    s.apply_manifest(manifest).map_err(input)?;
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(k1) = args.k1 {
        s = s.with_k1(k1);
    }
    if let Some(r) = args.reducer {
        s.reducer.method = match r {
            ReducerArg::Pca => ReducerMethod::Pca,
            ReducerArg::UmapLite => ReducerMethod::NeighborGraph,
        };
    }
    if let Some(k) = args.neighbors {
        s.reducer.n_neighbors = k;
    }
    if args.pretrained {
        s.sigma_factor = HistogramSpec::PRETRAINED_FACTOR;
    }
    if let Some(f) = args.sigma_factor {
        s.sigma_factor = f;
    }
    if let Some(r) = args.reference {
        s.reference = r.into();
    }
    if let Some(d) = args.distance {
        s.kmeans.distance = d.into();
    }
    s.validate().map_err(input)?;
    Ok(s)
}

fn settings_line(s: &EvalSettings) -> String {
    serde_json::to_string(s).expect("settings serialize")
}

fn write_reports(report: &Report, dir: &Path, format: Format) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    if matches!(format, Format::Text | Format::Both) {
        let p = dir.join(REPORT_JSON);
        fs::write(&p, trajectory::emit_report(report, ReportFormat::Json)?)
            .with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    if matches!(format, Format::Csv | Format::Both) {
        let p = dir.join(REPORT_CSV);
        fs::write(&p, trajectory::emit_report(report, ReportFormat::Csv)?)
            .with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    Ok(written)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Human-readable summary of a report.
pub fn summarize(report: &Report) -> String {
    let mut s = String::new();
    let run = RunSeries::from_records(&report.milestones);
    let _ = write!(s, "{:<12} {:>6}", "milestone", "epoch");
    for series in &run.series {
        let _ = write!(s, " {:>20}", series.metric.as_str());
    }
    s.push('\n');
    for (i, m) in report.milestones.iter().enumerate() {
        let _ = write!(s, "{:<12} {:>6}", m.id, m.epoch);
        if let Some(err) = &m.error {
            let _ = writeln!(s, " FAILED: {err}");
            continue;
        }
        for series in &run.series {
            let _ = write!(s, " {:>20}", fmt_opt(series.values[i]));
        }
        s.push('\n');
    }
    match (&report.reference, &report.correlations) {
        (Some(reference), Some(corr)) => {
            let _ = writeln!(s, "\ncorrelation with {reference} (alpha = {})", trajectory::SIGNIFICANCE_LEVEL);
            let _ = writeln!(
                s,
                "{:<20} {:>9} {:>10} {:>9} {:>10}  trend",
                "metric", "r w/init", "p w/init", "r w/o", "p w/o"
            );
            for c in corr {
                let trend = match c.with_init.significance {
                    Significance::Positive => "positive",
                    Significance::Negative => "negative",
                    Significance::NotSignificant => "n.s.",
                    Significance::Undefined => "undefined",
                };
                let _ = writeln!(
                    s,
                    "{:<20} {:>9} {:>10} {:>9} {:>10}  {trend}",
                    c.metric.as_str(),
                    fmt_opt(c.with_init.r),
                    c.with_init.p.map_or("-".into(), |p| format!("{p:.3e}")),
                    fmt_opt(c.without_init.r),
                    c.without_init.p.map_or("-".into(), |p| format!("{p:.3e}")),
                );
            }
        }
        _ => s.push_str("\nno reference series; correlation skipped\n"),
    }
    s
}

pub fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let manifest = store::load_manifest(&args.manifest).map_err(input)?;
    let settings = resolve_settings(args, &manifest.settings)?;
    println!("run {}: {} milestones", manifest.run_id, manifest.milestones.len());
    println!("settings {}", settings_line(&settings));
    println!("seed {}", settings.seed);

    let records: Vec<MilestoneRecord> =
        par::with_jobs(args.jobs, || trajectory::evaluate_descriptors(&manifest.milestones, &settings));
    let mut code = EXIT_OK;
    let report = match Report::build(&manifest.run_id, &settings, records.clone()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            code = EXIT_EVAL_FAILURE;
            Report::series_only(&manifest.run_id, &settings, records)
        }
    };
    for m in report.milestones.iter().filter(|m| m.failed()) {
        eprintln!("error: {}", m.error.as_deref().unwrap_or_default());
        code = EXIT_EVAL_FAILURE;
    }
    let out = match &args.out {
        Some(o) => o.clone(),
        None => args.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let written = write_reports(&report, &out, args.format).map_err(eval_failure)?;
    print!("\n{}", summarize(&report));
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(code)
}

pub fn cmd_report(args: &ReportArgs) -> CmdResult {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))
        .map_err(input)?;
    let mut report = trajectory::parse_report(&text).map_err(input)?;
    if let Some(r) = args.reference {
        report.settings.reference = r.into();
        let settings = report.settings.clone();
        report = Report::build(&report.run_id, &settings, report.milestones).map_err(eval_failure)?;
    }
    println!("settings {}", settings_line(&report.settings));
    print!("{}", summarize(&report));
    if let Some(out) = &args.out {
        for p in write_reports(&report, out, args.format).map_err(eval_failure)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(if report.any_failed() { EXIT_EVAL_FAILURE } else { EXIT_OK })
}

pub fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let mut outlier_rate = Vec::new();
    if !args.outlier_milestones.is_empty() {
        outlier_rate = vec![0.0; args.milestones];
        for &m in &args.outlier_milestones {
            let slot = outlier_rate
                .get_mut(m)
                .ok_or_else(|| input(anyhow!("outlier milestone {m} out of range (have {})", args.milestones)))?;
            *slot = args.outlier_count as f64 / args.samples as f64;
        }
    }
    let cfg = SynthConfig {
        n_samples: args.samples,
        dim: args.dim,
        n_classes: args.classes,
        n_milestones: args.milestones,
        within_sigma_start: args.sigma_start,
        within_sigma_end: args.sigma_end,
        outlier_rate,
        outlier_radius_factor: args.outlier_factor,
        seed,
        ..SynthConfig::default()
    };
    cfg.validate().map_err(input)?;
    println!("synth {}", serde_json::to_string(&cfg).expect("config serialize"));
    let milestones = par::with_jobs(args.jobs, || synth::generate_trajectory(&cfg)).map_err(input)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(input)?;
    let mut entries = Vec::new();
    for m in &milestones {
        let emb = PathBuf::from(format!("{}.emb", m.id));
        store::save_embeddings(&m.embeddings, args.out.join(&emb)).map_err(input)?;
        let labels = match (&m.ground_truth, args.no_labels) {
            (Some(gt), false) => {
                let p = PathBuf::from(format!("{}.labels", m.id));
                store::save_partition(gt, args.out.join(&p)).map_err(input)?;
                Some(p)
            }
            _ => None,
        };
        entries.push(MilestoneEntry {
            id: m.id.clone(),
            epoch: m.epoch,
            embeddings: emb,
            labels,
            reference_value: if args.no_reference { None } else { m.reference_value },
        });
    }
    let doc = ManifestDoc {
        run_id: format!("synth-{seed}"),
        settings: None,
        milestones: entries,
    };
    let path = args.out.join(MANIFEST_FILE);
    store::write_manifest(&doc, &path).map_err(input)?;
    println!("wrote {} with {} milestones", path.display(), milestones.len());
    Ok(EXIT_OK)
}

pub fn cmd_probe(args: &ProbeArgs) -> CmdResult {
    let e = store::load_embeddings(&args.embeddings).map_err(input)?;
    let gt = store::load_partition(&args.labels, e.n()).map_err(input)?;
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let base = ProbeConfig {
        knn_k: args.knn_k,
        train_fraction: args.train_fraction,
        seed,
        ..ProbeConfig::default()
    };
    println!("probe n={} d={} classes={} seed={seed}", e.n(), e.d(), gt.k());
    par::with_jobs(args.jobs, || {
        if matches!(args.kind, ProbeKindArg::Knn | ProbeKindArg::Both) {
            let acc = probes::knn_probe(&e, &gt, &ProbeConfig { kind: ProbeKind::Knn, ..base })?;
            println!("knn_probe {acc}");
        }
        if matches!(args.kind, ProbeKindArg::Linear | ProbeKindArg::Both) {
            let acc = probes::linear_probe(&e, &gt, &ProbeConfig { kind: ProbeKind::Linear, ..base })?;
            println!("linear_probe {acc}");
        }
        Ok::<_, Error>(())
    })
    .map_err(eval_failure)?;
    Ok(EXIT_OK)
}

pub fn cmd_validate(args: &ValidateArgs) -> CmdResult {
    let manifest = match store::load_manifest(&args.manifest) {
        Ok(m) => m,
        Err(e) => {
            println!("error manifest: {e}");
            return Ok(EXIT_EVAL_FAILURE);
        }
    };
    let mut valid = true;
    let mut dims = None;
    for desc in &manifest.milestones {
        match desc.load() {
            Err(e) => {
                valid = false;
                println!("error {}: {e}", desc.id);
            }
            Ok(m) => {
                let zero = m.embeddings.zero_norm_rows(1e-12);
                if !zero.is_empty() && Distance::from(args.distance) == Distance::Cosine {
                    println!(
                        "warning {}: {} zero-norm row(s) (first: row {}); cosine clustering will reject them",
                        desc.id,
                        zero.len(),
                        zero[0]
                    );
                }
                if *dims.get_or_insert(m.embeddings.d()) != m.embeddings.d() {
                    println!("warning {}: dimension {} differs from earlier milestones", desc.id, m.embeddings.d());
                }
                println!("ok {} (n={}, d={})", desc.id, m.embeddings.n(), m.embeddings.d());
            }
        }
    }
    Ok(if valid { EXIT_OK } else { EXIT_EVAL_FAILURE })
}
