//! Embedding matrices, partitions, milestones and their file formats.
//!
//! Binary embedding layout (little-endian):
//!
//! ```text
//! b"EMBV1\n" | dtype: u8 (0 = f32, 1 = f64) | n: u32 | d: u32 | n*d values, row-major
//! ```
//!
//! The CSV alternative has no header and one row of `d` comma-separated
//! decimals per line. Partitions are UTF-8 text with one non-negative base-10
//! label per line.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"EMBV1\n";
const HEADER_LEN: usize = MAGIC.len() + 1 + 4 + 4;

/// Payload precision of the binary format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// An `n x d` matrix of finite embedding coordinates, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    values: Vec<f64>,
    n: usize,
    d: usize,
    pub milestone_id: String,
}

impl EmbeddingSet {
    pub fn new(values: Vec<f64>, n: usize, d: usize, milestone_id: impl Into<String>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!("n and d must be positive (got {n}x{d})")));
        }
        if values.len() != n * d {
            return Err(Error::LengthMismatch {
                expected: n * d,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self {
            values,
            n,
            d,
            milestone_id: milestone_id.into(),
        })
    }

    /// Builds a set from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>], milestone_id: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Shape(format!(
                "row {bad} has {} columns, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), rows.len(), d, milestone_id)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone {
        self.values.chunks_exact(self.d)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.milestone_id = id.into();
        self
    }

    /// Indices of rows whose Euclidean norm is at most `eps`.
    pub fn zero_norm_rows(&self, eps: f64) -> Vec<usize> {
        self.rows()
            .enumerate()
            .filter(|(_, r)| r.iter().map(|x| x * x).sum::<f64>().sqrt() <= eps)
            .map(|(i, _)| i)
            .collect()
    }

    /// Smallest precision that stores every value exactly.
    pub fn lossless_dtype(&self) -> Dtype {
        if self.values.iter().all(|&v| (v as f32) as f64 == v) {
            Dtype::F32
        } else {
            Dtype::F64
        }
    }
}

/// Assignment of `n` samples to labels in `[0, k)`. Labels need not all occur.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignments: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if let Some((i, &l)) = assignments.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::Shape(format!("label {l} at position {i} is not below k={k}")));
        }
        Ok(Self { assignments, k })
    }

    /// `k` is set to `max(label) + 1`.
    pub fn from_labels(assignments: Vec<usize>) -> Self {
        let k = assignments.iter().max().map_or(0, |m| m + 1);
        Self { assignments, k }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.assignments
    }

    pub fn label(&self, i: usize) -> usize {
        self.assignments[i]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.assignments {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn non_empty_clusters(&self) -> usize {
        self.cluster_sizes().iter().filter(|&&c| c > 0).count()
    }

    /// True when both partitions induce the same grouping of samples.
    pub fn same_grouping(&self, other: &Partition) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut fwd = vec![usize::MAX; self.k];
        let mut bwd = vec![usize::MAX; other.k];
        for (&a, &b) in self.assignments.iter().zip(&other.assignments) {
            if fwd[a] == usize::MAX && bwd[b] == usize::MAX {
                fwd[a] = b;
                bwd[b] = a;
            } else if fwd[a] != b || bwd[b] != a {
                return false;
            }
        }
        true
    }
}

/// A training checkpoint with its embedding dump.
#[derive(Debug, Clone)]
pub struct Milestone {
    pub id: String,
    pub epoch: u64,
    pub embeddings: EmbeddingSet,
    pub ground_truth: Option<Partition>,
    pub reference_value: Option<f64>,
}

impl Milestone {
    /// Epoch 0 marks the network initialization.
    pub fn is_init(&self) -> bool {
        self.epoch == 0
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes, id)
    } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::MalformedHeader("csv file is not valid UTF-8".into()))?;
        decode_csv(&text, id)
    } else {
        Err(Error::MalformedHeader(format!(
            "{} lacks the EMBV1 magic and is not a .csv file",
            path.display()
        )))
    }
}

pub fn decode_binary(bytes: &[u8], id: String) -> Result<EmbeddingSet> {
    if bytes.len() < HEADER_LEN || !bytes.starts_with(MAGIC) {
        return Err(Error::MalformedHeader(format!(
            "header needs {HEADER_LEN} bytes starting with EMBV1"
        )));
    }
    let dtype = match bytes[6] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        c => return Err(Error::MalformedHeader(format!("unknown dtype code {c}"))),
    };
    let n = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    if n == 0 || d == 0 {
        return Err(Error::MalformedHeader(format!("declared shape {n}x{d} is empty")));
    }
    let payload = &bytes[HEADER_LEN..];
    let width = dtype.width();
    let expected = n * d;
    if payload.len() != expected * width {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len() / width,
        });
    }
    let values = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    EmbeddingSet::new(values, n, d, id)
}

fn decode_csv(text: &str, id: String) -> Result<EmbeddingSet> {
    let mut values = Vec::new();
    let mut d = 0;
    let mut n = 0;
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let start = values.len();
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::MalformedHeader(format!("row {row}, column {col}: not a number: {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            values.push(v);
        }
        let width = values.len() - start;
        if n == 0 {
            d = width;
        } else if width != d {
            return Err(Error::Shape(format!("row {row} has {width} columns, expected {d}")));
        }
        n += 1;
    }
    EmbeddingSet::new(values, n, d, id)
}

/// Writes `e` in the binary format with the narrowest lossless precision, so
/// that loading the file reproduces `e` bit-exactly.
pub fn save_embeddings(e: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    save_embeddings_as(e, path, e.lossless_dtype())
}

pub fn save_embeddings_as(e: &EmbeddingSet, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_binary(e, dtype)?;
    fs::write(path, bytes).map_err(|err| Error::io(path, err))
}

pub fn encode_binary(e: &EmbeddingSet, dtype: Dtype) -> Result<Vec<u8>> {
    let n = u32::try_from(e.n()).map_err(|_| Error::Shape("n exceeds u32".into()))?;
    let d = u32::try_from(e.d()).map_err(|_| Error::Shape("d exceeds u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + e.values().len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.push(dtype.code());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for &v in e.values() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(out)
}

/// Loads a label file and checks it holds `n_expected` labels.
pub fn load_partition(path: impl AsRef<Path>, n_expected: usize) -> Result<Partition> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_partition(&text, n_expected)
}

pub fn parse_partition(text: &str, n_expected: usize) -> Result<Partition> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut labels = Vec::new();
    if !body.is_empty() {
        for (i, line) in body.split('\n').enumerate() {
            let line = line.trim_end_matches('\r').trim();
            let value: i64 = line.parse().map_err(|_| Error::PartitionParse {
                line: i + 1,
                message: format!("not an integer: {line:?}"),
            })?;
            if value < 0 {
                return Err(Error::PartitionParse {
                    line: i + 1,
                    message: format!("negative label {value}"),
                });
            }
            labels.push(value as usize);
        }
    }
    if labels.len() != n_expected {
        return Err(Error::LengthMismatch {
            expected: n_expected,
            found: labels.len(),
        });
    }
    Ok(Partition::from_labels(labels))
}

pub fn save_partition(p: &Partition, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::with_capacity(p.len() * 3);
    for l in p.labels() {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Manifest

/// On-disk manifest document (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<ManifestSettings>,
    pub milestones: Vec<MilestoneEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilestoneEntry {
    pub id: String,
    pub epoch: u64,
    pub embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_value: Option<f64>,
}

/// Optional evaluation settings carried by a manifest. Absent values fall
/// back to [`crate::trajectory::EvalSettings::default`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_sigma_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reducer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_neighbors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

/// A milestone descriptor with its paths resolved against the manifest
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct MilestoneDescriptor {
    pub id: String,
    pub epoch: u64,
    pub embeddings: PathBuf,
    pub labels: Option<PathBuf>,
    pub reference_value: Option<f64>,
}

impl MilestoneDescriptor {
    /// Reads the embedding (and label) files of this milestone.
    pub fn load(&self) -> Result<Milestone> {
        let embeddings = load_embeddings(&self.embeddings)
            .map_err(|e| e.in_milestone(&self.id))?
            .with_id(self.id.clone());
        let ground_truth = match &self.labels {
            Some(p) => Some(load_partition(p, embeddings.n()).map_err(|e| e.in_milestone(&self.id))?),
            None => None,
        };
        Ok(Milestone {
            id: self.id.clone(),
            epoch: self.epoch,
            embeddings,
            ground_truth,
            reference_value: self.reference_value,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub run_id: String,
    pub milestones: Vec<MilestoneDescriptor>,
    pub settings: ManifestSettings,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ManifestDoc = toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    resolve_manifest(doc, base)
}

pub fn resolve_manifest(doc: ManifestDoc, base: &Path) -> Result<RunManifest> {
    if doc.milestones.is_empty() {
        return Err(Error::Manifest("manifest lists no milestones".into()));
    }
    let mut seen = HashSet::new();
    let mut last_epoch = 0;
    let mut milestones = Vec::with_capacity(doc.milestones.len());
    for (i, m) in doc.milestones.into_iter().enumerate() {
        if !seen.insert(m.id.clone()) {
            return Err(Error::Manifest(format!("duplicate milestone id {:?}", m.id)));
        }
        if i > 0 && m.epoch < last_epoch {
            return Err(Error::Manifest(format!(
                "milestone {:?} has epoch {} after epoch {last_epoch}; epochs must be non-decreasing",
                m.id, m.epoch
            )));
        }
        last_epoch = m.epoch;
        let embeddings = resolve_path(base, &m.embeddings, &m.id)?;
        let labels = m
            .labels
            .as_deref()
            .map(|p| resolve_path(base, p, &m.id))
            .transpose()?;
        if let Some(r) = m.reference_value {
            if !r.is_finite() {
                return Err(Error::Manifest(format!("milestone {:?}: non-finite reference_value", m.id)));
            }
        }
        milestones.push(MilestoneDescriptor {
            id: m.id,
            epoch: m.epoch,
            embeddings,
            labels,
            reference_value: m.reference_value,
        });
    }
    Ok(RunManifest {
        run_id: doc.run_id,
        milestones,
        settings: doc.settings.unwrap_or_default(),
    })
}

fn resolve_path(base: &Path, p: &Path, id: &str) -> Result<PathBuf> {
    let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    if !full.is_file() {
        return Err(Error::Manifest(format!(
            "milestone {id:?}: cannot resolve {}",
            full.display()
        )));
    }
    Ok(full)
}

pub fn write_manifest(doc: &ManifestDoc, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = toml::to_string(doc).map_err(|e| Error::Manifest(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(values: Vec<f64>, n: usize, d: usize) -> EmbeddingSet {
        EmbeddingSet::new(values, n, d, "m").unwrap()
    }

    #[test]
    fn binary_round_trip_4x3() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.emb");
        let e = set((0..12).map(|i| i as f64 * 0.5).collect(), 4, 3);
        save_embeddings(&e, &p).unwrap();
        let back = load_embeddings(&p).unwrap();
        assert_eq!((back.n(), back.d()), (4, 3));
        assert_eq!(back.values(), e.values());
    }

    #[test]
    fn one_by_one_zero_is_header_plus_four_bytes() {
        let e = set(vec![0.0], 1, 1);
        let bytes = encode_binary(&e, e.lossless_dtype()).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 4);
        assert_eq!(&bytes[..6], MAGIC);
        assert_eq!(bytes[6], 0);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let e = set(vec![1.0; 12], 4, 3);
        let mut bytes = encode_binary(&e, Dtype::F32).unwrap();
        bytes.truncate(bytes.len() - 4);
        match decode_binary(&bytes, "x".into()) {
            Err(Error::TruncatedPayload { expected: 12, found: 11 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_position_is_reported() {
        let mut bytes = encode_binary(&set(vec![1.0; 12], 4, 3), Dtype::F64).unwrap();
        let off = HEADER_LEN + 7 * 8;
        bytes[off..off + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        match decode_binary(&bytes, "x".into()) {
            Err(Error::NonFinite { row: 2, col: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_dtype() {
        assert!(matches!(
            decode_binary(b"EMBV2\n\0\0\0\0\0\0\0\0\0", "x".into()),
            Err(Error::MalformedHeader(_))
        ));
        let mut bytes = encode_binary(&set(vec![1.0], 1, 1), Dtype::F32).unwrap();
        bytes[6] = 9;
        assert!(matches!(decode_binary(&bytes, "x".into()), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let e = set(vec![1.0], 1, 1);
        let r = save_embeddings(&e, "/nonexistent-dir/sub/a.emb");
        assert!(matches!(r, Err(Error::Io { .. })));
    }

    #[test]
    fn csv_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "1,2,3\n4,5,6\n").unwrap();
        let e = load_embeddings(&p).unwrap();
        assert_eq!((e.n(), e.d()), (2, 3));
        assert_eq!(e.row(1), &[4.0, 5.0, 6.0]);
        fs::write(&p, "1,2\n4,nan\n").unwrap();
        assert!(matches!(load_embeddings(&p), Err(Error::NonFinite { row: 1, col: 1 })));
    }

    #[test]
    fn partitions_parse() {
        let p = parse_partition("0\n1\n1\n0\n", 4).unwrap();
        assert_eq!(p.k(), 2);
        assert!(matches!(
            parse_partition("2\n0\n", 4),
            Err(Error::LengthMismatch { expected: 4, found: 2 })
        ));
        assert!(matches!(parse_partition("-1\n", 1), Err(Error::PartitionParse { line: 1, .. })));
        assert!(matches!(parse_partition("0\nx\n", 2), Err(Error::PartitionParse { line: 2, .. })));
    }

    #[test]
    fn partition_k_is_upper_bound() {
        let p = Partition::new(vec![0, 0, 1], 4).unwrap();
        assert_eq!(p.cluster_sizes(), vec![2, 1, 0, 0]);
        assert!(Partition::new(vec![0, 4], 4).is_err());
    }

    #[test]
    fn same_grouping_detects_relabeling() {
        let a = Partition::from_labels(vec![0, 0, 1, 2]);
        let b = Partition::from_labels(vec![2, 2, 0, 1]);
        let c = Partition::from_labels(vec![0, 1, 1, 2]);
        assert!(a.same_grouping(&b));
        assert!(!a.same_grouping(&c));
    }

    fn write_manifest_files(dir: &Path, epochs: &[(&str, u64)]) -> PathBuf {
        let e = set(vec![1.0, 2.0], 1, 2);
        let mut toml = String::from("run_id = \"r\"\n");
        for (id, epoch) in epochs {
            save_embeddings(&e, dir.join(format!("{id}.emb"))).unwrap();
            toml.push_str(&format!(
                "[[milestones]]\nid = \"{id}\"\nepoch = {epoch}\nembeddings = \"{id}.emb\"\n"
            ));
        }
        let p = dir.join("manifest.toml");
        fs::write(&p, toml).unwrap();
        p
    }

    #[test]
    fn manifest_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest_files(dir.path(), &[("a", 0), ("b", 20), ("c", 40)]);
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.milestones.len(), 3);
        assert_eq!(m.settings, ManifestSettings::default());

        let p = write_manifest_files(dir.path(), &[("a", 0), ("a", 20)]);
        assert!(matches!(load_manifest(&p), Err(Error::Manifest(m)) if m.contains("duplicate")));

        let p = write_manifest_files(dir.path(), &[("a", 0), ("b", 40), ("c", 20)]);
        assert!(matches!(load_manifest(&p), Err(Error::Manifest(m)) if m.contains("non-decreasing")));

        fs::write(
            dir.path().join("missing.toml"),
            "run_id = \"r\"\n[[milestones]]\nid = \"a\"\nepoch = 0\nembeddings = \"nope.emb\"\n",
        )
        .unwrap();
        assert!(matches!(
            load_manifest(dir.path().join("missing.toml")),
            Err(Error::Manifest(m)) if m.contains("cannot resolve")
        ));
    }
}
