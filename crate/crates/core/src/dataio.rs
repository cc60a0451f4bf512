//! On-disk formats and the in-memory feature matrix.
//!
//! FMAT layout (all integers and floats little-endian):
//!
//! ```text
//! offset 0   "FMAT"            magic
//! offset 4   u32               version (= 1)
//! offset 8   u64               n (rows)
//! offset 16  u64               d (cols)
//! offset 24  n·d × f32         row-major values
//! ...        u64               id-block length in bytes
//! ...        UTF-8             ids joined by '\n'
//! ```
//!
//! Manifests, label maps and labeled-dataset exports are JSON documents.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusResult, SampleStatus};

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
pub const FMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 24;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic at byte {offset}: expected \"FMAT\", found {found:?}")]
    BadMagic { offset: u64, found: Vec<u8> },
    #[error("unsupported FMAT version {found} at byte {offset} (expected {FMAT_VERSION})")]
    VersionMismatch { offset: u64, found: u32 },
    #[error("truncated file at byte {offset}: needed {needed} more bytes, {available} available")]
    TruncatedFile { offset: u64, needed: u64, available: u64 },
    #[error("non-finite value at byte {offset} (row {row}, col {col})")]
    NonFiniteValue { offset: u64, row: usize, col: usize },
    #[error("invalid id block at byte {offset}: {reason}")]
    InvalidIds { offset: u64, reason: String },
    #[error("{count} trailing bytes after id block at byte {offset}")]
    TrailingData { offset: u64, count: u64 },
    #[error("invalid matrix shape: {0}")]
    Shape(String),
    #[error("invalid sample id: {0}")]
    InvalidId(String),
    #[error("ids do not match: {0}")]
    IdMismatch(String),
    #[error("no label for cluster {0}")]
    MissingLabel(usize),
    #[error("empty label for cluster {0}")]
    EmptyLabel(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Identity of one sample, usually the path of its source image.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(String);

impl SampleId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(DataError::InvalidId("empty id".into()));
        }
        if id.contains('\n') {
            return Err(DataError::InvalidId(format!("{id:?} contains a newline")));
        }
        Ok(SampleId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sequential ids `s00000`, `s00001`, ... for matrices without a source.
pub fn generated_ids(n: usize) -> Vec<SampleId> {
    (0..n).map(|i| SampleId(format!("s{i:05}"))).collect()
}

/// An unvalidated FMAT payload. Used directly for auxiliary matrices (PCA
/// components, eigenvalues) that need not satisfy dataset invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct FmatBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub ids: Vec<String>,
}

impl FmatBlock {
    pub fn encode(&self) -> Vec<u8> {
        let id_block = self.ids.join("\n");
        let mut out = Vec::with_capacity(HEADER_LEN as usize + self.data.len() * 4 + 8 + id_block.len());
        out.extend_from_slice(FMAT_MAGIC);
        out.extend_from_slice(&FMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(id_block.len() as u64).to_le_bytes());
        out.extend_from_slice(id_block.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != FMAT_MAGIC {
            return Err(DataError::BadMagic { offset: 0, found: magic.to_vec() });
        }
        let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
        if version != FMAT_VERSION {
            return Err(DataError::VersionMismatch { offset: 4, found: version });
        }
        let rows = cur.u64()?;
        let cols = cur.u64()?;
        let count = rows.checked_mul(cols).filter(|c| c.checked_mul(4).is_some());
        let Some(count) = count else {
            return Err(DataError::TruncatedFile { offset: HEADER_LEN, needed: u64::MAX, available: cur.remaining() });
        };
        let raw = cur.take(count * 4)?;
        let cols_usize = cols as usize;
        let mut data = Vec::with_capacity(count as usize);
        for (idx, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(DataError::NonFiniteValue {
                    offset: HEADER_LEN + 4 * idx as u64,
                    row: idx / cols_usize.max(1),
                    col: idx % cols_usize.max(1),
                });
            }
            data.push(v);
        }
        let id_len = cur.u64()?;
        let id_offset = cur.pos;
        let id_bytes = cur.take(id_len)?;
        if cur.remaining() > 0 {
            return Err(DataError::TrailingData { offset: cur.pos, count: cur.remaining() });
        }
        let text = std::str::from_utf8(id_bytes).map_err(|e| DataError::InvalidIds {
            offset: id_offset + e.valid_up_to() as u64,
            reason: "id block is not valid UTF-8".into(),
        })?;
        let ids: Vec<String> =
            if rows == 0 && text.is_empty() { Vec::new() } else { text.split('\n').map(str::to_owned).collect() };
        if ids.len() as u64 != rows {
            return Err(DataError::InvalidIds {
                offset: id_offset,
                reason: format!("{} ids for {rows} rows", ids.len()),
            });
        }
        Ok(FmatBlock { rows: rows as usize, cols: cols_usize, data, ids })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> u64 {
        self.bytes.len() as u64 - self.pos
    }

    fn take(&mut self, len: u64) -> Result<&'a [u8]> {
        if len > self.remaining() {
            return Err(DataError::TruncatedFile { offset: self.pos, needed: len, available: self.remaining() });
        }
        let start = self.pos as usize;
        self.pos += len;
        Ok(&self.bytes[start..start + len as usize])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// `n × d` row-major `f32` matrix with one [`SampleId`] per row.
///
/// Invariants (checked on construction): `n >= 2`, `d >= 1`, every value
/// finite, ids unique and one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    ids: Vec<SampleId>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, ids: Vec<SampleId>) -> Result<Self> {
        if rows < 2 {
            return Err(DataError::Shape(format!("need at least 2 rows, got {rows}")));
        }
        if cols < 1 {
            return Err(DataError::Shape("need at least 1 column".into()));
        }
        if data.len() != rows * cols {
            return Err(DataError::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        if ids.len() != rows {
            return Err(DataError::IdMismatch(format!("{} ids for {rows} rows", ids.len())));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteValue {
                offset: HEADER_LEN + 4 * idx as u64,
                row: idx / cols,
                col: idx % cols,
            });
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &ids {
            if !seen.insert(id) {
                return Err(DataError::InvalidId(format!("duplicate id {id}")));
            }
        }
        Ok(FeatureMatrix { rows, cols, data, ids })
    }

    /// Builds a matrix from `f64` rows, rounding each value to `f32`.
    pub fn from_rows(rows: &[Vec<f64>], ids: Vec<SampleId>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(DataError::Shape("ragged rows".into()));
        }
        let data = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), cols, data, ids)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_block(&self) -> FmatBlock {
        FmatBlock {
            rows: self.rows,
            cols: self.cols,
            data: self.data.clone(),
            ids: self.ids.iter().map(|id| id.0.clone()).collect(),
        }
    }

    pub fn from_block(block: FmatBlock) -> Result<Self> {
        let ids = block.ids.into_iter().map(SampleId::new).collect::<Result<Vec<_>>>()?;
        Self::new(block.rows, block.cols, block.data, ids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_block().encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_block(FmatBlock::decode(bytes)?)
    }
}

pub fn load_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    FeatureMatrix::from_bytes(&read_bytes(path.as_ref())?)
}

pub fn write_feature_matrix(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &matrix.to_bytes())
}

pub fn load_fmat_block(path: impl AsRef<Path>) -> Result<FmatBlock> {
    FmatBlock::decode(&read_bytes(path.as_ref())?)
}

pub fn write_fmat_block(block: &FmatBlock, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &block.encode())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: SampleId,
    pub source_path: String,
    pub thumbnail_path: Option<String>,
    pub true_label: Option<String>,
}

/// Per-sample sidecar: where each row came from and, in benchmark mode, its
/// true class.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleManifest {
    pub entries: Vec<ManifestEntry>,
}

impl SampleManifest {
    /// A manifest with only ids, as used when no source images are known.
    pub fn bare(ids: &[SampleId]) -> Self {
        let entries = ids
            .iter()
            .map(|id| ManifestEntry {
                id: id.clone(),
                source_path: id.as_str().to_owned(),
                thumbnail_path: None,
                true_label: None,
            })
            .collect();
        SampleManifest { entries }
    }

    /// Checks that the manifest lists exactly `ids`, in the same order.
    pub fn check_ids(&self, ids: &[SampleId]) -> Result<()> {
        if self.entries.len() != ids.len() {
            return Err(DataError::IdMismatch(format!(
                "manifest has {} entries, matrix has {} rows",
                self.entries.len(),
                ids.len()
            )));
        }
        for (i, (entry, id)) in self.entries.iter().zip(ids).enumerate() {
            if &entry.id != id {
                return Err(DataError::IdMismatch(format!("row {i}: manifest id {} but matrix id {id}", entry.id)));
            }
        }
        Ok(())
    }

    /// True labels in manifest order, or `None` if any entry lacks one.
    pub fn true_labels(&self) -> Option<Vec<String>> {
        self.entries.iter().map(|e| e.true_label.clone()).collect()
    }

    pub fn index(&self) -> HashMap<&SampleId, &ManifestEntry> {
        self.entries.iter().map(|e| (&e.id, e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "HUMAN")]
    Human,
    #[serde(rename = "MAJORITY_ORACLE")]
    MajorityOracle,
}

/// Cluster index → class label. Several clusters may share a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub provenance: Provenance,
    pub entries: BTreeMap<usize, String>,
}

impl LabelMap {
    pub fn new(provenance: Provenance) -> Self {
        LabelMap { provenance, entries: BTreeMap::new() }
    }

    pub fn get(&self, cluster: usize) -> Option<&str> {
        self.entries.get(&cluster).map(String::as_str)
    }

    /// Fails on the first nonempty cluster of `consensus` without a label.
    pub fn check_complete(&self, consensus: &ConsensusResult) -> Result<()> {
        for cluster in consensus.nonempty_clusters() {
            match self.entries.get(&cluster) {
                None => return Err(DataError::MissingLabel(cluster)),
                Some(l) if l.is_empty() => return Err(DataError::EmptyLabel(cluster)),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: SampleId,
    pub label: String,
}

/// Final export: every retained sample with its label, and the rejected ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub labeled: Vec<LabeledSample>,
    pub rejected: Vec<SampleId>,
}

impl LabeledDataset {
    pub fn build(manifest: &SampleManifest, consensus: &ConsensusResult, labels: &LabelMap) -> Result<Self> {
        manifest.check_ids(&consensus.ids)?;
        labels.check_complete(consensus)?;
        let mut labeled = Vec::new();
        let mut rejected = Vec::new();
        for (id, status) in consensus.ids.iter().zip(&consensus.per_sample) {
            match *status {
                SampleStatus::Retained(c) => {
                    let label = labels.get(c).ok_or(DataError::MissingLabel(c))?;
                    labeled.push(LabeledSample { id: id.clone(), label: label.to_owned() });
                }
                SampleStatus::Rejected => rejected.push(id.clone()),
            }
        }
        Ok(LabeledDataset { labeled, rejected })
    }
}

pub fn write_labeled_dataset(
    manifest: &SampleManifest,
    consensus: &ConsensusResult,
    labels: &LabelMap,
    path: impl AsRef<Path>,
) -> Result<usize> {
    let dataset = LabeledDataset::build(manifest, consensus, labels)?;
    write_json(path, &dataset)?;
    Ok(dataset.labeled.len())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| DataError::Io { path: path.to_owned(), source })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| DataError::Io { path: parent.to_owned(), source })?;
    }
    fs::write(path, bytes).map_err(|source| DataError::Io { path: path.to_owned(), source })
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("JSON serialization of owned data");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_bytes(path.as_ref(), &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| DataError::Json { path: path.to_owned(), source })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SampleManifest> {
    read_json(path)
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    read_json(path)
}

pub fn load_labeled_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_json(path)
}
