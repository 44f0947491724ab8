//! The `SPD1` artifact container.
//!
//! Layout (all integers and reals little-endian):
//!
//! ```text
//! "SPD1" | u8 family | u8 payload kind | payload | meta
//!
//! dense        u64 rows, u64 cols, rows*cols f64 (row-major)
//! sparse       u64 dim, u64 nnz, nnz * (u32 i, u32 j, f64 value), i <= j
//! leaf counts  u64 leaves, u64 samples, leaves * u64 count
//! prob+matrix  u64 rows, u64 cols, rows f64 probs, rows*cols f64 values
//! eigenvalues  u64 len, len f64
//! meta         u32 entries, entries * (u32 len, key bytes, u32 len, value bytes)
//! ```
//!
//! Readers validate everything before returning; a malformed file never
//! produces a partial bundle.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SPD1";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing or unreadable path {path}: {source}")]
    BadPath { path: String, source: io::Error },
    #[error("bad magic bytes, expected \"SPD1\"")]
    BadMagic,
    #[error("payload truncated at byte {offset}")]
    TruncatedPayload { offset: usize },
    #[error("non-finite value in {context}")]
    NonFiniteValue { context: &'static str },
    #[error("family {family:?} cannot carry a {payload} payload")]
    FamilyPayloadMismatch { family: Family, payload: &'static str },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("invalid bundle: {0}")]
    Validation(String),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

impl IngestError {
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::BadPath { .. } => "BadPath",
            IngestError::BadMagic => "BadMagic",
            IngestError::TruncatedPayload { .. } => "TruncatedPayload",
            IngestError::NonFiniteValue { .. } => "NonFiniteValue",
            IngestError::FamilyPayloadMismatch { .. } => "FamilyPayloadMismatch",
            IngestError::Malformed(_) => "Malformed",
            IngestError::Validation(_) => "ValidationError",
            IngestError::Csv { .. } => "CsvError",
            IngestError::Io(_) => "IoFailure",
        }
    }
}

/// Model family an artifact was exported from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    NeuralWeights,
    OofIncrements,
    OobIncrements,
    LogisticHessianInputs,
    LeafHistogram,
    KnnGraph,
    SvmKernel,
    RawEigenvalues,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::NeuralWeights,
        Family::OofIncrements,
        Family::OobIncrements,
        Family::LogisticHessianInputs,
        Family::LeafHistogram,
        Family::KnnGraph,
        Family::SvmKernel,
        Family::RawEigenvalues,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Family::NeuralWeights => 0,
            Family::OofIncrements => 1,
            Family::OobIncrements => 2,
            Family::LogisticHessianInputs => 3,
            Family::LeafHistogram => 4,
            Family::KnnGraph => 5,
            Family::SvmKernel => 6,
            Family::RawEigenvalues => 7,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Family> {
        Family::ALL.get(tag as usize).copied()
    }

    /// Short CLI name (`knn`, `dt`, `oof`, ...).
    pub fn cli_name(self) -> &'static str {
        match self {
            Family::NeuralWeights => "weights",
            Family::OofIncrements => "oof",
            Family::OobIncrements => "oob",
            Family::LogisticHessianInputs => "lr",
            Family::LeafHistogram => "dt",
            Family::KnnGraph => "knn",
            Family::SvmKernel => "svm",
            Family::RawEigenvalues => "eigs",
        }
    }

    pub fn parse(name: &str) -> Option<Family> {
        let lower = name.to_ascii_lowercase();
        let canonical = match lower.as_str() {
            "nn" | "neural" | "bert" | "albert" | "qwen" => "weights",
            "xgb" | "xgboost" => "oof",
            "rf" | "forest" => "oob",
            "logistic" => "lr",
            "tree" | "leaf" => "dt",
            "kernel" => "svm",
            "raw" | "eigenvalues" => "eigs",
            other => other,
        };
        Family::ALL
            .into_iter()
            .find(|f| f.cli_name() == canonical || format!("{f:?}").eq_ignore_ascii_case(name))
    }

    fn expected_payload(self) -> PayloadKind {
        match self {
            Family::NeuralWeights | Family::OofIncrements | Family::OobIncrements | Family::SvmKernel => {
                PayloadKind::Dense
            }
            Family::LogisticHessianInputs => PayloadKind::ProbMatrix,
            Family::LeafHistogram => PayloadKind::Leaves,
            Family::KnnGraph => PayloadKind::Sparse,
            Family::RawEigenvalues => PayloadKind::Eigs,
        }
    }
}

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, IngestError> {
        let m = DenseMatrix { rows, cols, values };
        m.validate()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, IngestError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(IngestError::Validation("ragged rows".into()));
        }
        DenseMatrix::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.rows.checked_mul(self.cols) != Some(self.values.len()) {
            return Err(IngestError::Validation(format!(
                "dense matrix {}x{} carries {} values",
                self.rows,
                self.cols,
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteValue { context: "dense matrix" });
        }
        Ok(())
    }
}

/// Upper-triangular coordinate list of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    pub dim: usize,
    pub entries: Vec<(u32, u32, f64)>,
}

impl SparseSymmetric {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.dim as u64 > u32::MAX as u64 + 1 {
            return Err(IngestError::Validation("sparse dimension exceeds u32 index range".into()));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for &(i, j, v) in &self.entries {
            if i > j {
                return Err(IngestError::Validation(format!("entry ({i},{j}) is below the diagonal")));
            }
            if j as usize >= self.dim {
                return Err(IngestError::Validation(format!("entry ({i},{j}) outside dim {}", self.dim)));
            }
            if !v.is_finite() {
                return Err(IngestError::NonFiniteValue { context: "sparse entries" });
            }
            if !seen.insert((i, j)) {
                return Err(IngestError::Validation(format!("duplicate entry ({i},{j})")));
            }
        }
        Ok(())
    }
}

/// Samples routed to each leaf of a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafCounts {
    pub counts: Vec<u64>,
    pub n_samples: u64,
}

impl LeafCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self, IngestError> {
        let n_samples = counts.iter().sum();
        let lc = LeafCounts { counts, n_samples };
        lc.validate()?;
        Ok(lc)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.counts.is_empty() {
            return Err(IngestError::Validation("leaf histogram is empty".into()));
        }
        if self.counts.contains(&0) {
            return Err(IngestError::Validation("leaf count of zero".into()));
        }
        let total = self
            .counts
            .iter()
            .try_fold(0u64, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| IngestError::Validation("leaf counts overflow".into()))?;
        if total != self.n_samples {
            return Err(IngestError::Validation(format!(
                "leaf counts sum to {total}, declared {} samples",
                self.n_samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PayloadKind {
    Dense = 0,
    Sparse = 1,
    Leaves = 2,
    ProbMatrix = 3,
    Eigs = 4,
}

impl PayloadKind {
    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => PayloadKind::Dense,
            1 => PayloadKind::Sparse,
            2 => PayloadKind::Leaves,
            3 => PayloadKind::ProbMatrix,
            4 => PayloadKind::Eigs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            PayloadKind::Dense => "dense",
            PayloadKind::Sparse => "sparse",
            PayloadKind::Leaves => "leaf-count",
            PayloadKind::ProbMatrix => "probability+matrix",
            PayloadKind::Eigs => "eigenvalue",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(DenseMatrix),
    Sparse(SparseSymmetric),
    Leaves(LeafCounts),
    /// Predicted probabilities `p` (one per row) and feature matrix `x`.
    ProbMatrix { probs: Vec<f64>, x: DenseMatrix },
    Eigs(Vec<f64>),
}

impl Payload {
    fn kind(&self) -> PayloadKind {
        match self {
            Payload::Dense(_) => PayloadKind::Dense,
            Payload::Sparse(_) => PayloadKind::Sparse,
            Payload::Leaves(_) => PayloadKind::Leaves,
            Payload::ProbMatrix { .. } => PayloadKind::ProbMatrix,
            Payload::Eigs(_) => PayloadKind::Eigs,
        }
    }
}

/// An ingested model export. Immutable once validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactBundle {
    pub family: Family,
    pub payload: Payload,
    pub meta: BTreeMap<String, String>,
}

impl ArtifactBundle {
    pub fn new(family: Family, payload: Payload) -> Result<Self, IngestError> {
        let b = ArtifactBundle { family, payload, meta: BTreeMap::new() };
        b.validate()?;
        Ok(b)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let kind = self.payload.kind();
        if kind != self.family.expected_payload() {
            return Err(IngestError::FamilyPayloadMismatch { family: self.family, payload: kind.name() });
        }
        match &self.payload {
            Payload::Dense(m) => m.validate(),
            Payload::Sparse(s) => s.validate(),
            Payload::Leaves(l) => l.validate(),
            Payload::ProbMatrix { probs, x } => {
                x.validate()?;
                if probs.iter().any(|p| !p.is_finite()) {
                    return Err(IngestError::NonFiniteValue { context: "probability vector" });
                }
                if probs.len() != x.rows {
                    return Err(IngestError::Validation(format!(
                        "{} probabilities for {} rows",
                        probs.len(),
                        x.rows
                    )));
                }
                Ok(())
            }
            Payload::Eigs(e) => {
                if e.iter().any(|v| !v.is_finite()) {
                    return Err(IngestError::NonFiniteValue { context: "eigenvalue list" });
                }
                if e.is_empty() {
                    return Err(IngestError::Validation("empty eigenvalue list".into()));
                }
                Ok(())
            }
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    out.reserve(vs.len() * 8);
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a validated bundle to bytes.
pub fn encode_bundle(bundle: &ArtifactBundle) -> Result<Vec<u8>, IngestError> {
    bundle.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(bundle.family.tag());
    out.push(bundle.payload.kind() as u8);
    match &bundle.payload {
        Payload::Dense(m) => {
            put_u64(&mut out, m.rows as u64);
            put_u64(&mut out, m.cols as u64);
            put_f64s(&mut out, &m.values);
        }
        Payload::Sparse(s) => {
            put_u64(&mut out, s.dim as u64);
            put_u64(&mut out, s.entries.len() as u64);
            for &(i, j, v) in &s.entries {
                put_u32(&mut out, i);
                put_u32(&mut out, j);
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Payload::Leaves(l) => {
            put_u64(&mut out, l.counts.len() as u64);
            put_u64(&mut out, l.n_samples);
            for &c in &l.counts {
                put_u64(&mut out, c);
            }
        }
        Payload::ProbMatrix { probs, x } => {
            put_u64(&mut out, x.rows as u64);
            put_u64(&mut out, x.cols as u64);
            put_f64s(&mut out, probs);
            put_f64s(&mut out, &x.values);
        }
        Payload::Eigs(e) => {
            put_u64(&mut out, e.len() as u64);
            put_f64s(&mut out, e);
        }
    }
    let n_meta = u32::try_from(bundle.meta.len()).map_err(|_| IngestError::Validation("too many meta entries".into()))?;
    put_u32(&mut out, n_meta);
    for (k, v) in &bundle.meta {
        for s in [k, v] {
            let len = u32::try_from(s.len()).map_err(|_| IngestError::Validation("meta string too long".into()))?;
            put_u32(&mut out, len);
            out.extend_from_slice(s.as_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(IngestError::TruncatedPayload { offset: self.buf.len() }),
        }
    }

    fn u8(&mut self) -> Result<u8, IngestError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IngestError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IngestError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, unit: usize) -> Result<usize, IngestError> {
        let n = self.u64()?;
        self.check_room(n, unit)
    }

    /// Reject counts whose payload could not fit in the remaining bytes.
    fn check_room(&self, n: u64, unit: usize) -> Result<usize, IngestError> {
        let remaining = (self.buf.len() - self.pos) as u64;
        match n.checked_mul(unit as u64) {
            Some(bytes) if bytes <= remaining => Ok(n as usize),
            _ => Err(IngestError::TruncatedPayload { offset: self.buf.len() }),
        }
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, IngestError> {
        let raw = self.take(n.checked_mul(8).ok_or(IngestError::TruncatedPayload { offset: self.pos })?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn string(&mut self) -> Result<String, IngestError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| IngestError::Malformed("meta string is not UTF-8".into()))
    }
}

/// Parse and validate bytes produced by [`encode_bundle`].
pub fn decode_bundle(buf: &[u8]) -> Result<ArtifactBundle, IngestError> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(IngestError::BadMagic);
    }
    let mut r = Reader { buf, pos: 4 };
    let family_tag = r.u8()?;
    let family = Family::from_tag(family_tag).ok_or_else(|| IngestError::Malformed(format!("unknown family tag {family_tag}")))?;
    let kind_tag = r.u8()?;
    let kind = PayloadKind::from_tag(kind_tag).ok_or_else(|| IngestError::Malformed(format!("unknown payload tag {kind_tag}")))?;
    let payload = match kind {
        PayloadKind::Dense => {
            let rows = r.u64()?;
            let cols = r.u64()?;
            let n = r.check_room(rows.checked_mul(cols).ok_or(IngestError::TruncatedPayload { offset: r.pos })?, 8)?;
            let values = r.f64s(n)?;
            Payload::Dense(DenseMatrix { rows: rows as usize, cols: cols as usize, values })
        }
        PayloadKind::Sparse => {
            let dim = r.u64()?;
            let nnz = r.len(16)?;
            let mut entries = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                entries.push((r.u32()?, r.u32()?, r.f64()?));
            }
            let dim = usize::try_from(dim).map_err(|_| IngestError::Malformed("sparse dim overflow".into()))?;
            Payload::Sparse(SparseSymmetric { dim, entries })
        }
        PayloadKind::Leaves => {
            let leaves = r.u64()?;
            let n_samples = r.u64()?;
            let leaves = r.check_room(leaves, 8)?;
            let counts = (0..leaves).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            Payload::Leaves(LeafCounts { counts, n_samples })
        }
        PayloadKind::ProbMatrix => {
            let rows = r.u64()?;
            let cols = r.u64()?;
            let rows_n = r.check_room(rows, 8)?;
            let probs = r.f64s(rows_n)?;
            let n = r.check_room(rows.checked_mul(cols).ok_or(IngestError::TruncatedPayload { offset: r.pos })?, 8)?;
            let values = r.f64s(n)?;
            Payload::ProbMatrix { probs, x: DenseMatrix { rows: rows as usize, cols: cols as usize, values } }
        }
        PayloadKind::Eigs => {
            let n = r.len(8)?;
            Payload::Eigs(r.f64s(n)?)
        }
    };
    let n_meta = r.u32()?;
    let mut meta = BTreeMap::new();
    for _ in 0..n_meta {
        let k = r.string()?;
        let v = r.string()?;
        if meta.insert(k.clone(), v).is_some() {
            return Err(IngestError::Malformed(format!("duplicate meta key {k:?}")));
        }
    }
    if r.pos != buf.len() {
        return Err(IngestError::Malformed(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let bundle = ArtifactBundle { family, payload, meta };
    bundle.validate()?;
    Ok(bundle)
}

fn read_path(path: &Path) -> Result<Vec<u8>, IngestError> {
    fs::read(path).map_err(|source| IngestError::BadPath { path: path.display().to_string(), source })
}

/// Read an `SPD1` file.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<ArtifactBundle, IngestError> {
    decode_bundle(&read_path(path.as_ref())?)
}

pub fn write_bundle(bundle: &ArtifactBundle, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let bytes = encode_bundle(bundle)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Parse a one-value-per-line eigenvalue list. Blank lines and `#` comments are skipped.
pub fn parse_eigs_csv(text: &str) -> Result<Vec<f64>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let field = t.trim_end_matches(',').trim();
        let v: f64 = field
            .parse()
            .map_err(|_| IngestError::Csv { line: idx + 1, msg: format!("not a number: {field:?}") })?;
        if !v.is_finite() {
            return Err(IngestError::NonFiniteValue { context: "eigenvalue list" });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(IngestError::Validation("empty eigenvalue list".into()));
    }
    Ok(out)
}

pub fn read_eigs_csv(path: impl AsRef<Path>) -> Result<ArtifactBundle, IngestError> {
    let raw = read_path(path.as_ref())?;
    let text = String::from_utf8(raw).map_err(|_| IngestError::Csv { line: 0, msg: "not UTF-8".into() })?;
    ArtifactBundle::new(Family::RawEigenvalues, Payload::Eigs(parse_eigs_csv(&text)?))
}

/// Read either an `SPD1` container or, failing the magic check, a CSV eigenvalue list.
pub fn read_any(path: impl AsRef<Path>) -> Result<ArtifactBundle, IngestError> {
    let path = path.as_ref();
    let raw = read_path(path)?;
    if raw.starts_with(MAGIC) {
        return decode_bundle(&raw);
    }
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("txt"));
    if !is_csv {
        return Err(IngestError::BadMagic);
    }
    let text = String::from_utf8(raw).map_err(|_| IngestError::Csv { line: 0, msg: "not UTF-8".into() })?;
    ArtifactBundle::new(Family::RawEigenvalues, Payload::Eigs(parse_eigs_csv(&text)?))
}

/// Drop rows that are bit-identical to an earlier row. Survivors keep their order.
pub fn deduplicate_rows(m: &DenseMatrix) -> (DenseMatrix, usize) {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(m.rows);
    let mut values = Vec::with_capacity(m.values.len());
    let mut kept = 0;
    for i in 0..m.rows {
        let row = m.row(i);
        if seen.insert(row.iter().map(|v| v.to_bits()).collect()) {
            values.extend_from_slice(row);
            kept += 1;
        }
    }
    (DenseMatrix { rows: kept, cols: m.cols, values }, m.rows - kept)
}
