//! Effective representation matrices, one builder per model family.
//!
//! | family                 | matrix                         | eigen-bearing size |
//! |------------------------|--------------------------------|--------------------|
//! | neural weights         | `WᵀW`                          | cols               |
//! | OOF / OOB increments   | `(HW)ᵀ(HW) / N`                | trees `T`          |
//! | logistic regression    | `XᵀDX / N`, `D = p(1-p)`       | features `d`       |
//! | decision tree          | leaf counts (spectrum of `MMᵀ`)| leaves `L`         |
//! | k-NN                   | `I - D^-1/2 A D^-1/2`          | samples `N`        |
//! | SVM                    | kernel on support vectors      | `N_sv`             |

use nalgebra::DMatrix;
use thiserror::Error;

use crate::ingest::{ArtifactBundle, DenseMatrix, Family, LeafCounts, Payload, SparseSymmetric};
use crate::linalg::{CsrSym, SymDense};

/// Relative tolerance for accepting an input kernel as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RepmatError {
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("degenerate shape {rows}x{cols}: need at least 2x2")]
    DegenerateShape { rows: usize, cols: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("probability {value} at row {row} outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, value: f64 },
    #[error("leaf histogram is empty")]
    EmptyHistogram,
    #[error("negative adjacency weight {value} at ({i},{j})")]
    NegativeWeight { i: u32, j: u32, value: f64 },
    #[error("non-zero diagonal adjacency entry at {i}")]
    NonZeroDiagonal { i: u32 },
    #[error("support-vector index {index} out of range for {dim} rows")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("support-vector index {index} repeated")]
    DuplicateIndex { index: usize },
    #[error("kernel is not symmetric (relative asymmetry {0:e})")]
    AsymmetricInput(f64),
    #[error("bad metadata {key}: {msg}")]
    BadMeta { key: &'static str, msg: String },
}

impl RepmatError {
    pub fn kind(&self) -> &'static str {
        match self {
            RepmatError::EmptyMatrix => "EmptyMatrix",
            RepmatError::DegenerateShape { .. } => "DegenerateShape",
            RepmatError::ShapeMismatch(_) => "ShapeMismatch",
            RepmatError::ProbabilityOutOfRange { .. } => "ProbabilityOutOfRange",
            RepmatError::EmptyHistogram => "EmptyHistogram",
            RepmatError::NegativeWeight { .. } => "NegativeWeight",
            RepmatError::NonZeroDiagonal { .. } => "NonZeroDiagonal",
            RepmatError::IndexOutOfRange { .. } => "IndexOutOfRange",
            RepmatError::DuplicateIndex { .. } => "DuplicateIndex",
            RepmatError::AsymmetricInput(_) => "AsymmetricInput",
            RepmatError::BadMeta { .. } => "BadMeta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepKind {
    DenseSym,
    SparseSym,
    DirectEigs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepBody {
    DenseSym(SymDense),
    SparseSym(CsrSym),
    /// Eigenvalues known in closed form; no matrix is materialized.
    DirectEigs(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepMatrix {
    pub family: Family,
    pub body: RepBody,
    /// N, T, L, d or N_sv depending on the family.
    pub n_effective: usize,
    /// Shape `(rows, cols)` of the rectangular factor behind the matrix; sets the MP aspect ratio.
    pub shape: (usize, usize),
    /// Exact zero-eigenvalue multiplicity when known structurally (graph components).
    pub null_dim: Option<usize>,
}

impl RepMatrix {
    pub fn kind(&self) -> RepKind {
        match self.body {
            RepBody::DenseSym(_) => RepKind::DenseSym,
            RepBody::SparseSym(_) => RepKind::SparseSym,
            RepBody::DirectEigs(_) => RepKind::DirectEigs,
        }
    }

    /// Dimension of the symmetric matrix (number of eigenvalues).
    pub fn dim(&self) -> usize {
        match &self.body {
            RepBody::DenseSym(m) => m.n,
            RepBody::SparseSym(m) => m.n,
            RepBody::DirectEigs(e) => e.len(),
        }
    }

    /// `q = min(rows, cols) / max(rows, cols)`.
    pub fn aspect_ratio(&self) -> f64 {
        aspect_ratio(self.shape.0, self.shape.1)
    }

    /// Multiply every matrix entry (and therefore every eigenvalue) by `c`.
    pub fn scaled(mut self, c: f64) -> Self {
        match &mut self.body {
            RepBody::DenseSym(m) => m.data.iter_mut().for_each(|v| *v *= c),
            RepBody::SparseSym(m) => m.vals.iter_mut().for_each(|v| *v *= c),
            RepBody::DirectEigs(e) => e.iter_mut().for_each(|v| *v *= c),
        }
        self
    }
}

pub fn aspect_ratio(rows: usize, cols: usize) -> f64 {
    let (lo, hi) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    if hi == 0 {
        1.0
    } else {
        lo as f64 / hi as f64
    }
}

fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows, m.cols, &m.values)
}

/// `BᵀB · scale` with the result mirrored so it is exactly symmetric.
fn gram(b: &DMatrix<f64>, scale: f64) -> SymDense {
    let g = b.tr_mul(b);
    let n = g.nrows();
    let mut out = SymDense::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = g[(i, j)] * scale;
            out.data[i * n + j] = v;
            out.data[j * n + i] = v;
        }
    }
    out
}

/// `C = WᵀW` for a weight matrix `W` (m×n).
pub fn weight_correlation(w: &DenseMatrix) -> Result<RepMatrix, RepmatError> {
    if w.rows == 0 || w.cols == 0 {
        return Err(RepmatError::EmptyMatrix);
    }
    let c = gram(&to_nalgebra(w), 1.0);
    Ok(RepMatrix {
        family: Family::NeuralWeights,
        n_effective: w.cols,
        body: RepBody::DenseSym(c),
        shape: (w.rows, w.cols),
        null_dim: None,
    })
}

/// Column-centre `w` (apply `H = I - 11ᵀ/N` on the left).
pub fn center_columns(w: &DenseMatrix) -> DenseMatrix {
    let mut out = w.clone();
    for j in 0..w.cols {
        let mean = (0..w.rows).map(|i| w.get(i, j)).sum::<f64>() / w.rows as f64;
        for i in 0..w.rows {
            out.set(i, j, w.get(i, j) - mean);
        }
    }
    out
}

/// `C = W₇ᵀW₇ / N` from an N×T out-of-fold (or out-of-bag) increment matrix.
/// With `residualize`, `W₇ = HW₁`; otherwise the raw `W₁` is used.
pub fn oof_correlation(w1: &DenseMatrix, residualize: bool) -> Result<RepMatrix, RepmatError> {
    if w1.rows < 2 || w1.cols < 2 {
        return Err(RepmatError::DegenerateShape { rows: w1.rows, cols: w1.cols });
    }
    let w7 = if residualize { center_columns(w1) } else { w1.clone() };
    let c = gram(&to_nalgebra(&w7), 1.0 / w1.rows as f64);
    Ok(RepMatrix {
        family: Family::OofIncrements,
        n_effective: w1.cols,
        body: RepBody::DenseSym(c),
        shape: (w1.rows, w1.cols),
        null_dim: None,
    })
}

/// Empirical Fisher matrix `XᵀDX / N` with `D_ii = p_i (1 - p_i)`.
pub fn logistic_hessian(x: &DenseMatrix, p: &[f64]) -> Result<RepMatrix, RepmatError> {
    if x.rows != p.len() {
        return Err(RepmatError::ShapeMismatch(format!("{} rows but {} probabilities", x.rows, p.len())));
    }
    if x.rows == 0 || x.cols == 0 {
        return Err(RepmatError::EmptyMatrix);
    }
    if let Some((row, &value)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(RepmatError::ProbabilityOutOfRange { row, value });
    }
    let mut b = to_nalgebra(x);
    for (i, &pi) in p.iter().enumerate() {
        let s = (pi * (1.0 - pi)).sqrt();
        b.row_mut(i).scale_mut(s);
    }
    let c = gram(&b, 1.0 / x.rows as f64);
    Ok(RepMatrix {
        family: Family::LogisticHessianInputs,
        n_effective: x.cols,
        body: RepBody::DenseSym(c),
        shape: (x.rows, x.cols),
        null_dim: None,
    })
}

/// Leaf capacities are exactly the non-zero eigenvalues of `MMᵀ`; no matrix is built.
pub fn leaf_spectrum(leaves: &LeafCounts) -> Result<RepMatrix, RepmatError> {
    if leaves.counts.is_empty() {
        return Err(RepmatError::EmptyHistogram);
    }
    Ok(RepMatrix {
        family: Family::LeafHistogram,
        n_effective: leaves.counts.len(),
        body: RepBody::DirectEigs(leaves.counts.iter().map(|&c| c as f64).collect()),
        shape: (leaves.n_samples as usize, leaves.counts.len()),
        null_dim: None,
    })
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Connected components of the positive-weight graph with at least two vertices.
/// Under the identity-row convention these are exactly the Laplacian's zero modes;
/// isolated vertices contribute eigenvalue 1 instead.
pub fn nontrivial_components(adj: &SparseSymmetric) -> usize {
    let mut uf = UnionFind::new(adj.dim);
    for &(i, j, v) in &adj.entries {
        if v > 0.0 && i != j {
            uf.union(i as usize, j as usize);
        }
    }
    (0..adj.dim).filter(|&v| uf.find(v) == v && uf.size[v] >= 2).count()
}

/// Normalized graph Laplacian `I - D^-1/2 A D^-1/2`. Vertices of degree zero get an identity row.
pub fn knn_laplacian(adj: &SparseSymmetric) -> Result<RepMatrix, RepmatError> {
    let n = adj.dim;
    let mut degree = vec![0.0f64; n];
    for &(i, j, v) in &adj.entries {
        if i == j {
            if v != 0.0 {
                return Err(RepmatError::NonZeroDiagonal { i });
            }
            continue;
        }
        if v < 0.0 {
            return Err(RepmatError::NegativeWeight { i, j, value: v });
        }
        degree[i as usize] += v;
        degree[j as usize] += v;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut entries: Vec<(u32, u32, f64)> = (0..n as u32).map(|i| (i, i, 1.0)).collect();
    for &(i, j, v) in &adj.entries {
        if i != j && v != 0.0 {
            entries.push((i, j, -v * inv_sqrt[i as usize] * inv_sqrt[j as usize]));
        }
    }
    Ok(RepMatrix {
        family: Family::KnnGraph,
        n_effective: n,
        body: RepBody::SparseSym(CsrSym::from_upper(n, &entries)),
        shape: (n, n),
        null_dim: Some(nontrivial_components(adj)),
    })
}

/// Principal submatrix of a precomputed kernel at the support-vector indices.
pub fn svm_kernel_submatrix(k_full: &DenseMatrix, sv_indices: &[usize]) -> Result<RepMatrix, RepmatError> {
    if k_full.rows == 0 {
        return Err(RepmatError::EmptyMatrix);
    }
    if k_full.rows != k_full.cols {
        return Err(RepmatError::ShapeMismatch(format!("kernel is {}x{}", k_full.rows, k_full.cols)));
    }
    let n = k_full.rows;
    let full = SymDense { n, data: k_full.values.clone() };
    let asym = full.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(RepmatError::AsymmetricInput(asym));
    }
    if sv_indices.is_empty() {
        return Err(RepmatError::EmptyMatrix);
    }
    let mut seen = vec![false; n];
    for &idx in sv_indices {
        if idx >= n {
            return Err(RepmatError::IndexOutOfRange { index: idx, dim: n });
        }
        if std::mem::replace(&mut seen[idx], true) {
            return Err(RepmatError::DuplicateIndex { index: idx });
        }
    }
    let m = sv_indices.len();
    let mut sub = SymDense::zeros(m);
    for (a, &i) in sv_indices.iter().enumerate() {
        for (b, &j) in sv_indices.iter().enumerate().skip(a) {
            // upper triangle of the source, mirrored
            let v = if i <= j { k_full.get(i, j) } else { k_full.get(j, i) };
            sub.data[a * m + b] = v;
            sub.data[b * m + a] = v;
        }
    }
    Ok(RepMatrix {
        family: Family::SvmKernel,
        n_effective: m,
        body: RepBody::DenseSym(sub),
        shape: (m, m),
        null_dim: None,
    })
}

fn meta_flag(bundle: &ArtifactBundle, key: &'static str, default: bool) -> Result<bool, RepmatError> {
    match bundle.meta.get(key).map(|s| s.trim().to_ascii_lowercase()) {
        None => Ok(default),
        Some(v) => match v.as_str() {
            "1" | "true" | "yes" => Ok(true),
            "0" | "false" | "no" => Ok(false),
            _ => Err(RepmatError::BadMeta { key, msg: format!("expected a boolean, got {v:?}") }),
        },
    }
}

fn meta_usize(bundle: &ArtifactBundle, key: &'static str) -> Result<Option<usize>, RepmatError> {
    bundle
        .meta
        .get(key)
        .map(|s| s.trim().parse().map_err(|_| RepmatError::BadMeta { key, msg: format!("not a count: {s:?}") }))
        .transpose()
}

/// Parse a comma/space separated index list (`sv_indices` metadata).
pub fn parse_index_list(s: &str) -> Result<Vec<usize>, RepmatError> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| RepmatError::BadMeta { key: "sv_indices", msg: format!("bad index {t:?}") }))
        .collect()
}

/// Dispatch a bundle to its family's builder.
///
/// Metadata consulted: `residualize` (OOF/OOB, default true), `sv_indices`
/// (SVM, default all rows), `n_rows`/`n_cols` (raw eigenvalues, for the aspect ratio).
pub fn build(bundle: &ArtifactBundle) -> Result<RepMatrix, RepmatError> {
    let family = bundle.family;
    let rep = match (&bundle.payload, family) {
        (Payload::Dense(w), Family::NeuralWeights) => weight_correlation(w)?,
        (Payload::Dense(w), Family::OofIncrements | Family::OobIncrements) => {
            let mut r = oof_correlation(w, meta_flag(bundle, "residualize", true)?)?;
            r.family = family;
            r
        }
        (Payload::Dense(k), Family::SvmKernel) => {
            let idx = match bundle.meta.get("sv_indices") {
                Some(s) => parse_index_list(s)?,
                None => (0..k.rows).collect(),
            };
            svm_kernel_submatrix(k, &idx)?
        }
        (Payload::ProbMatrix { probs, x }, _) => logistic_hessian(x, probs)?,
        (Payload::Leaves(l), _) => leaf_spectrum(l)?,
        (Payload::Sparse(a), _) => knn_laplacian(a)?,
        (Payload::Eigs(e), _) => {
            let rows = meta_usize(bundle, "n_rows")?.unwrap_or(e.len());
            let cols = meta_usize(bundle, "n_cols")?.unwrap_or(e.len());
            RepMatrix {
                family,
                n_effective: e.len(),
                body: RepBody::DirectEigs(e.clone()),
                shape: (rows, cols),
                null_dim: None,
            }
        }
        (Payload::Dense(_), _) => {
            return Err(RepmatError::ShapeMismatch(format!("{family:?} does not take a dense payload")));
        }
    };
    Ok(rep)
}
