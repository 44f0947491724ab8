//! Small symmetric linear-algebra kit: dense and CSR storage behind one
//! matrix-vector trait, plus the dense eigenvalue routine.

use nalgebra::DMatrix;

/// A real symmetric linear operator.
pub trait SymOperator {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Full row-major storage of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymDense {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymDense {
    pub fn zeros(n: usize) -> Self {
        SymDense { n, data: vec![0.0; n * n] }
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = SymDense::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry magnitude.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

impl SymOperator for SymDense {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(&self.data[i * self.n..(i + 1) * self.n], x);
        }
    }
}

/// Compressed sparse rows holding both triangles of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrSym {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrSym {
    /// Build from upper-triangular triplets (`i <= j`), mirroring off-diagonal ones.
    /// Columns within a row come out sorted.
    pub fn from_upper(n: usize, entries: &[(u32, u32, f64)]) -> Self {
        let mut counts = vec![0usize; n];
        for &(i, j, _) in entries {
            counts[i as usize] += 1;
            if i != j {
                counts[j as usize] += 1;
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        let nnz = row_ptr[n];
        let mut col_idx = vec![0u32; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = row_ptr[..n].to_vec();
        let mut push = |r: usize, c: u32, v: f64| {
            col_idx[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        };
        for &(i, j, v) in entries {
            push(i as usize, j, v);
            if i != j {
                push(j as usize, i, v);
            }
        }
        for r in 0..n {
            let (s, e) = (row_ptr[r], row_ptr[r + 1]);
            let mut pairs: Vec<(u32, f64)> = col_idx[s..e].iter().copied().zip(vals[s..e].iter().copied()).collect();
            pairs.sort_by_key(|p| p.0);
            for (k, (c, v)) in pairs.into_iter().enumerate() {
                col_idx[s + k] = c;
                vals[s + k] = v;
            }
        }
        CsrSym { n, row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e].iter().zip(&self.vals[s..e]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn to_dense(&self) -> SymDense {
        let mut d = SymDense::zeros(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d.data[i * self.n + j] = v;
            }
        }
        d
    }
}

impl SymOperator for CsrSym {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators: fixed reduction order, better pipelining
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// All eigenvalues of a dense symmetric matrix, descending.
pub fn sym_eigenvalues_desc(m: &SymDense) -> Vec<f64> {
    if m.n == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = m.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}
