//! Eigenvalue extraction: closed-form pass-through, dense symmetric
//! decomposition, or thick-restart Lanczos for large operators.
//!
//! The Lanczos solver keeps `k` Ritz vectors across restarts inside a
//! search space of `max(2k + 1, 20)` vectors, with full (two-pass when
//! needed) reorthogonalization. One restart cycle counts as one iteration.
//! Convergence follows the checkpoint rule: the top `check_top` Ritz values
//! must move by at most `rel_tol` (relative) between iteration
//! `max_iters - 10` and `max_iters`. A run whose top residuals fall below
//! round-off stops early, since further cycles cannot move those values.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{axpy, dot, norm, sym_eigenvalues_desc, SymDense, SymOperator};
use crate::repmat::{RepBody, RepMatrix};
use crate::rng;

/// Eigenvalues at most this far below zero (relative to `max(1, λ_max)`) are clamped to zero.
pub const CLAMP_TOL: f64 = 1e-10;
/// Eigenvalues at or below `ZERO_REL_TOL · λ_max` count as zero modes.
pub const ZERO_REL_TOL: f64 = 1e-8;
/// Checkpoint distance of the convergence rule.
pub const CHECKPOINT_GAP: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum EigError {
    #[error("Lanczos did not converge: top-{check_top} relative change {change:e} exceeds {rel_tol:e}")]
    LanczosNoConverge { check_top: usize, change: f64, rel_tol: f64 },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("eigenvalue {value:e} violates positive semi-definiteness")]
    PsdViolation { value: f64 },
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("invalid Lanczos configuration: {0}")]
    BadConfig(String),
    #[error("Lanczos trace requested for a matrix with closed-form eigenvalues")]
    NotApplicable,
}

impl EigError {
    pub fn kind(&self) -> &'static str {
        match self {
            EigError::LanczosNoConverge { .. } => "LanczosNoConverge",
            EigError::NumericalBreakdown(_) => "NumericalBreakdown",
            EigError::PsdViolation { .. } => "PsdViolation",
            EigError::EmptySpectrum => "EmptySpectrum",
            EigError::BadConfig(_) => "BadConfig",
            EigError::NotApplicable => "NotApplicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanczosConfig {
    /// Number of extremal eigenvalues requested.
    pub k: usize,
    pub max_iters: usize,
    pub check_top: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Matrices of at most this dimension take the dense path.
    pub dense_threshold: usize,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig { k: 200, max_iters: 50, check_top: 50, rel_tol: 1e-4, seed: 0, dense_threshold: 2000 }
    }
}

impl LanczosConfig {
    pub fn validate(&self) -> Result<(), EigError> {
        if self.k == 0 {
            return Err(EigError::BadConfig("k must be positive".into()));
        }
        if self.check_top == 0 || self.check_top > self.k {
            return Err(EigError::BadConfig(format!("check_top {} must lie in [1, k={}]", self.check_top, self.k)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(EigError::BadConfig("rel_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(EigError::BadConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EsdSource {
    Dense,
    Lanczos,
    Direct,
}

/// Descending, non-negative eigenvalues plus the shape metadata the MP fit needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdSample {
    pub eigs: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Dimension of the matrix the values came from (may exceed `eigs.len()` on the Lanczos path).
    pub dim: usize,
    /// Structural zero-mode count, when the builder knows it.
    pub null_dim: Option<usize>,
    pub source: EsdSource,
}

impl EsdSample {
    /// Sort descending and clamp round-off negatives; reject genuine negatives.
    pub fn new(mut eigs: Vec<f64>, n_rows: usize, n_cols: usize, source: EsdSource) -> Result<Self, EigError> {
        if eigs.is_empty() {
            return Err(EigError::EmptySpectrum);
        }
        if let Some(bad) = eigs.iter().find(|v| !v.is_finite()) {
            return Err(EigError::NumericalBreakdown(format!("non-finite eigenvalue {bad}")));
        }
        eigs.sort_by(|a, b| b.total_cmp(a));
        let tol = CLAMP_TOL * eigs[0].abs().max(1.0);
        for v in eigs.iter_mut() {
            if *v < -tol {
                return Err(EigError::PsdViolation { value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let dim = eigs.len();
        Ok(EsdSample { eigs, n_rows, n_cols, dim, null_dim: None, source })
    }

    /// Raw values with unknown shape (aspect ratio taken as 1).
    pub fn from_values(eigs: Vec<f64>) -> Result<Self, EigError> {
        let n = eigs.len();
        Self::new(eigs, n, n, EsdSource::Direct)
    }

    pub fn aspect_ratio(&self) -> f64 {
        crate::repmat::aspect_ratio(self.n_rows, self.n_cols)
    }

    pub fn zero_threshold(&self) -> f64 {
        ZERO_REL_TOL * self.eigs[0]
    }

    /// Number of zero eigenvalues in the whole matrix (structural count if known).
    pub fn zero_count(&self) -> usize {
        if let Some(z) = self.null_dim {
            return z;
        }
        let t = self.zero_threshold();
        self.eigs.iter().filter(|&&v| v <= t).count()
    }

    /// Fraction of the full matrix dimension that is a zero mode.
    pub fn zero_fraction(&self) -> f64 {
        self.zero_count() as f64 / self.dim.max(1) as f64
    }

    /// Strictly positive eigenvalues (above the zero threshold), ascending.
    pub fn positive_ascending(&self) -> Vec<f64> {
        let t = self.zero_threshold();
        let mut v: Vec<f64> = self.eigs.iter().copied().filter(|&x| x > t).collect();
        v.reverse();
        v
    }

    /// Multiply every eigenvalue by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.eigs.iter_mut().for_each(|v| *v *= c);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub iteration: usize,
    /// Largest relative change of the top Ritz values since the previous iteration.
    pub max_rel_change: Option<f64>,
    /// Largest residual norm among the top Ritz pairs.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub checkpoints: Vec<Checkpoint>,
    /// Relative change between the two rule checkpoints (zero when stopped early on residuals).
    pub decisive_change: f64,
    pub converged: bool,
    /// Stopped before the budget because the top residuals reached round-off.
    pub residual_locked: bool,
    pub iterations: usize,
    pub search_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanczosRun {
    /// Top Ritz values, descending.
    pub values: Vec<f64>,
    pub trace: ConvergenceTrace,
}

fn max_rel_change(prev: &[f64], cur: &[f64]) -> f64 {
    let scale = cur.first().map_or(0.0, |v| v.abs()).max(prev.first().map_or(0.0, |v| v.abs()));
    let floor = (scale * 1e-12).max(f64::MIN_POSITIVE);
    prev.iter().zip(cur).map(|(a, b)| (a - b).abs() / b.abs().max(floor)).fold(0.0, f64::max)
}

/// Orthogonalize `w` against `basis` (two passes when the first loses too much norm).
/// Returns the accumulated projection coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    let before = norm(w);
    for _pass in 0..2 {
        for (c, v) in coeffs.iter_mut().zip(basis) {
            let h = dot(v, w);
            axpy(-h, v, w);
            *c += h;
        }
        if norm(w) > std::f64::consts::FRAC_1_SQRT_2 * before {
            break;
        }
    }
    coeffs
}

/// A fresh random unit vector orthogonal to `basis`, or `None` if the basis spans everything.
fn fresh_direction(basis: &[Vec<f64>], n: usize, rng: &mut rng::SeededRng) -> Option<Vec<f64>> {
    if basis.len() >= n {
        return None;
    }
    for _ in 0..8 {
        let mut v = rng::unit_sphere(rng, n);
        orthogonalize(basis, &mut v);
        orthogonalize(basis, &mut v);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

/// Thick-restart Lanczos for the largest eigenvalues of `op`.
pub fn lanczos_top(op: &dyn SymOperator, cfg: &LanczosConfig) -> Result<LanczosRun, EigError> {
    cfg.validate()?;
    let n = op.dim();
    if n == 0 {
        return Err(EigError::EmptySpectrum);
    }
    let k = cfg.k.min(n);
    let check = cfg.check_top.min(k);
    let ncv = (2 * k + 1).max(20).min(n);
    let mut rng = rng::seeded(cfg.seed);

    let mut basis: Vec<Vec<f64>> = vec![rng::unit_sphere(&mut rng, n)];
    let mut t = DMatrix::<f64>::zeros(ncv, ncv);
    let mut kept = 0usize;
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut w = vec![0.0; n];
    let mut residual_locked = false;
    let mut ritz_top: Vec<f64> = Vec::new();
    let mut anorm = 0.0f64;

    for iter in 1..=cfg.max_iters {
        // expand the basis from `kept` up to `ncv`
        let mut beta_last = 0.0;
        let mut resid = vec![0.0; n];
        for j in kept..ncv {
            op.apply(&basis[j], &mut w);
            if w.iter().any(|x| !x.is_finite()) {
                return Err(EigError::NumericalBreakdown("non-finite matrix-vector product".into()));
            }
            let coeffs = orthogonalize(&basis, &mut w);
            for (i, &h) in coeffs.iter().enumerate() {
                if i < kept && j > kept {
                    // Ritz block couples only to the first new vector
                    continue;
                }
                t[(i, j)] = h;
                t[(j, i)] = h;
            }
            anorm = anorm.max(coeffs[j].abs());
            let beta = norm(&w);
            anorm = anorm.max(beta);
            let breakdown = beta <= 1e-13 * anorm.max(f64::MIN_POSITIVE);
            if j + 1 == ncv {
                if !breakdown {
                    beta_last = beta;
                    resid.iter_mut().zip(&w).for_each(|(r, x)| *r = x / beta);
                }
                break;
            }
            let next = if breakdown {
                match fresh_direction(&basis, n, &mut rng) {
                    Some(v) => v,
                    None => break,
                }
            } else {
                w.iter().map(|x| x / beta).collect()
            };
            basis.push(next);
        }
        let m = basis.len();
        let tm = t.view((0, 0), (m, m)).into_owned();
        let eig = SymmetricEigen::try_new(tm, f64::EPSILON, 0)
            .ok_or_else(|| EigError::NumericalBreakdown("projected eigenproblem failed".into()))?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let residuals: Vec<f64> = order.iter().map(|&i| (beta_last * eig.eigenvectors[(m - 1, i)]).abs()).collect();
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(EigError::NumericalBreakdown("non-finite Ritz value".into()));
        }
        let top: Vec<f64> = theta[..check.min(m)].to_vec();
        let max_residual = residuals[..check.min(m)].iter().copied().fold(0.0, f64::max);
        checkpoints.push(Checkpoint {
            iteration: iter,
            max_rel_change: history.last().map(|p: &Vec<f64>| max_rel_change(p, &top)),
            max_residual,
        });
        history.push(top);
        ritz_top = theta[..k.min(m)].to_vec();

        let scale = theta.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(anorm);
        if m < ncv || max_residual <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            // invariant subspace found, or the top pairs are exact to round-off
            residual_locked = true;
            break;
        }
        if iter == cfg.max_iters {
            break;
        }

        // thick restart: keep the top-k Ritz vectors plus the residual direction
        let keep = k.min(m - 1);
        let mut new_basis: Vec<Vec<f64>> = Vec::with_capacity(ncv + 1);
        for &col in &order[..keep] {
            let mut y = vec![0.0; n];
            for (r, v) in basis.iter().enumerate() {
                let s = eig.eigenvectors[(r, col)];
                if s != 0.0 {
                    axpy(s, v, &mut y);
                }
            }
            new_basis.push(y);
        }
        t.fill(0.0);
        for (i, &th) in theta[..keep].iter().enumerate() {
            t[(i, i)] = th;
        }
        let next = if beta_last > 0.0 {
            let mut r = resid;
            orthogonalize(&new_basis, &mut r);
            let nr = norm(&r);
            r.iter_mut().for_each(|x| *x /= nr);
            Some(r)
        } else {
            fresh_direction(&new_basis, n, &mut rng)
        };
        basis = new_basis;
        kept = keep;
        match next {
            Some(v) => basis.push(v),
            None => {
                residual_locked = true;
                break;
            }
        }
    }

    let iterations = history.len();
    let decisive_change = if residual_locked {
        0.0
    } else {
        let base = iterations.saturating_sub(CHECKPOINT_GAP).max(1);
        max_rel_change(&history[base - 1], &history[iterations - 1])
    };
    let converged = residual_locked || decisive_change <= cfg.rel_tol;
    Ok(LanczosRun {
        values: ritz_top,
        trace: ConvergenceTrace {
            checkpoints,
            decisive_change,
            converged,
            residual_locked,
            iterations,
            search_dim: ncv,
        },
    })
}

fn dense_values(m: &SymDense) -> Vec<f64> {
    sym_eigenvalues_desc(m)
}

fn esd(rep: &RepMatrix, eigs: Vec<f64>, source: EsdSource) -> Result<EsdSample, EigError> {
    let mut s = EsdSample::new(eigs, rep.shape.0, rep.shape.1, source)?;
    s.dim = rep.dim();
    s.null_dim = rep.null_dim;
    Ok(s)
}

/// Eigenvalues of a representation matrix.
///
/// Closed-form spectra pass through; matrices with `dim <= dense_threshold`
/// are decomposed densely (full spectrum); larger ones return the top `k`
/// eigenvalues from Lanczos and fail with `LanczosNoConverge` when the
/// checkpoint rule is not met.
pub fn spectrum(rep: &RepMatrix, cfg: &LanczosConfig) -> Result<EsdSample, EigError> {
    match &rep.body {
        RepBody::DirectEigs(e) => esd(rep, e.clone(), EsdSource::Direct),
        RepBody::DenseSym(m) if m.n <= cfg.dense_threshold => esd(rep, dense_values(m), EsdSource::Dense),
        RepBody::SparseSym(s) if s.n <= cfg.dense_threshold => esd(rep, dense_values(&s.to_dense()), EsdSource::Dense),
        RepBody::DenseSym(m) => lanczos_esd(rep, m, cfg),
        RepBody::SparseSym(s) => lanczos_esd(rep, s, cfg),
    }
}

fn lanczos_esd(rep: &RepMatrix, op: &dyn SymOperator, cfg: &LanczosConfig) -> Result<EsdSample, EigError> {
    let run = lanczos_top(op, cfg)?;
    if !run.trace.converged {
        return Err(EigError::LanczosNoConverge {
            check_top: cfg.check_top,
            change: run.trace.decisive_change,
            rel_tol: cfg.rel_tol,
        });
    }
    esd(rep, run.values, EsdSource::Lanczos)
}

/// Lanczos iteration trace for `rep`, regardless of the dense/Lanczos dispatch.
pub fn convergence_report(rep: &RepMatrix, cfg: &LanczosConfig) -> Result<ConvergenceTrace, EigError> {
    let run = match &rep.body {
        RepBody::DirectEigs(_) => return Err(EigError::NotApplicable),
        RepBody::DenseSym(m) => lanczos_top(m, cfg)?,
        RepBody::SparseSym(s) => lanczos_top(s, cfg)?,
    };
    Ok(run.trace)
}
