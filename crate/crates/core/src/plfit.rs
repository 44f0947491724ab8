//! Continuous power-law fitting of a spectral tail.
//!
//! For a cutoff `xmin` the exponent is the closed-form MLE
//! `α̂ = 1 + n / Σ ln(λᵢ / xmin)` over the `n` values at or above `xmin`.
//! The cutoff minimizes the Kolmogorov-Smirnov distance between the empirical
//! tail CDF and the fitted Pareto CDF `1 - (x / xmin)^(1 - α̂)`. The p-value
//! comes from a semi-parametric bootstrap: below-cutoff values are resampled
//! from the data, tail values drawn from the fitted law, and each synthetic
//! set is refitted from scratch (cutoff search included).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::EsdSample;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("tail too small: {have} usable values, need {need}")]
    TailTooSmall { have: usize, need: usize },
    #[error("all values are equal; no tail to fit")]
    AllValuesEqual,
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

impl FitError {
    pub fn kind(&self) -> &'static str {
        match self {
            FitError::TailTooSmall { .. } => "TailTooSmall",
            FitError::AllValuesEqual => "AllValuesEqual",
            FitError::BadParameter(_) => "BadParameter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub n_bootstrap: usize,
    pub min_tail: usize,
    pub p_accept: f64,
    pub p_collapse: f64,
    pub seed: u64,
    /// Upper bound on the number of `xmin` candidates (log-spaced when exceeded).
    pub max_candidates: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { n_bootstrap: 1000, min_tail: 20, p_accept: 0.1, p_collapse: 0.01, seed: 0, max_candidates: 400 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(0.0 < self.p_collapse && self.p_collapse < self.p_accept && self.p_accept < 1.0) {
            return Err(FitError::BadParameter(format!(
                "need 0 < p_collapse ({}) < p_accept ({}) < 1",
                self.p_collapse, self.p_accept
            )));
        }
        if self.min_tail < 2 {
            return Err(FitError::BadParameter("min_tail must be at least 2".into()));
        }
        if self.n_bootstrap == 0 {
            return Err(FitError::BadParameter("n_bootstrap must be at least 1".into()));
        }
        if self.max_candidates == 0 {
            return Err(FitError::BadParameter("max_candidates must be positive".into()));
        }
        Ok(())
    }
}

/// Point estimate of the tail (no p-value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub alpha: f64,
    pub xmin: f64,
    pub n_tail: usize,
    pub ks_stat: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub xmin: f64,
    pub n_tail: usize,
    pub ks_stat: f64,
    pub ks_p: f64,
    pub loglik: f64,
    pub n_bootstrap: usize,
}

impl PowerLawFit {
    pub fn accepted(&self, cfg: &FitConfig) -> bool {
        self.ks_p > cfg.p_accept
    }

    pub fn from_estimate(est: &TailEstimate, ks_p: f64, n_bootstrap: usize) -> Self {
        PowerLawFit {
            alpha: est.alpha,
            xmin: est.xmin,
            n_tail: est.n_tail,
            ks_stat: est.ks_stat,
            ks_p,
            loglik: est.loglik,
            n_bootstrap,
        }
    }
}

/// Closed-form continuous MLE for a fixed cutoff.
pub fn mle_alpha(tail: &[f64], xmin: f64) -> f64 {
    let s: f64 = tail.iter().map(|&x| (x / xmin).ln()).sum();
    1.0 + tail.len() as f64 / s
}

/// Continuous power-law log-likelihood of `tail` (all `>= xmin`).
pub fn log_likelihood(tail: &[f64], alpha: f64, xmin: f64) -> f64 {
    let n = tail.len() as f64;
    let s: f64 = tail.iter().map(|&x| (x / xmin).ln()).sum();
    n * (alpha - 1.0).ln() - n * xmin.ln() - alpha * s
}

/// Indices (into the ascending data) of the `xmin` candidates.
fn candidate_starts(sorted: &[f64], min_tail: usize, cap: usize) -> Vec<usize> {
    let n = sorted.len();
    let top = sorted[n - 1];
    let mut starts: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || sorted[i] != sorted[i - 1]) && n - i >= min_tail && sorted[i] < top)
        .collect();
    if starts.len() <= cap {
        return starts;
    }
    // log-spaced targets snapped to the nearest candidate value
    let lo = sorted[starts[0]].ln();
    let hi = sorted[*starts.last().unwrap()].ln();
    let mut picked = Vec::with_capacity(cap);
    let mut pos = 0usize;
    for k in 0..cap {
        let target = lo + (hi - lo) * k as f64 / (cap - 1) as f64;
        while pos + 1 < starts.len() && sorted[starts[pos + 1]].ln() <= target {
            pos += 1;
        }
        let mut best = pos;
        if pos + 1 < starts.len() && (sorted[starts[pos + 1]].ln() - target).abs() < (target - sorted[starts[pos]].ln()).abs() {
            best = pos + 1;
        }
        if picked.last() != Some(&starts[best]) {
            picked.push(starts[best]);
        }
    }
    starts = picked;
    starts
}

/// Fit the tail of ascending, strictly positive data.
pub fn estimate_sorted(sorted: &[f64], cfg: &FitConfig) -> Result<TailEstimate, FitError> {
    let n = sorted.len();
    if n < cfg.min_tail {
        return Err(FitError::TailTooSmall { have: n, need: cfg.min_tail });
    }
    if sorted[0] == sorted[n - 1] {
        return Err(FitError::AllValuesEqual);
    }
    let logs: Vec<f64> = sorted.iter().map(|x| x.ln()).collect();
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + logs[i];
    }
    let starts = candidate_starts(sorted, cfg.min_tail, cfg.max_candidates);
    if starts.is_empty() {
        return Err(FitError::TailTooSmall { have: n, need: cfg.min_tail });
    }

    let mut best: Option<(usize, f64, f64)> = None;
    for &i in &starts {
        let nt = n - i;
        let lmin = logs[i];
        let s = suffix[i] - nt as f64 * lmin;
        if s <= 0.0 {
            continue;
        }
        let alpha = 1.0 + nt as f64 / s;
        let bound = best.map_or(f64::INFINITY, |b| b.1);
        let inv = 1.0 / nt as f64;
        let mut d = 0.0f64;
        for (r, &lx) in logs[i..].iter().enumerate() {
            let cdf = 1.0 - (-(alpha - 1.0) * (lx - lmin)).exp();
            d = d.max(cdf - r as f64 * inv).max((r + 1) as f64 * inv - cdf);
            if d > bound {
                break;
            }
        }
        if d < bound {
            best = Some((i, d, alpha));
        }
    }
    let (i, ks_stat, alpha) = best.ok_or(FitError::AllValuesEqual)?;
    let nt = n - i;
    let xmin = sorted[i];
    let s = suffix[i] - nt as f64 * logs[i];
    let loglik = nt as f64 * (alpha - 1.0).ln() - nt as f64 * logs[i] - alpha * s;
    Ok(TailEstimate { alpha, xmin, n_tail: nt, ks_stat, loglik })
}

/// Sort and fit arbitrary values; non-positive values are dropped.
pub fn estimate_tail(values: &[f64], cfg: &FitConfig) -> Result<TailEstimate, FitError> {
    let mut v: Vec<f64> = values.iter().copied().filter(|&x| x > 0.0).collect();
    v.sort_by(f64::total_cmp);
    estimate_sorted(&v, cfg)
}

fn bootstrap_exceeds(sorted: &[f64], est: &TailEstimate, cfg: &FitConfig, replica: usize) -> bool {
    let n = sorted.len();
    let n_below = n - est.n_tail;
    let p_tail = est.n_tail as f64 / n as f64;
    let mut r = rng::stream(cfg.seed, replica as u64 + 1);
    let exponent = -1.0 / (est.alpha - 1.0);
    let mut synth: Vec<f64> = (0..n)
        .map(|_| {
            if n_below == 0 || r.gen::<f64>() < p_tail {
                est.xmin * rng::open01(&mut r).powf(exponent)
            } else {
                sorted[r.gen_range(0..n_below)]
            }
        })
        .collect();
    synth.sort_by(f64::total_cmp);
    match estimate_sorted(&synth, cfg) {
        Ok(e) => e.ks_stat >= est.ks_stat,
        // a synthetic set that cannot be fitted fits no better than the data
        Err(_) => true,
    }
}

/// Semi-parametric bootstrap p-value of the KS statistic in `est`.
pub fn bootstrap_p(sorted: &[f64], est: &TailEstimate, cfg: &FitConfig) -> f64 {
    #[cfg(feature = "parallel")]
    let hits = {
        use rayon::prelude::*;
        (0..cfg.n_bootstrap).into_par_iter().filter(|&r| bootstrap_exceeds(sorted, est, cfg, r)).count()
    };
    #[cfg(not(feature = "parallel"))]
    let hits = (0..cfg.n_bootstrap).filter(|&r| bootstrap_exceeds(sorted, est, cfg, r)).count();
    hits as f64 / cfg.n_bootstrap as f64
}

/// Fit the positive part of a spectrum, with bootstrap p-value.
pub fn fit_tail(esd: &EsdSample, cfg: &FitConfig) -> Result<PowerLawFit, FitError> {
    fit_sorted(&esd.positive_ascending(), cfg)
}

/// Fit raw values (non-positive ones dropped), with bootstrap p-value.
pub fn fit_values(values: &[f64], cfg: &FitConfig) -> Result<PowerLawFit, FitError> {
    let mut v: Vec<f64> = values.iter().copied().filter(|&x| x > 0.0).collect();
    v.sort_by(f64::total_cmp);
    fit_sorted(&v, cfg)
}

fn fit_sorted(sorted: &[f64], cfg: &FitConfig) -> Result<PowerLawFit, FitError> {
    cfg.validate()?;
    let est = estimate_sorted(sorted, cfg)?;
    let ks_p = bootstrap_p(sorted, &est, cfg);
    Ok(PowerLawFit::from_estimate(&est, ks_p, cfg.n_bootstrap))
}

/// I.i.d. Pareto draws by inverse CDF: `x = xmin · u^(-1/(α-1))`.
pub fn pareto_sample(alpha: f64, xmin: f64, n: usize, seed: u64) -> Result<Vec<f64>, FitError> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(FitError::BadParameter(format!("alpha must exceed 1, got {alpha}")));
    }
    if !(xmin > 0.0) || !xmin.is_finite() {
        return Err(FitError::BadParameter(format!("xmin must be positive, got {xmin}")));
    }
    if n == 0 {
        return Err(FitError::BadParameter("n must be at least 1".into()));
    }
    let mut r = rng::seeded(seed);
    let exponent = -1.0 / (alpha - 1.0);
    Ok((0..n).map(|_| xmin * rng::open01(&mut r).powf(exponent)).collect())
}
