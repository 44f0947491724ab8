//! Marchenko-Pastur null model, correlation traps, spectral collapse, and the
//! end-to-end diagnostic that assembles a [`SpectralReport`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::{self, EsdSample, LanczosConfig};
use crate::error::Error;
use crate::ingest::{ArtifactBundle, Family};
use crate::plfit::{self, FitConfig, FitError, PowerLawFit};
use crate::repmat;

#[derive(Debug, Error, PartialEq)]
pub enum RmtError {
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

impl RmtError {
    pub fn kind(&self) -> &'static str {
        match self {
            RmtError::EmptySpectrum => "EmptySpectrum",
            RmtError::BadConfig(_) => "BadConfig",
        }
    }
}

/// Bulk trimming used to estimate σ².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpConfig {
    /// Fraction of the largest eigenvalues dropped (tail).
    pub trim_top: f64,
    /// Fraction of the smallest positive eigenvalues dropped.
    pub trim_bottom: f64,
}

impl Default for MpConfig {
    fn default() -> Self {
        MpConfig { trim_top: 0.10, trim_bottom: 0.05 }
    }
}

impl MpConfig {
    pub fn validate(&self) -> Result<(), RmtError> {
        if !(self.trim_top >= 0.0 && self.trim_bottom >= 0.0 && self.trim_top + self.trim_bottom < 1.0) {
            return Err(RmtError::BadConfig("trim fractions must be non-negative and sum below 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    pub k_sigma: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig { k_sigma: 3.0 }
    }
}

impl TrapConfig {
    pub fn validate(&self) -> Result<(), RmtError> {
        if !(self.k_sigma > 0.0) {
            return Err(RmtError::BadConfig("k_sigma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    /// Share of eigenvalues at a single value that counts as a Dirac spike.
    pub dirac_mass: f64,
    /// Relative tolerance (to λ_max) for "the same value".
    pub dirac_tol: f64,
    /// Share of zero eigenvalues that counts as fragmentation.
    pub zero_fraction: f64,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        CollapseConfig { dirac_mass: 0.9, dirac_tol: 1e-9, zero_fraction: 0.1 }
    }
}

impl CollapseConfig {
    pub fn validate(&self) -> Result<(), RmtError> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.dirac_mass) || !unit(self.zero_fraction) || !(self.dirac_tol >= 0.0) {
            return Err(RmtError::BadConfig("collapse thresholds out of range".into()));
        }
        Ok(())
    }
}

/// Everything `analyze` needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub fit: FitConfig,
    pub traps: TrapConfig,
    pub lanczos: LanczosConfig,
    pub mp: MpConfig,
    pub collapse: CollapseConfig,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.fit.validate()?;
        self.traps.validate()?;
        self.lanczos.validate()?;
        self.mp.validate()?;
        self.collapse.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpModel {
    pub q: f64,
    pub sigma2: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

/// MP bulk edges `σ²(1 ∓ √q)²`.
pub fn mp_edges(q: f64, sigma2: f64) -> (f64, f64) {
    let r = q.sqrt();
    (sigma2 * (1.0 - r).powi(2), sigma2 * (1.0 + r).powi(2))
}

impl MpModel {
    pub fn new(q: f64, sigma2: f64) -> Self {
        let (lambda_minus, lambda_plus) = mp_edges(q, sigma2);
        MpModel { q, sigma2, lambda_minus, lambda_plus }
    }
}

const MP_GRID: usize = 8192;

/// Unit-variance MP law discretized on `grid` cells: cell centres and
/// probability masses (summing to 1).
///
/// Uses `x = c - h·cos θ`, which turns the square-root edges into a smooth
/// `sin²θ / x` integrand.
pub fn mp_density_grid(q: f64, grid: usize) -> (Vec<f64>, Vec<f64>) {
    let (lm, lp) = mp_edges(q, 1.0);
    let (c, h) = ((lp + lm) / 2.0, (lp - lm) / 2.0);
    let dtheta = std::f64::consts::PI / grid as f64;
    let mut xs = Vec::with_capacity(grid);
    let mut ws = Vec::with_capacity(grid);
    for k in 0..grid {
        let th = (k as f64 + 0.5) * dtheta;
        let x = c - h * th.cos();
        xs.push(x);
        ws.push(h * h * th.sin().powi(2) / x);
    }
    let total: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= total);
    (xs, ws)
}

/// Mean of the unit-variance MP law restricted to the quantile band
/// `[trim_bottom, 1 - trim_top]`.
pub fn mp_trimmed_mean(q: f64, trim_bottom: f64, trim_top: f64) -> f64 {
    let (xs, ws) = mp_density_grid(q, MP_GRID);
    let (lo, hi) = (trim_bottom, 1.0 - trim_top);
    let (mut cum, mut mass, mut moment) = (0.0, 0.0, 0.0);
    for (x, w) in xs.iter().zip(&ws) {
        let overlap = ((cum + w).min(hi) - cum.max(lo)).max(0.0);
        mass += overlap;
        moment += overlap * x;
        cum += w;
    }
    moment / mass
}

/// Fit the MP null: σ² matches the trimmed bulk mean to the same trimmed mean
/// of the unit-variance MP law at the spectrum's aspect ratio.
pub fn fit_mp(esd: &EsdSample, cfg: &MpConfig) -> Result<MpModel, RmtError> {
    cfg.validate()?;
    let pos = esd.positive_ascending();
    if pos.is_empty() {
        return Err(RmtError::EmptySpectrum);
    }
    let q = esd.aspect_ratio();
    let n = pos.len();
    let drop_lo = (cfg.trim_bottom * n as f64).floor() as usize;
    let drop_hi = (cfg.trim_top * n as f64).floor() as usize;
    let band = if drop_lo + drop_hi < n { &pos[drop_lo..n - drop_hi] } else { &pos[..] };
    let empirical = band.iter().sum::<f64>() / band.len() as f64;
    let sigma2 = empirical / mp_trimmed_mean(q, cfg.trim_bottom, cfg.trim_top);
    Ok(MpModel::new(q, sigma2))
}

/// Population standard deviation of the eigenvalues at or above `xmin`.
pub fn tail_sigma(esd: &EsdSample, xmin: f64) -> f64 {
    let tail: Vec<f64> = esd.eigs.iter().copied().filter(|&v| v >= xmin).collect();
    if tail.len() < 2 {
        return 0.0;
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt()
}

/// `λ₊ + k·σ_tail`.
pub fn trap_threshold(esd: &EsdSample, mp: &MpModel, fit: &PowerLawFit, cfg: &TrapConfig) -> f64 {
    mp.lambda_plus + cfg.k_sigma * tail_sigma(esd, fit.xmin)
}

/// Eigenvalues strictly above `λ₊ + k·σ_tail`, descending.
pub fn detect_traps(esd: &EsdSample, mp: &MpModel, fit: &PowerLawFit, cfg: &TrapConfig) -> Vec<f64> {
    let t = trap_threshold(esd, mp, fit, cfg);
    esd.eigs.iter().copied().take_while(|&v| v > t).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum CollapseRule {
    /// Most of the spectrum sits at one value (e.g. singleton leaves at λ = 1).
    Dirac { value: f64, mass: f64 },
    /// Too many zero modes (a shattered k-NN graph).
    Fragmentation { zero_fraction: f64 },
    /// The power law is rejected at the collapse level.
    KsRejected { ks_p: f64 },
}

impl CollapseRule {
    pub fn name(&self) -> &'static str {
        match self {
            CollapseRule::Dirac { .. } => "Dirac",
            CollapseRule::Fragmentation { .. } => "Fragmentation",
            CollapseRule::KsRejected { .. } => "KsRejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseVerdict {
    /// Every rule that fired, in the order Dirac, Fragmentation, KsRejected.
    pub rules: Vec<CollapseRule>,
}

impl CollapseVerdict {
    pub fn collapsed(&self) -> bool {
        !self.rules.is_empty()
    }

    pub fn primary(&self) -> Option<&CollapseRule> {
        self.rules.first()
    }
}

/// Largest share of eigenvalues lying within `±tol` of one value, and that value.
fn dirac_mass(eigs: &[f64], tol: f64) -> (f64, f64) {
    // eigs are descending; sliding window of width 2·tol
    let (mut best, mut best_val) = (0usize, eigs[0]);
    let mut lo = 0usize;
    for hi in 0..eigs.len() {
        while eigs[lo] - eigs[hi] > 2.0 * tol {
            lo += 1;
        }
        if hi + 1 - lo > best {
            best = hi + 1 - lo;
            best_val = 0.5 * (eigs[lo] + eigs[hi]);
        }
    }
    (best as f64 / eigs.len() as f64, best_val)
}

pub fn detect_collapse(
    esd: &EsdSample,
    fit: Result<&PowerLawFit, &FitError>,
    fit_cfg: &FitConfig,
    cfg: &CollapseConfig,
) -> CollapseVerdict {
    let mut rules = Vec::new();
    let (mass, value) = dirac_mass(&esd.eigs, cfg.dirac_tol * esd.eigs[0].abs());
    if mass >= cfg.dirac_mass {
        rules.push(CollapseRule::Dirac { value, mass });
    }
    let zero_fraction = esd.zero_fraction();
    if zero_fraction >= cfg.zero_fraction {
        rules.push(CollapseRule::Fragmentation { zero_fraction });
    }
    if let Ok(f) = fit {
        if f.ks_p < fit_cfg.p_collapse {
            rules.push(CollapseRule::KsRejected { ks_p: f.ks_p });
        }
    }
    CollapseVerdict { rules }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    PowerLaw,
    Collapse,
    Rejected,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::PowerLaw => "PowerLaw",
            Status::Collapse => "Collapse",
            Status::Rejected => "Rejected",
        }
    }
}

/// Per-model diagnostic verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub family: Family,
    pub status: Status,
    pub fit: Option<PowerLawFit>,
    pub fit_error: Option<String>,
    pub mp: MpModel,
    pub n_traps: usize,
    pub traps: Vec<f64>,
    /// False under collapse or without a fitted tail; `n_traps` is then 0.
    pub traps_applicable: bool,
    pub n_zero_eigs: usize,
    pub n_eigs: usize,
    pub dim: usize,
    pub collapse: Option<CollapseRule>,
    /// Share of positive eigenvalues inside the MP edges and below the tail cutoff.
    pub bulk_fraction: f64,
    pub warnings: Vec<String>,
    pub meta: BTreeMap<String, String>,
}

/// MP-supported share of the positive spectrum: the fraction of positive
/// eigenvalues inside `[λ₋, λ₊]` and below `tail_start`, discounted by the KS
/// distance between those values and the fitted MP law truncated at `tail_start`.
/// A tail-only spectrum can sit inside the edges of an inflated σ² fit; the KS
/// factor keeps it from counting as bulk.
pub fn bulk_fraction(esd: &EsdSample, mp: &MpModel, tail_start: Option<f64>) -> f64 {
    let pos = esd.positive_ascending();
    if pos.is_empty() || !(mp.sigma2 > 0.0) {
        return 0.0;
    }
    let cut = tail_start.unwrap_or(f64::INFINITY);
    let below: Vec<f64> = pos.iter().copied().filter(|&v| v < cut).collect();
    let inside = below.iter().filter(|&&v| v >= mp.lambda_minus && v <= mp.lambda_plus).count();
    if inside == 0 {
        return 0.0;
    }
    let (xs, ws) = mp_density_grid(mp.q, MP_GRID);
    let mut cdf = Vec::with_capacity(ws.len());
    let mut acc = 0.0;
    for w in &ws {
        acc += w;
        cdf.push(acc);
    }
    let mp_cdf = |v: f64| {
        let k = xs.partition_point(|&x| x * mp.sigma2 <= v);
        if k == 0 { 0.0 } else { cdf[k - 1] }
    };
    let total = mp_cdf(cut).max(f64::MIN_POSITIVE);
    let n = below.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in below.iter().enumerate() {
        let g = (mp_cdf(v) / total).min(1.0);
        d = d.max((g - i as f64 / n).abs()).max(((i + 1) as f64 / n - g).abs());
    }
    inside as f64 / pos.len() as f64 * (1.0 - d)
}

/// Every stage after spectrum extraction, composed.
pub fn analyze_esd(
    esd: &EsdSample,
    family: Family,
    meta: &BTreeMap<String, String>,
    cfg: &AnalysisConfig,
) -> Result<SpectralReport, Error> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let fit = plfit::fit_tail(esd, &cfg.fit);
    let mp = fit_mp(esd, &cfg.mp)?;
    let verdict = detect_collapse(esd, fit.as_ref(), &cfg.fit, &cfg.collapse);
    let (fit, fit_error) = match fit {
        Ok(f) => (Some(f), None),
        Err(e @ FitError::BadParameter(_)) => return Err(e.into()),
        Err(e) => {
            warnings.push(format!("power-law fit failed: {e}"));
            (None, Some(e.kind().to_string()))
        }
    };
    let status = if verdict.collapsed() {
        Status::Collapse
    } else if fit.is_some_and(|f| f.accepted(&cfg.fit)) {
        Status::PowerLaw
    } else {
        Status::Rejected
    };
    let (traps, traps_applicable) = match (&fit, status) {
        (Some(f), Status::PowerLaw | Status::Rejected) => (detect_traps(esd, &mp, f, &cfg.traps), true),
        _ => (Vec::new(), false),
    };
    let bulk = bulk_fraction(esd, &mp, fit.map(|f| f.xmin));
    if bulk < 0.5 {
        warnings.push(format!("bulk fraction {bulk:.3} below 0.5: MP null poorly supported"));
    }
    if esd.source == eig::EsdSource::Lanczos {
        warnings.push(format!("top-{} eigenvalues only (Lanczos path)", esd.eigs.len()));
    }
    Ok(SpectralReport {
        family,
        status,
        fit,
        fit_error,
        mp,
        n_traps: traps.len(),
        traps,
        traps_applicable,
        n_zero_eigs: esd.zero_count(),
        n_eigs: esd.eigs.len(),
        dim: esd.dim,
        collapse: verdict.primary().copied(),
        bulk_fraction: bulk,
        warnings,
        meta: meta.clone(),
    })
}

/// Bundle → representation matrix → spectrum → fit → MP → traps → collapse → report.
pub fn analyze(bundle: &ArtifactBundle, cfg: &AnalysisConfig) -> Result<SpectralReport, Error> {
    cfg.validate()?;
    let rep = repmat::build(bundle)?;
    let esd = eig::spectrum(&rep, &cfg.lanczos)?;
    analyze_esd(&esd, bundle.family, &bundle.meta, cfg)
}

/// Fixed-schema JSON form of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub family: String,
    pub status: String,
    pub alpha: Option<f64>,
    pub xmin: Option<f64>,
    pub ks_p: Option<f64>,
    pub ks_stat: Option<f64>,
    pub n_tail: Option<usize>,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub sigma2: f64,
    pub q: f64,
    pub n_traps: usize,
    pub traps_applicable: bool,
    pub n_zero_eigs: usize,
    pub n_eigs: usize,
    pub dim: usize,
    pub bulk_fraction: f64,
    pub collapse_rule: Option<String>,
    pub fit_error: Option<String>,
    pub warnings: Vec<String>,
    pub meta: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl SpectralReport {
    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            family: self.family.cli_name().to_string(),
            status: self.status.as_str().to_string(),
            alpha: self.fit.map(|f| f.alpha),
            xmin: self.fit.map(|f| f.xmin),
            ks_p: self.fit.map(|f| f.ks_p),
            ks_stat: self.fit.map(|f| f.ks_stat),
            n_tail: self.fit.map(|f| f.n_tail),
            lambda_plus: self.mp.lambda_plus,
            lambda_minus: self.mp.lambda_minus,
            sigma2: self.mp.sigma2,
            q: self.mp.q,
            n_traps: self.n_traps,
            traps_applicable: self.traps_applicable,
            n_zero_eigs: self.n_zero_eigs,
            n_eigs: self.n_eigs,
            dim: self.dim,
            bulk_fraction: self.bulk_fraction,
            collapse_rule: self.collapse.map(|c| c.name().to_string()),
            fit_error: self.fit_error.clone(),
            warnings: self.warnings.clone(),
            meta: self.meta.clone(),
            config: None,
        }
    }
}
