//! Deployment protocols on top of spectral reports: α-based early stopping and
//! composite model selection, with the rank statistics used to evaluate them.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rmt::{ReportJson, SpectralReport, Status};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("need at least {need} models, got {have}")]
    TooFewModels { have: usize, need: usize },
    #[error("rankings do not cover the same labels")]
    LabelMismatch,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {have}")]
    TooFewObservations { have: usize, need: usize },
    #[error("rank correlation undefined: constant input")]
    DegenerateRanks,
    #[error("record {0} has no kappa")]
    MissingKappa(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

impl ProtocolError {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolError::TooFewModels { .. } => "TooFewModels",
            ProtocolError::LabelMismatch => "LabelMismatch",
            ProtocolError::LengthMismatch(..) => "LengthMismatch",
            ProtocolError::TooFewObservations { .. } => "TooFewObservations",
            ProtocolError::DegenerateRanks => "DegenerateRanks",
            ProtocolError::MissingKappa(_) => "MissingKappa",
            ProtocolError::BadConfig(_) => "BadConfig",
        }
    }
}

// ---------------------------------------------------------------------------
// early stopping

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopConfig {
    pub alpha_low: f64,
    pub tau_trap: u64,
    /// Consecutive stop verdicts required before halting.
    pub patience: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        EarlyStopConfig { alpha_low: 2.0, tau_trap: 3, patience: 1 }
    }
}

impl EarlyStopConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.alpha_low > 1.0) || !self.alpha_low.is_finite() {
            return Err(ProtocolError::BadConfig("alpha_low must exceed 1".into()));
        }
        if self.patience == 0 {
            return Err(ProtocolError::BadConfig("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StopReason {
    StopAlpha,
    StopTraps,
    StopCollapse,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::StopAlpha => "StopAlpha",
            StopReason::StopTraps => "StopTraps",
            StopReason::StopCollapse => "StopCollapse",
        }
    }
}

/// Every stop condition that fired; empty means Continue.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StopVerdict {
    pub reasons: Vec<StopReason>,
}

impl StopVerdict {
    pub fn is_stop(&self) -> bool {
        !self.reasons.is_empty()
    }

    /// `Continue` or the first reason in StopAlpha, StopTraps, StopCollapse order.
    pub fn label(&self) -> &'static str {
        self.reasons.first().map_or("Continue", |r| r.as_str())
    }
}

/// Instantaneous stop rule. An absent α means the spectrum collapsed.
pub fn should_stop(alpha: Option<f64>, traps: u64, cfg: &EarlyStopConfig) -> StopVerdict {
    let mut reasons = Vec::new();
    if let Some(a) = alpha {
        if a < cfg.alpha_low {
            reasons.push(StopReason::StopAlpha);
        }
    }
    if traps > cfg.tau_trap {
        reasons.push(StopReason::StopTraps);
    }
    if alpha.is_none() {
        reasons.push(StopReason::StopCollapse);
    }
    StopVerdict { reasons }
}

/// The joint criterion: validation-loss trigger OR spectral stop.
pub fn joint_stop(loss_triggered: bool, verdict: &StopVerdict) -> bool {
    loss_triggered || verdict.is_stop()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorStep {
    pub epoch: i64,
    pub verdict: String,
    pub flags: Vec<StopReason>,
    /// Consecutive stop verdicts so far, including this one.
    pub streak: usize,
    /// True once the streak reaches the patience.
    pub halt: bool,
}

/// Stateful wrapper applying patience to a stream of checkpoints.
#[derive(Debug, Clone)]
pub struct EarlyStopMonitor {
    cfg: EarlyStopConfig,
    streak: usize,
    first_halt: Option<i64>,
}

impl EarlyStopMonitor {
    pub fn new(cfg: EarlyStopConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        Ok(EarlyStopMonitor { cfg, streak: 0, first_halt: None })
    }

    pub fn step(&mut self, epoch: i64, alpha: Option<f64>, traps: u64) -> MonitorStep {
        let v = should_stop(alpha, traps, &self.cfg);
        self.streak = if v.is_stop() { self.streak + 1 } else { 0 };
        let halt = self.streak >= self.cfg.patience;
        if halt && self.first_halt.is_none() {
            self.first_halt = Some(epoch);
        }
        MonitorStep { epoch, verdict: v.label().to_string(), flags: v.reasons, streak: self.streak, halt }
    }

    pub fn first_halt(&self) -> Option<i64> {
        self.first_halt
    }
}

/// First epoch (1-indexed) at which the monitor halts on a trajectory.
pub fn first_stop_epoch(alphas: &[Option<f64>], traps: &[u64], cfg: &EarlyStopConfig) -> Result<Option<i64>, ProtocolError> {
    if alphas.len() != traps.len() {
        return Err(ProtocolError::LengthMismatch(alphas.len(), traps.len()));
    }
    let mut m = EarlyStopMonitor::new(cfg.clone())?;
    for (i, (a, t)) in alphas.iter().zip(traps).enumerate() {
        if m.step(i as i64 + 1, *a, *t).halt {
            break;
        }
    }
    Ok(m.first_halt())
}

// ---------------------------------------------------------------------------
// composite score and ranking

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub center: f64,
    pub f1_gate: f64,
    /// Drop non-PowerLaw models from scoring instead of ranking them last.
    pub exclude_non_powerlaw: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { w1: 0.4, w2: 0.4, w3: 0.02, center: 3.0, f1_gate: 0.75, exclude_non_powerlaw: true }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if !ok(self.w1) || !ok(self.w2) || !ok(self.w3) {
            return Err(ProtocolError::BadConfig("weights must be finite and non-negative".into()));
        }
        if !(self.w1 + self.w2 > 0.0) {
            return Err(ProtocolError::BadConfig("w1 + w2 must be positive".into()));
        }
        if !self.center.is_finite() || !self.f1_gate.is_finite() {
            return Err(ProtocolError::BadConfig("center and f1_gate must be finite".into()));
        }
        Ok(())
    }
}

/// The parts of a report the protocols read. Trap counts may be fractional
/// means over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordSpectrum {
    pub status: Status,
    pub alpha: Option<f64>,
    pub n_traps: f64,
}

impl From<&SpectralReport> for RecordSpectrum {
    fn from(r: &SpectralReport) -> Self {
        RecordSpectrum { status: r.status, alpha: r.fit.map(|f| f.alpha), n_traps: r.n_traps as f64 }
    }
}

impl TryFrom<&ReportJson> for RecordSpectrum {
    type Error = ProtocolError;

    fn try_from(r: &ReportJson) -> Result<Self, ProtocolError> {
        let status = match r.status.as_str() {
            "PowerLaw" => Status::PowerLaw,
            "Collapse" => Status::Collapse,
            "Rejected" => Status::Rejected,
            s => return Err(ProtocolError::BadConfig(format!("unknown status {s:?}"))),
        };
        Ok(RecordSpectrum { status, alpha: r.alpha, n_traps: r.n_traps as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub name: String,
    pub spectrum: RecordSpectrum,
    pub f1: f64,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoreOutcome {
    Scored(f64),
    GatedOut,
    Excluded,
}

impl ScoreOutcome {
    pub fn value(self) -> Option<f64> {
        match self {
            ScoreOutcome::Scored(s) => Some(s),
            _ => None,
        }
    }
}

/// `w1·F1 + w2·exp(−(α̂−center)²/2) − w3·n_traps`.
pub fn score_formula(f1: f64, alpha: f64, n_traps: f64, cfg: &ScoreConfig) -> f64 {
    let g = (-(alpha - cfg.center).powi(2) / 2.0).exp();
    cfg.w1 * f1 + cfg.w2 * g - cfg.w3 * n_traps
}

pub fn composite_score(rec: &ModelRecord, cfg: &ScoreConfig) -> ScoreOutcome {
    let s = &rec.spectrum;
    let alpha = match (s.status, s.alpha) {
        (Status::PowerLaw, Some(a)) => a,
        (Status::Rejected, Some(a)) if !cfg.exclude_non_powerlaw => a,
        _ => return ScoreOutcome::Excluded,
    };
    if rec.f1 < cfg.f1_gate {
        return ScoreOutcome::GatedOut;
    }
    ScoreOutcome::Scored(score_formula(rec.f1, alpha, s.n_traps, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    F1Only,
    SpectralComposite,
}

impl Strategy {
    pub fn parse(s: &str) -> Option<Strategy> {
        match s.to_ascii_lowercase().as_str() {
            "f1" | "f1only" | "f1-only" => Some(Strategy::F1Only),
            "composite" | "spectral" | "spectralcomposite" => Some(Strategy::SpectralComposite),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::F1Only => "F1Only",
            Strategy::SpectralComposite => "SpectralComposite",
        }
    }
}

/// Sort key: tier (0 scored, 1 gated out, 2 excluded), then value descending.
fn strategy_key(rec: &ModelRecord, strategy: Strategy, cfg: &ScoreConfig) -> (u8, f64) {
    match strategy {
        Strategy::F1Only => (0, rec.f1),
        Strategy::SpectralComposite => match composite_score(rec, cfg) {
            ScoreOutcome::Scored(s) => (0, s),
            ScoreOutcome::GatedOut => (1, rec.f1),
            ScoreOutcome::Excluded => (2, rec.f1),
        },
    }
}

fn order_by<F: Fn(&ModelRecord) -> (u8, f64)>(records: &[ModelRecord], key: F) -> Vec<String> {
    let mut keyed: Vec<((u8, f64), &str)> = records.iter().map(|r| (key(r), r.name.as_str())).collect();
    keyed.sort_by(|(ka, na), (kb, nb)| ka.0.cmp(&kb.0).then(kb.1.total_cmp(&ka.1)).then(na.cmp(nb)));
    keyed.into_iter().map(|(_, n)| n.to_string()).collect()
}

/// Labels in descending strategy order; ineligible models trail the scored
/// ones; ties break by label.
pub fn rank_models(records: &[ModelRecord], strategy: Strategy, cfg: &ScoreConfig) -> Result<Vec<String>, ProtocolError> {
    if records.len() < 2 {
        return Err(ProtocolError::TooFewModels { have: records.len(), need: 2 });
    }
    cfg.validate()?;
    Ok(order_by(records, |r| strategy_key(r, strategy, cfg)))
}

/// Labels in descending κ order.
pub fn kappa_ranking(records: &[ModelRecord]) -> Result<Vec<String>, ProtocolError> {
    for r in records {
        if r.kappa.is_none() {
            return Err(ProtocolError::MissingKappa(r.name.clone()));
        }
    }
    Ok(order_by(records, |r| (0, r.kappa.unwrap_or(f64::NAN))))
}

// ---------------------------------------------------------------------------
// rank correlation

/// Pair counts behind τ-b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TauCounts {
    n0: i64,
    ties_x: i64,
    ties_y: i64,
    ties_xy: i64,
    swaps: i64,
}

fn pairs(t: i64) -> i64 {
    t * (t - 1) / 2
}

fn tie_pairs<T: PartialEq>(sorted: &[T]) -> i64 {
    let mut total = 0;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += pairs(run);
            run = 1;
        }
    }
    total + pairs(run)
}

/// Merge sort on `v`, returning the number of inversions.
fn sort_count_swaps(v: &mut Vec<f64>) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mut right = v.split_off(n / 2);
    let mut swaps = sort_count_swaps(v) + sort_count_swaps(&mut right);
    let left = std::mem::take(v);
    let (mut i, mut j) = (0, 0);
    v.reserve(n);
    while i < left.len() && j < right.len() {
        if right[j] < left[i] {
            swaps += (left.len() - i) as i64;
            v.push(right[j]);
            j += 1;
        } else {
            v.push(left[i]);
            i += 1;
        }
    }
    v.extend_from_slice(&left[i..]);
    v.extend_from_slice(&right[j..]);
    swaps
}

/// Knight's O(n log n) pair counting.
fn tau_counts(x: &[f64], y: &[f64]) -> TauCounts {
    let mut xy: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = xy.iter().map(|p| p.0).collect();
    let ties_x = tie_pairs(&xs);
    let ties_xy = tie_pairs(&xy);
    let mut ys: Vec<f64> = xy.iter().map(|p| p.1).collect();
    let swaps = sort_count_swaps(&mut ys);
    let ties_y = tie_pairs(&ys);
    TauCounts { n0: pairs(x.len() as i64), ties_x, ties_y, ties_xy, swaps }
}

/// Tie-aware Kendall τ-b between two score vectors.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, ProtocolError> {
    if x.len() != y.len() {
        return Err(ProtocolError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(ProtocolError::TooFewObservations { have: x.len(), need: 2 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(ProtocolError::BadConfig("non-finite score".into()));
    }
    let c = tau_counts(x, y);
    let (nx, ny) = (c.n0 - c.ties_x, c.n0 - c.ties_y);
    if nx == 0 || ny == 0 {
        return Err(ProtocolError::DegenerateRanks);
    }
    // concordant minus discordant
    let s = c.n0 - c.ties_x - c.ties_y + c.ties_xy - 2 * c.swaps;
    Ok(s as f64 / ((nx as f64) * (ny as f64)).sqrt())
}

/// τ-b between two orderings of the same label set.
pub fn kendall_tau(rank_a: &[String], rank_b: &[String]) -> Result<f64, ProtocolError> {
    let set_a: BTreeSet<&String> = rank_a.iter().collect();
    let set_b: BTreeSet<&String> = rank_b.iter().collect();
    if set_a != set_b || set_a.len() != rank_a.len() || set_b.len() != rank_b.len() {
        return Err(ProtocolError::LabelMismatch);
    }
    let pos_b = |label: &String| rank_b.iter().position(|l| l == label).unwrap_or(0) as f64;
    let x: Vec<f64> = (0..rank_a.len()).map(|i| i as f64).collect();
    let y: Vec<f64> = rank_a.iter().map(pos_b).collect();
    kendall_tau_b(&x, &y)
}

/// Average ranks (1-based), ties share the mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, ProtocolError> {
    if x.len() != y.len() {
        return Err(ProtocolError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(ProtocolError::TooFewObservations { have: x.len(), need: 3 });
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(ProtocolError::DegenerateRanks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanBootstrap {
    pub rho: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_boot: usize,
    /// Resamples dropped because one side had constant ranks.
    pub n_degenerate: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Spearman ρ with a 95% percentile bootstrap interval over paired resamples.
/// Replica `r` draws from its own stream of `seed`.
pub fn spearman_bootstrap(x: &[f64], y: &[f64], n_boot: usize, seed: u64) -> Result<SpearmanBootstrap, ProtocolError> {
    let rho = spearman(x, y)?;
    if n_boot == 0 {
        return Err(ProtocolError::BadConfig("n_boot must be positive".into()));
    }
    let n = x.len();
    let mut reps = Vec::with_capacity(n_boot);
    let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
    for r in 0..n_boot {
        let mut g = rng::stream(seed, r as u64);
        for i in 0..n {
            let k = g.gen_range(0..n);
            bx[i] = x[k];
            by[i] = y[k];
        }
        if let Some(v) = pearson(&average_ranks(&bx), &average_ranks(&by)) {
            reps.push(v);
        }
    }
    let n_degenerate = n_boot - reps.len();
    if reps.is_empty() {
        return Err(ProtocolError::DegenerateRanks);
    }
    reps.sort_by(f64::total_cmp);
    Ok(SpearmanBootstrap { rho, ci_lo: quantile(&reps, 0.025), ci_hi: quantile(&reps, 0.975), n_boot, n_degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingComparison {
    pub strategy: Strategy,
    pub ranking: Vec<String>,
    pub kendall_tau: f64,
    pub spearman_rho: Option<f64>,
    pub bootstrap_ci: Option<(f64, f64)>,
}

/// Each strategy's ranking against the κ ranking. Spearman is computed on the
/// strategy key vs κ over eligible models.
pub fn compare_strategies(
    records: &[ModelRecord],
    cfg: &ScoreConfig,
    n_boot: usize,
    seed: u64,
) -> Result<Vec<RankingComparison>, ProtocolError> {
    let truth = kappa_ranking(records)?;
    let mut out = Vec::new();
    for strategy in [Strategy::F1Only, Strategy::SpectralComposite] {
        let ranking = rank_models(records, strategy, cfg)?;
        let tau = kendall_tau(&ranking, &truth)?;
        let (xs, ys): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter_map(|r| {
                let (tier, v) = strategy_key(r, strategy, cfg);
                (tier == 0).then(|| (v, r.kappa.unwrap_or(f64::NAN)))
            })
            .unzip();
        let boot = if n_boot > 0 { spearman_bootstrap(&xs, &ys, n_boot, seed).ok() } else { None };
        let rho = boot.map(|b| b.rho).or_else(|| spearman(&xs, &ys).ok());
        out.push(RankingComparison {
            strategy,
            ranking,
            kendall_tau: tau,
            spearman_rho: rho,
            bootstrap_ci: boot.map(|b| (b.ci_lo, b.ci_hi)),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightCell {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub tau: f64,
    pub n_models: usize,
}

/// τ between the composite ranking and the κ ranking for every (w1, w2) in
/// the grid, `w3` held at `cfg.w3`. Only models scored under a cell take part.
pub fn weight_sensitivity(
    records: &[ModelRecord],
    w1_grid: &[f64],
    w2_grid: &[f64],
    cfg: &ScoreConfig,
) -> Result<Vec<WeightCell>, ProtocolError> {
    kappa_ranking(records)?;
    let mut cells = Vec::new();
    for &w1 in w1_grid {
        for &w2 in w2_grid {
            let c = ScoreConfig { w1, w2, ..cfg.clone() };
            c.validate()?;
            let eligible: Vec<ModelRecord> =
                records.iter().filter(|r| composite_score(r, &c).value().is_some()).cloned().collect();
            let ranking = rank_models(&eligible, Strategy::SpectralComposite, &c)?;
            let tau = kendall_tau(&ranking, &kappa_ranking(&eligible)?)?;
            cells.push(WeightCell { w1, w2, w3: c.w3, tau, n_models: eligible.len() });
        }
    }
    Ok(cells)
}
