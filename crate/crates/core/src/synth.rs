//! Ground-truth generators: Wishart bulks, planted Pareto tails and spikes,
//! leaf routings, clustered k-NN graphs, and scripted α trajectories.
//! Every generator is a pure function of its spec and seed.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eig::{EsdSample, EsdSource};
use crate::ingest::{ArtifactBundle, DenseMatrix, Family, IngestError, LeafCounts, Payload, SparseSymmetric};
use crate::linalg::sym_eigenvalues_desc;
use crate::plfit::{self, FitConfig};
use crate::protocol::{self, EarlyStopConfig};
use crate::repmat;
use crate::rmt::{self, MpConfig};
use crate::rng::{self, SeededRng};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error("need more than k={k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("duplicate points {0} and {1}")]
    DuplicatePoints(usize, usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl SynthError {
    pub fn kind(&self) -> &'static str {
        match self {
            SynthError::BadSpec(_) => "BadSpec",
            SynthError::TooFewPoints { .. } => "TooFewPoints",
            SynthError::DuplicatePoints(..) => "DuplicatePoints",
            SynthError::Ingest(e) => e.kind(),
        }
    }
}

fn bad(msg: impl Into<String>) -> SynthError {
    SynthError::BadSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "placement", rename_all = "kebab-case")]
pub enum SpikePlacement {
    /// Targets at `λ₊ + k·σ_tail`, both measured on the unspiked spectrum;
    /// spike `i` sits at `λ₊ + k·σ_tail·(1 + spread·i)`.
    TailSigmas { k: f64, spread: f64 },
    /// Explicit target eigenvalues.
    Eigenvalues { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum LeafLaw {
    Uniform,
    Geometric { p: f64 },
    /// i.i.d. Pareto leaf propensities.
    Pareto { alpha: f64 },
    /// One sample per leaf (an unbounded tree).
    Singleton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SynthKind {
    /// `W` with i.i.d. N(0, σ²/m) entries, m = round(n/q) rows, n columns.
    Wishart { n: usize, q: f64, sigma2: f64 },
    ParetoTail { alpha: f64, xmin: f64, n: usize },
    /// Wishart plus rank-one rows `√θ·vᵀ`, which add `θ·vvᵀ` to `WᵀW`.
    SpikedWishart { n: usize, q: f64, sigma2: f64, spikes: usize, placement: SpikePlacement },
    /// MP bulk draws plus a Pareto tail starting at `xmin` (default λ₊).
    Mixture { n: usize, tail_fraction: f64, alpha: f64, q: f64, sigma2: f64, xmin: Option<f64> },
    RoutingMatrix { n_samples: usize, n_leaves: usize, law: LeafLaw },
    /// Gaussian clusters (unit spread) with centres `separation` apart on a line.
    KnnGraph { n: usize, k: usize, clusters: usize, dim: usize, separation: f64, metric: Metric },
    /// Scripted per-epoch α (absent = collapsed) and trap counts.
    Trajectory { alphas: Vec<Option<f64>>, traps: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(flatten)]
    pub kind: SynthKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub epoch: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub traps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthArtifact {
    Bundle(ArtifactBundle),
    Trajectory(Vec<TrajectoryPoint>),
}

/// Planted quantities. Fields not meaningful for a kind are absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xmin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tail: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spikes: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spike_targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spike_thetas: Vec<f64>,
    /// λ₊ and σ_tail of the unspiked spectrum, as measured by the detectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_lambda_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_sigma_tail: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_leaves: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_stop_epoch: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub artifact: SynthArtifact,
    pub truth: GroundTruth,
    /// Leaf index of every sample (routing specs only).
    pub assignment: Option<Vec<usize>>,
}

impl SynthOutput {
    pub fn bundle(&self) -> Option<&ArtifactBundle> {
        match &self.artifact {
            SynthArtifact::Bundle(b) => Some(b),
            SynthArtifact::Trajectory(_) => None,
        }
    }
}

fn kind_name(kind: &SynthKind) -> &'static str {
    match kind {
        SynthKind::Wishart { .. } => "wishart",
        SynthKind::ParetoTail { .. } => "pareto-tail",
        SynthKind::SpikedWishart { .. } => "spiked-wishart",
        SynthKind::Mixture { .. } => "mixture",
        SynthKind::RoutingMatrix { .. } => "routing-matrix",
        SynthKind::KnnGraph { .. } => "knn-graph",
        SynthKind::Trajectory { .. } => "trajectory",
    }
}

fn check_wishart(n: usize, q: f64, sigma2: f64) -> Result<usize, SynthError> {
    if n == 0 {
        return Err(bad("n must be positive"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(bad(format!("q must lie in (0, 1], got {q}")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(bad("sigma2 must be positive"));
    }
    Ok(((n as f64) / q).round().max(n as f64) as usize)
}

/// m×n matrix of i.i.d. N(0, σ²/m) entries.
fn wishart_factor(rng: &mut SeededRng, m: usize, n: usize, sigma2: f64) -> DenseMatrix {
    let s = (sigma2 / m as f64).sqrt();
    let values = (0..m * n).map(|_| s * rng::normal(rng)).collect();
    DenseMatrix { rows: m, cols: n, values }
}

fn weights_bundle(w: DenseMatrix, generator: &str) -> Result<ArtifactBundle, SynthError> {
    Ok(ArtifactBundle::new(Family::NeuralWeights, Payload::Dense(w))?.with_meta("generator", generator))
}

fn wishart_truth(truth: &mut GroundTruth, n: usize, m: usize, sigma2: f64) {
    let q = repmat::aspect_ratio(m, n);
    let (lm, lp) = rmt::mp_edges(q, sigma2);
    truth.dim = Some(n);
    truth.q = Some(q);
    truth.sigma2 = Some(sigma2);
    truth.lambda_minus = Some(lm);
    truth.lambda_plus = Some(lp);
}

/// Spike strength that places the outlier of `C + θvvᵀ` (random unit `v`) at
/// `target`, from the secular equation `1 = θ·mean_j 1/(target − μ_j)`.
pub fn spike_theta(null_eigs: &[f64], target: f64) -> f64 {
    let g = null_eigs.iter().map(|&mu| 1.0 / (target - mu)).sum::<f64>() / null_eigs.len() as f64;
    1.0 / g
}

fn spiked_wishart(
    rng: &mut SeededRng,
    n: usize,
    q: f64,
    sigma2: f64,
    spikes: usize,
    placement: &SpikePlacement,
    truth: &mut GroundTruth,
) -> Result<ArtifactBundle, SynthError> {
    let m = check_wishart(n, q, sigma2)?;
    let w = wishart_factor(rng, m, n, sigma2);
    let null_rep = repmat::weight_correlation(&w).map_err(|e| bad(e.to_string()))?;
    let null_eigs = match &null_rep.body {
        repmat::RepBody::DenseSym(c) => sym_eigenvalues_desc(c),
        _ => unreachable!("weight correlation is dense"),
    };
    let targets: Vec<f64> = match placement {
        SpikePlacement::Eigenvalues { values } => {
            if values.len() != spikes {
                return Err(bad(format!("{} targets for {spikes} spikes", values.len())));
            }
            values.clone()
        }
        SpikePlacement::TailSigmas { k, spread } => {
            let esd = EsdSample::new(null_eigs.clone(), m, n, EsdSource::Dense).map_err(|e| bad(e.to_string()))?;
            let mp = rmt::fit_mp(&esd, &MpConfig::default()).map_err(|e| bad(e.to_string()))?;
            let est = plfit::estimate_tail(&esd.positive_ascending(), &FitConfig::default())
                .map_err(|e| bad(format!("null tail unusable for spike placement: {e}")))?;
            let s = rmt::tail_sigma(&esd, est.xmin);
            truth.null_lambda_plus = Some(mp.lambda_plus);
            truth.null_sigma_tail = Some(s);
            (0..spikes).map(|i| mp.lambda_plus + k * s * (1.0 + spread * i as f64)).collect()
        }
    };
    let top = null_eigs[0];
    if let Some(t) = targets.iter().find(|&&t| !(t > top)) {
        return Err(bad(format!("spike target {t} is not above the bulk maximum {top}")));
    }
    let thetas: Vec<f64> = targets.iter().map(|&t| spike_theta(&null_eigs, t)).collect();
    let mut values = w.values;
    for &theta in &thetas {
        let v = rng::unit_sphere(rng, n);
        values.extend(v.iter().map(|x| theta.sqrt() * x));
    }
    let spiked = DenseMatrix { rows: m + spikes, cols: n, values };
    wishart_truth(truth, n, m, sigma2);
    truth.spikes = Some(spikes);
    truth.spike_targets = targets;
    truth.spike_thetas = thetas;
    weights_bundle(spiked, "spiked-wishart")
}

/// Draws from the MP law by inverting its discretized CDF.
pub fn mp_sample(rng: &mut SeededRng, q: f64, sigma2: f64, n: usize) -> Vec<f64> {
    let (xs, ws) = rmt::mp_density_grid(q, 4096);
    let mut cdf = Vec::with_capacity(ws.len());
    let mut acc = 0.0;
    for w in &ws {
        acc += w;
        cdf.push(acc);
    }
    let (lm, lp) = rmt::mp_edges(q, 1.0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            let k = cdf.partition_point(|&c| c < u).min(xs.len() - 1);
            // linear inside the cell between neighbouring centres
            let prev = if k == 0 { 0.0 } else { cdf[k - 1] };
            let frac = if ws[k] > 0.0 { (u - prev) / ws[k] } else { 0.5 };
            let left = if k == 0 { lm } else { 0.5 * (xs[k - 1] + xs[k]) };
            let right = if k + 1 == xs.len() { lp } else { 0.5 * (xs[k] + xs[k + 1]) };
            sigma2 * (left + frac * (right - left))
        })
        .collect()
}

fn mixture(
    rng: &mut SeededRng,
    n: usize,
    tail_fraction: f64,
    alpha: f64,
    q: f64,
    sigma2: f64,
    xmin: Option<f64>,
    truth: &mut GroundTruth,
) -> Result<ArtifactBundle, SynthError> {
    if !(0.0..=1.0).contains(&tail_fraction) {
        return Err(bad("tail_fraction must lie in [0, 1]"));
    }
    let cols = n;
    let rows = check_wishart(n, q, sigma2)?;
    let (lm, lp) = rmt::mp_edges(q, sigma2);
    let xmin = xmin.unwrap_or(lp);
    let n_tail = (tail_fraction * n as f64).round() as usize;
    let mut eigs = mp_sample(rng, q, sigma2, n - n_tail);
    if n_tail > 0 {
        let seed = rng.gen::<u64>();
        eigs.extend(plfit::pareto_sample(alpha, xmin, n_tail, seed).map_err(|e| bad(e.to_string()))?);
    }
    truth.dim = Some(n);
    truth.q = Some(q);
    truth.sigma2 = Some(sigma2);
    truth.lambda_minus = Some(lm);
    truth.lambda_plus = Some(lp);
    truth.alpha = Some(alpha);
    truth.xmin = Some(xmin);
    truth.n_tail = Some(n_tail);
    Ok(ArtifactBundle::new(Family::RawEigenvalues, Payload::Eigs(eigs))?
        .with_meta("n_rows", rows.to_string())
        .with_meta("n_cols", cols.to_string())
        .with_meta("generator", "mixture"))
}

/// Leaf index per sample: one seed sample per leaf, the rest drawn from the law.
pub fn routing_assignment(rng: &mut SeededRng, n_samples: usize, n_leaves: usize, law: LeafLaw) -> Result<Vec<usize>, SynthError> {
    if n_leaves == 0 || n_samples < n_leaves {
        return Err(bad(format!("need 1 <= n_leaves ({n_leaves}) <= n_samples ({n_samples})")));
    }
    let weights: Vec<f64> = match law {
        LeafLaw::Singleton => {
            if n_samples != n_leaves {
                return Err(bad("singleton law needs n_samples == n_leaves"));
            }
            vec![1.0; n_leaves]
        }
        LeafLaw::Uniform => vec![1.0; n_leaves],
        LeafLaw::Geometric { p } => {
            if !(p > 0.0 && p < 1.0) {
                return Err(bad("geometric p must lie in (0, 1)"));
            }
            (0..n_leaves).map(|l| (1.0 - p).powi(l as i32)).collect()
        }
        LeafLaw::Pareto { alpha } => {
            if !(alpha > 1.0) {
                return Err(bad("Pareto alpha must exceed 1"));
            }
            (0..n_leaves).map(|_| rng::open01(rng).powf(-1.0 / (alpha - 1.0))).collect()
        }
    };
    let mut cum = Vec::with_capacity(n_leaves);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cum.push(acc);
    }
    let mut assign: Vec<usize> = (0..n_leaves).collect();
    for _ in n_leaves..n_samples {
        let u = rng.gen::<f64>() * acc;
        assign.push(cum.partition_point(|&c| c <= u).min(n_leaves - 1));
    }
    Ok(assign)
}

pub fn leaf_counts(assign: &[usize], n_leaves: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_leaves];
    for &l in assign {
        counts[l] += 1;
    }
    counts
}

/// The N×L binary routing matrix `M` (`M[i, l] = 1` iff sample i lands in leaf l).
pub fn routing_matrix(assign: &[usize], n_leaves: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(assign.len(), n_leaves);
    for (i, &l) in assign.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

fn distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(),
        Metric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            1.0 - dot / (na * nb)
        }
    }
}

/// Exact k-NN adjacency by full pairwise comparison, union-symmetrized, unit
/// weights, zero diagonal. Equal distances break toward the lower index.
pub fn brute_knn(points: &DenseMatrix, k: usize, metric: Metric) -> Result<SparseSymmetric, SynthError> {
    let n = points.rows;
    if k == 0 {
        return Err(bad("k must be positive"));
    }
    if n < k + 1 {
        return Err(SynthError::TooFewPoints { n, k });
    }
    points.validate()?;
    if metric == Metric::Cosine {
        if let Some(i) = (0..n).find(|&i| points.row(i).iter().all(|&v| v == 0.0)) {
            return Err(bad(format!("point {i} is the zero vector; cosine distance undefined")));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points.row(a).iter().zip(points.row(b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if points.row(w[0]).iter().zip(points.row(w[1])).all(|(x, y)| x.to_bits() == y.to_bits()) {
            return Err(SynthError::DuplicatePoints(w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    let mut edges = std::collections::BTreeSet::new();
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (distance(points.row(i), points.row(j), metric), j)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &cand[..k] {
            edges.insert((i.min(j) as u32, i.max(j) as u32));
        }
    }
    Ok(SparseSymmetric { dim: n, entries: edges.into_iter().map(|(i, j)| (i, j, 1.0)).collect() })
}

/// Connected components with at least two vertices, by breadth-first search.
pub fn graph_components(adj: &SparseSymmetric) -> usize {
    let mut nbrs = vec![Vec::new(); adj.dim];
    for &(i, j, v) in &adj.entries {
        if i != j && v > 0.0 {
            nbrs[i as usize].push(j as usize);
            nbrs[j as usize].push(i as usize);
        }
    }
    let mut seen = vec![false; adj.dim];
    let mut count = 0;
    for s in 0..adj.dim {
        if seen[s] || nbrs[s].is_empty() {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &nbrs[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    count
}

fn knn_points(rng: &mut SeededRng, n: usize, clusters: usize, dim: usize, separation: f64) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, dim);
    for i in 0..n {
        let c = i % clusters;
        for d in 0..dim {
            let centre = if d == 0 { separation * c as f64 } else { 0.0 };
            m.set(i, d, centre + rng::normal(rng));
        }
    }
    m
}

/// The trajectory plotted for the overfitting BERT run: α per epoch 1..20.
pub fn bert_overfit_trajectory() -> Vec<TrajectoryPoint> {
    const ALPHAS: [f64; 20] = [
        3.5, 3.3, 3.1, 2.9, 2.6, 2.3, 2.1, 1.9, 1.8, 1.74, 1.7, 1.65, 1.6, 1.55, 1.5, 1.45, 1.42, 1.4, 1.39, 1.38,
    ];
    ALPHAS.iter().enumerate().map(|(i, &a)| TrajectoryPoint { epoch: i as i64 + 1, alpha: Some(a), traps: 0 }).collect()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    let mut rng = rng::seeded(spec.seed);
    let mut truth = GroundTruth { kind: kind_name(&spec.kind).to_string(), seed: spec.seed, ..Default::default() };
    let mut assignment = None;
    let artifact = match &spec.kind {
        SynthKind::Wishart { n, q, sigma2 } => {
            let m = check_wishart(*n, *q, *sigma2)?;
            wishart_truth(&mut truth, *n, m, *sigma2);
            truth.spikes = Some(0);
            SynthArtifact::Bundle(weights_bundle(wishart_factor(&mut rng, m, *n, *sigma2), "wishart")?)
        }
        SynthKind::ParetoTail { alpha, xmin, n } => {
            let eigs = plfit::pareto_sample(*alpha, *xmin, *n, rng.gen()).map_err(|e| bad(e.to_string()))?;
            truth.alpha = Some(*alpha);
            truth.xmin = Some(*xmin);
            truth.n_tail = Some(*n);
            truth.dim = Some(*n);
            SynthArtifact::Bundle(ArtifactBundle::new(Family::RawEigenvalues, Payload::Eigs(eigs))?.with_meta("generator", "pareto-tail"))
        }
        SynthKind::SpikedWishart { n, q, sigma2, spikes, placement } => {
            SynthArtifact::Bundle(spiked_wishart(&mut rng, *n, *q, *sigma2, *spikes, placement, &mut truth)?)
        }
        SynthKind::Mixture { n, tail_fraction, alpha, q, sigma2, xmin } => {
            if !(*alpha > 1.0) {
                return Err(bad("alpha must exceed 1"));
            }
            SynthArtifact::Bundle(mixture(&mut rng, *n, *tail_fraction, *alpha, *q, *sigma2, *xmin, &mut truth)?)
        }
        SynthKind::RoutingMatrix { n_samples, n_leaves, law } => {
            let assign = routing_assignment(&mut rng, *n_samples, *n_leaves, *law)?;
            let counts = leaf_counts(&assign, *n_leaves);
            assignment = Some(assign);
            truth.n_leaves = Some(*n_leaves);
            truth.dim = Some(*n_samples);
            if let LeafLaw::Pareto { alpha } = law {
                truth.alpha = Some(*alpha);
            }
            SynthArtifact::Bundle(ArtifactBundle::new(Family::LeafHistogram, Payload::Leaves(LeafCounts::new(counts)?))?)
        }
        SynthKind::KnnGraph { n, k, clusters, dim, separation, metric } => {
            if *clusters == 0 || *dim == 0 {
                return Err(bad("clusters and dim must be positive"));
            }
            let pts = knn_points(&mut rng, *n, *clusters, *dim, *separation);
            let adj = brute_knn(&pts, *k, *metric)?;
            truth.components = Some(graph_components(&adj));
            truth.dim = Some(*n);
            SynthArtifact::Bundle(ArtifactBundle::new(Family::KnnGraph, Payload::Sparse(adj))?)
        }
        SynthKind::Trajectory { alphas, traps } => {
            if alphas.len() != traps.len() {
                return Err(bad(format!("{} alphas but {} trap counts", alphas.len(), traps.len())));
            }
            let points: Vec<TrajectoryPoint> = alphas
                .iter()
                .zip(traps)
                .enumerate()
                .map(|(i, (&alpha, &traps))| TrajectoryPoint { epoch: i as i64 + 1, alpha, traps })
                .collect();
            truth.first_stop_epoch =
                protocol::first_stop_epoch(alphas, traps, &EarlyStopConfig::default()).map_err(|e| bad(e.to_string()))?;
            SynthArtifact::Trajectory(points)
        }
    };
    Ok(SynthOutput { artifact, truth, assignment })
}
