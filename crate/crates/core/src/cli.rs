//! The `spectraudit` command line.
//!
//! Exit codes: 0 PowerLaw, 2 Collapse, 3 Rejected, 1 error (with a JSON error
//! object on stderr). `monitor` exits 4 once a stop verdict halts the stream.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, CONFIG_ENV};
use crate::eig;
use crate::error::Error;
use crate::ingest::{self, Family, IngestError};
use crate::plfit;
use crate::protocol::{self, EarlyStopMonitor, ModelRecord, RecordSpectrum, Strategy};
use crate::repmat;
use crate::rmt::{self, ReportJson, Status};
use crate::synth::{self, LeafLaw, Metric, SpikePlacement, SynthArtifact, SynthKind, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_COLLAPSE: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;
pub const EXIT_STOP: i32 = 4;

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::PowerLaw => EXIT_OK,
        Status::Collapse => EXIT_COLLAPSE,
        Status::Rejected => EXIT_REJECTED,
    }
}

#[derive(Debug, Parser)]
#[command(name = "spectraudit", version, about = "Spectral diagnostics for trained models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that feed the run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// Config file (flat key = value); defaults to $SPECTRAUDIT_CONFIG
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Bootstrap replicas for the KS p-value
    #[arg(long, global = true)]
    pub bootstrap: Option<usize>,
    #[arg(long = "k-sigma", global = true)]
    pub k_sigma: Option<f64>,
    #[arg(long = "alpha-low", global = true)]
    pub alpha_low: Option<f64>,
    #[arg(long = "tau-trap", global = true)]
    pub tau_trap: Option<u64>,
    #[arg(long, global = true)]
    pub w1: Option<f64>,
    #[arg(long, global = true)]
    pub w2: Option<f64>,
    #[arg(long, global = true)]
    pub w3: Option<f64>,
    #[arg(long = "f1-gate", global = true)]
    pub f1_gate: Option<f64>,
    /// Extra overrides as key=value
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigFlags {
    pub fn overrides(&self) -> Result<Vec<(&'static str, String)>, Error> {
        let mut out: Vec<(&'static str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k, v));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("bootstrap", self.bootstrap.map(|v| v.to_string()));
        push("k_sigma", self.k_sigma.map(|v| v.to_string()));
        push("alpha_low", self.alpha_low.map(|v| v.to_string()));
        push("tau_trap", self.tau_trap.map(|v| v.to_string()));
        push("w1", self.w1.map(|v| v.to_string()));
        push("w2", self.w2.map(|v| v.to_string()));
        push("w3", self.w3.map(|v| v.to_string()));
        push("f1_gate", self.f1_gate.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            let key = crate::config::KEYS
                .iter()
                .find(|&&known| known == k.trim())
                .ok_or_else(|| crate::config::ConfigError::UnknownKey { key: k.trim().to_string(), line: None })?;
            out.push((key, v.to_string()));
        }
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let env = std::env::var(CONFIG_ENV).ok();
        RunConfig::resolve(self.config.as_deref(), env.as_deref(), &self.overrides()?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full diagnostic on one or more artifacts
    Analyze(AnalyzeArgs),
    /// Power-law fit of an eigenvalue list
    Fit(FitArgs),
    /// Rank models from their reports
    Score(ScoreArgs),
    /// Early-stop verdicts for an NDJSON stream on stdin
    Monitor(MonitorArgs),
    /// Write a synthetic artifact and its ground truth
    Synth(SynthArgs),
    /// Tidy CSV tables for plotting
    Plotdata(PlotArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// SPD1 bundle or CSV eigenvalue list; repeat for several
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Expected family; must match the bundle
    #[arg(long)]
    pub family: Option<String>,
    /// Report path (a directory when several inputs are given); stdout if absent
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Include the Lanczos convergence trace
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub cfg: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, alias = "input")]
    pub eigs: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    /// F1 per model as name=value (name = report file stem)
    #[arg(long, num_args = 1..)]
    pub f1: Vec<String>,
    #[arg(long, num_args = 1..)]
    pub kappa: Vec<String>,
    /// composite or f1
    #[arg(long, default_value = "composite")]
    pub strategy: String,
    /// Bootstrap replicas for the Spearman interval
    #[arg(long = "n-boot", default_value_t = 10_000)]
    pub n_boot: usize,
    /// Also emit the τ table over w1, w2 in {0.2, ..., 0.6}
    #[arg(long)]
    pub sensitivity: bool,
    #[command(flatten)]
    pub cfg: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Read records from stdin (the only mode)
    #[arg(long)]
    pub stream: bool,
    #[arg(long, default_value_t = 1)]
    pub patience: usize,
    #[command(flatten)]
    pub cfg: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// wishart, spiked-wishart, pareto-tail, mixture, routing-matrix, knn-graph, trajectory
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.25)]
    pub q: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 3)]
    pub spikes: usize,
    /// Spike distance above λ₊ in units of the null σ_tail
    #[arg(long = "spike-sigmas", default_value_t = 10.0)]
    pub spike_sigmas: f64,
    #[arg(long, default_value_t = 2.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xmin: f64,
    #[arg(long = "tail-fraction", default_value_t = 0.2)]
    pub tail_fraction: f64,
    #[arg(long, default_value_t = 40)]
    pub leaves: usize,
    /// uniform, geometric, pareto, singleton
    #[arg(long, default_value = "uniform")]
    pub law: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 20.0)]
    pub separation: f64,
    /// Comma-separated α per epoch (empty entry = collapsed)
    #[arg(long)]
    pub alphas: Option<String>,
    /// Comma-separated trap counts per epoch
    #[arg(long)]
    pub traps: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Per-layer (or per-model) reports, in layer order
    #[arg(long, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    /// NDJSON trajectory {epoch, alpha?, traps}
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    pub kappa: Vec<String>,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn error_json(e: &Error) -> String {
    json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| IngestError::BadPath { path: path.display().to_string(), source: e })?;
    Ok(())
}

/// Analyze one artifact into its JSON report.
pub fn analyze_path(path: &Path, family: Option<Family>, cfg: &RunConfig, trace: bool) -> Result<(Status, Value), Error> {
    let bundle = ingest::read_any(path)?;
    if let Some(f) = family {
        if f != bundle.family {
            return Err(usage(format!("--family {} but the artifact is {}", f.cli_name(), bundle.family.cli_name())));
        }
    }
    let report = rmt::analyze(&bundle, &cfg.analysis)?;
    let mut j: ReportJson = report.to_json();
    j.config = Some(serde_json::to_value(cfg).expect("serializable"));
    let mut v = serde_json::to_value(&j).expect("serializable");
    if trace {
        let rep = repmat::build(&bundle)?;
        let t = match eig::convergence_report(&rep, &cfg.analysis.lanczos) {
            Ok(t) => serde_json::to_value(t).expect("serializable"),
            Err(e) => json!({ "not_applicable": e.to_string() }),
        };
        v["trace"] = t;
    }
    Ok((report.status, v))
}

fn combined_exit(statuses: &[Status]) -> i32 {
    if statuses.contains(&Status::Collapse) {
        EXIT_COLLAPSE
    } else if statuses.contains(&Status::Rejected) {
        EXIT_REJECTED
    } else {
        EXIT_OK
    }
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let cfg = a.cfg.resolve()?;
    let family = match &a.family {
        Some(f) => Some(Family::parse(f).ok_or_else(|| usage(format!("unknown family {f:?}")))?),
        None => None,
    };
    let results: Vec<Result<(Status, Value), Error>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            a.input.iter().map(|p| s.spawn(|| analyze_path(p, family, &cfg, a.trace))).collect();
        handles.into_iter().map(|h| h.join().expect("analysis thread panicked")).collect()
    });
    let mut statuses = Vec::new();
    let mut values = Vec::new();
    for r in results {
        let (s, v) = r?;
        statuses.push(s);
        values.push(v);
    }
    match (&a.report, values.len()) {
        (Some(p), 1) => write_text(p, &to_pretty(&values[0]))?,
        (Some(dir), _) => {
            std::fs::create_dir_all(dir).map_err(|e| IngestError::BadPath { path: dir.display().to_string(), source: e })?;
            for (input, v) in a.input.iter().zip(&values) {
                let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
                write_text(&dir.join(format!("{stem}.json")), &to_pretty(v))?;
            }
        }
        (None, 1) => out.write_all(to_pretty(&values[0]).as_bytes()).map_err(IngestError::Io)?,
        (None, _) => out.write_all(to_pretty(&values).as_bytes()).map_err(IngestError::Io)?,
    }
    Ok(combined_exit(&statuses))
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let cfg = a.cfg.resolve()?;
    let bundle = ingest::read_any(&a.eigs)?;
    let values = match &bundle.payload {
        ingest::Payload::Eigs(v) => v.clone(),
        _ => {
            let rep = repmat::build(&bundle)?;
            eig::spectrum(&rep, &cfg.analysis.lanczos)?.eigs
        }
    };
    let f = plfit::fit_values(&values, &cfg.analysis.fit)?;
    let v = json!({
        "alpha": f.alpha,
        "xmin": f.xmin,
        "ks_stat": f.ks_stat,
        "ks_p": f.ks_p,
        "n_tail": f.n_tail,
        "n_bootstrap": f.n_bootstrap,
        "seed": cfg.analysis.fit.seed,
    });
    out.write_all(to_pretty(&v).as_bytes()).map_err(IngestError::Io)?;
    Ok(EXIT_OK)
}

fn parse_named(pairs: &[String], what: &str) -> Result<BTreeMap<String, f64>, Error> {
    let mut m = BTreeMap::new();
    for p in pairs {
        let (k, v) = p.split_once('=').ok_or_else(|| usage(format!("--{what} expects name=value, got {p:?}")))?;
        let x: f64 = v.trim().parse().map_err(|_| usage(format!("--{what}: bad number {v:?}")))?;
        m.insert(k.trim().to_string(), x);
    }
    Ok(m)
}

fn read_report(path: &Path) -> Result<ReportJson, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::BadPath { path: path.display().to_string(), source: e })?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: not a report: {e}", path.display())))
}

fn report_name(path: &Path, r: &ReportJson) -> String {
    r.meta
        .get("name")
        .cloned()
        .unwrap_or_else(|| path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string())
}

fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let cfg = a.cfg.resolve()?;
    let strategy = Strategy::parse(&a.strategy).ok_or_else(|| usage(format!("unknown strategy {:?}", a.strategy)))?;
    let f1 = parse_named(&a.f1, "f1")?;
    let kappa = parse_named(&a.kappa, "kappa")?;
    let mut records = Vec::new();
    for p in &a.reports {
        let r = read_report(p)?;
        let name = report_name(p, &r);
        let f = *f1.get(&name).ok_or_else(|| usage(format!("no --f1 for model {name:?}")))?;
        records.push(ModelRecord {
            spectrum: RecordSpectrum::try_from(&r)?,
            f1: f,
            kappa: kappa.get(&name).copied(),
            name,
        });
    }
    let ranking = protocol::rank_models(&records, strategy, &cfg.score)?;
    let rows: Vec<Value> = ranking
        .iter()
        .map(|n| {
            let r = records.iter().find(|r| &r.name == n).expect("ranked label exists");
            let outcome = protocol::composite_score(r, &cfg.score);
            json!({
                "name": n,
                "f1": r.f1,
                "alpha": r.spectrum.alpha,
                "status": r.spectrum.status.as_str(),
                "score": outcome.value(),
                "outcome": match outcome {
                    protocol::ScoreOutcome::Scored(_) => "Scored",
                    protocol::ScoreOutcome::GatedOut => "GatedOut",
                    protocol::ScoreOutcome::Excluded => "Excluded",
                },
            })
        })
        .collect();
    let mut v = json!({ "strategy": strategy.as_str(), "ranking": rows, "config": cfg.score });
    if !kappa.is_empty() {
        v["comparisons"] = serde_json::to_value(protocol::compare_strategies(&records, &cfg.score, a.n_boot, cfg.analysis.fit.seed)?)
            .expect("serializable");
        if a.sensitivity {
            let grid = [0.2, 0.3, 0.4, 0.5, 0.6];
            v["weight_sensitivity"] = serde_json::to_value(protocol::weight_sensitivity(&records, &grid, &grid, &cfg.score)?)
                .expect("serializable");
        }
    }
    out.write_all(to_pretty(&v).as_bytes()).map_err(IngestError::Io)?;
    Ok(EXIT_OK)
}

/// One monitor input line to its output line. Malformed lines yield an error object.
fn monitor_line(m: &mut EarlyStopMonitor, line_no: usize, line: &str) -> Value {
    let rec: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({ "line": line_no, "error": { "kind": "MalformedRecord", "message": e.to_string() } }),
    };
    let bad = |msg: &str| json!({ "line": line_no, "error": { "kind": "MalformedRecord", "message": msg } });
    let Some(epoch) = rec.get("epoch").and_then(Value::as_i64) else {
        return bad("missing integer epoch");
    };
    let alpha = match rec.get("alpha") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_f64() {
            Some(a) if a.is_finite() => Some(a),
            _ => return bad("alpha must be a number or null"),
        },
    };
    let Some(traps) = rec.get("traps").and_then(Value::as_u64) else {
        return bad("traps must be a non-negative integer");
    };
    serde_json::to_value(m.step(epoch, alpha, traps)).expect("serializable")
}

fn cmd_monitor(a: &MonitorArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<i32, Error> {
    if !a.stream {
        return Err(usage("monitor reads records from stdin; pass --stream"));
    }
    let mut cfg = a.cfg.resolve()?;
    cfg.early_stop.patience = a.patience;
    let mut m = EarlyStopMonitor::new(cfg.early_stop)?;
    let mut code = EXIT_OK;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(IngestError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let v = monitor_line(&mut m, i + 1, &line);
        if v.get("halt").and_then(Value::as_bool) == Some(true) {
            code = EXIT_STOP;
        }
        writeln!(out, "{v}").map_err(IngestError::Io)?;
        out.flush().map_err(IngestError::Io)?;
    }
    Ok(code)
}

fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).collect()
}

fn synth_spec(a: &SynthArgs) -> Result<SynthSpec, Error> {
    let kind = match a.kind.as_str() {
        "wishart" => SynthKind::Wishart { n: a.n, q: a.q, sigma2: a.sigma2 },
        "spiked-wishart" => SynthKind::SpikedWishart {
            n: a.n,
            q: a.q,
            sigma2: a.sigma2,
            spikes: a.spikes,
            placement: SpikePlacement::TailSigmas { k: a.spike_sigmas, spread: 0.0 },
        },
        "pareto-tail" | "pareto" => SynthKind::ParetoTail { alpha: a.alpha, xmin: a.xmin, n: a.n },
        "mixture" => SynthKind::Mixture {
            n: a.n,
            tail_fraction: a.tail_fraction,
            alpha: a.alpha,
            q: a.q,
            sigma2: a.sigma2,
            xmin: None,
        },
        "routing-matrix" | "routing" => {
            let law = match a.law.as_str() {
                "uniform" => LeafLaw::Uniform,
                "geometric" => LeafLaw::Geometric { p: 0.1 },
                "pareto" => LeafLaw::Pareto { alpha: a.alpha },
                "singleton" => LeafLaw::Singleton,
                l => return Err(usage(format!("unknown leaf law {l:?}"))),
            };
            let leaves = if law == LeafLaw::Singleton { a.n } else { a.leaves };
            SynthKind::RoutingMatrix { n_samples: a.n, n_leaves: leaves, law }
        }
        "knn-graph" | "knn" => SynthKind::KnnGraph {
            n: a.n,
            k: a.k,
            clusters: a.clusters,
            dim: a.dim,
            separation: a.separation,
            metric: Metric::Euclidean,
        },
        "trajectory" => {
            let (alphas, traps) = match (&a.alphas, &a.traps) {
                (None, None) => {
                    let t = synth::bert_overfit_trajectory();
                    (t.iter().map(|p| p.alpha).collect(), t.iter().map(|p| p.traps).collect())
                }
                (Some(al), tr) => {
                    let alphas: Vec<Option<f64>> = split_list(al)
                        .into_iter()
                        .map(|s| if s.is_empty() { Ok(None) } else { s.parse().map(Some) })
                        .collect::<Result<_, _>>()
                        .map_err(|_| usage("--alphas: bad number"))?;
                    let traps: Vec<u64> = match tr {
                        Some(t) => split_list(t)
                            .into_iter()
                            .map(str::parse)
                            .collect::<Result<_, _>>()
                            .map_err(|_| usage("--traps: bad count"))?,
                        None => vec![0; alphas.len()],
                    };
                    (alphas, traps)
                }
                (None, Some(_)) => return Err(usage("--traps needs --alphas")),
            };
            SynthKind::Trajectory { alphas, traps }
        }
        k => return Err(usage(format!("unknown synth kind {k:?}"))),
    };
    Ok(SynthSpec { kind, seed: a.seed })
}

fn cmd_synth(a: &SynthArgs) -> Result<i32, Error> {
    let spec = synth_spec(a)?;
    let out = synth::generate(&spec)?;
    match &out.artifact {
        SynthArtifact::Bundle(b) => ingest::write_bundle(b, &a.out)?,
        SynthArtifact::Trajectory(points) => {
            let mut s = String::new();
            for p in points {
                let _ = writeln!(s, "{}", serde_json::to_string(p).expect("serializable"));
            }
            write_text(&a.out, &s)?;
        }
    }
    if let Some(t) = &a.truth {
        write_text(t, &to_pretty(&out.truth))?;
    }
    Ok(EXIT_OK)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `layer,alpha,status` rows, 1-indexed, alpha blank unless fitted and not collapsed.
pub fn layer_csv(reports: &[ReportJson]) -> String {
    let mut s = String::from("layer,alpha,status\n");
    for (i, r) in reports.iter().enumerate() {
        let alpha = if r.status == "Collapse" { None } else { r.alpha };
        let _ = writeln!(s, "{},{},{}", i + 1, fmt_opt(alpha), r.status);
    }
    s
}

pub fn epoch_csv(points: &[synth::TrajectoryPoint]) -> String {
    let mut s = String::from("epoch,alpha,traps\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.epoch, fmt_opt(p.alpha), p.traps);
    }
    s
}

pub fn alpha_kappa_csv(rows: &[(String, &ReportJson, f64)]) -> String {
    let mut s = String::from("name,alpha,kappa,status\n");
    for (name, r, k) in rows {
        let alpha = if r.status == "Collapse" { None } else { r.alpha };
        let _ = writeln!(s, "{},{},{},{}", name, fmt_opt(alpha), k, r.status);
    }
    s
}

fn cmd_plotdata(a: &PlotArgs) -> Result<i32, Error> {
    if a.reports.is_empty() && a.trajectory.is_none() {
        return Err(Error::EmptySet);
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| IngestError::BadPath { path: a.out_dir.display().to_string(), source: e })?;
    let reports: Vec<ReportJson> = a.reports.iter().map(|p| read_report(p)).collect::<Result<_, _>>()?;
    if !reports.is_empty() {
        write_text(&a.out_dir.join("layer_alpha.csv"), &layer_csv(&reports))?;
    }
    let kappa = parse_named(&a.kappa, "kappa")?;
    if !kappa.is_empty() {
        let rows: Vec<(String, &ReportJson, f64)> = a
            .reports
            .iter()
            .zip(&reports)
            .filter_map(|(p, r)| {
                let name = report_name(p, r);
                kappa.get(&name).map(|&k| (name, r, k))
            })
            .collect();
        write_text(&a.out_dir.join("alpha_kappa.csv"), &alpha_kappa_csv(&rows))?;
    }
    if let Some(t) = &a.trajectory {
        let text = std::fs::read_to_string(t).map_err(|e| IngestError::BadPath { path: t.display().to_string(), source: e })?;
        let points: Vec<synth::TrajectoryPoint> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| usage(format!("trajectory line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        write_text(&a.out_dir.join("epoch_alpha.csv"), &epoch_csv(&points))?;
    }
    Ok(EXIT_OK)
}

/// Run a parsed command; errors become exit code 1 plus a JSON line on `err`.
pub fn run(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let r = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Score(a) => cmd_score(a, out),
        Command::Monitor(a) => cmd_monitor(a, input, out),
        Command::Synth(a) => cmd_synth(a),
        Command::Plotdata(a) => cmd_plotdata(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", error_json(&e));
            EXIT_ERROR
        }
    }
}

/// Entry point for the binary: parse `std::env::args`, run, return the exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let v = json!({ "error": { "kind": "Usage", "message": e.to_string() } });
            eprintln!("{v}");
            return EXIT_ERROR;
        }
    };
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut err = std::io::stderr();
    run(&cli, &mut input, &mut out, &mut err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_status() {
        assert_eq!(exit_code(Status::PowerLaw), 0);
        assert_eq!(exit_code(Status::Collapse), 2);
        assert_eq!(exit_code(Status::Rejected), 3);
        assert_eq!(combined_exit(&[Status::PowerLaw, Status::Rejected]), 3);
        assert_eq!(combined_exit(&[Status::Rejected, Status::Collapse]), 2);
    }

    #[test]
    fn monitor_lines() {
        let mut m = EarlyStopMonitor::new(Default::default()).unwrap();
        let v = monitor_line(&mut m, 1, r#"{"epoch": 3, "traps": 5}"#);
        assert_eq!(v["verdict"], "StopTraps");
        assert_eq!(v["halt"], true);
        let e = monitor_line(&mut m, 2, "not json");
        assert_eq!(e["error"]["kind"], "MalformedRecord");
        let e = monitor_line(&mut m, 3, r#"{"epoch": 4, "alpha": 2.5, "traps": 0.5}"#);
        assert_eq!(e["error"]["kind"], "MalformedRecord");
    }

    #[test]
    fn collapsed_rows_keep_status() {
        let mk = |status: &str, alpha: Option<f64>| ReportJson {
            family: "dt".into(),
            status: status.into(),
            alpha,
            xmin: None,
            ks_p: None,
            ks_stat: None,
            n_tail: None,
            lambda_plus: 0.0,
            lambda_minus: 0.0,
            sigma2: 0.0,
            q: 1.0,
            n_traps: 0,
            traps_applicable: false,
            n_zero_eigs: 0,
            n_eigs: 1,
            dim: 1,
            bulk_fraction: 0.0,
            collapse_rule: None,
            fit_error: None,
            warnings: vec![],
            meta: Default::default(),
            config: None,
        };
        let csv = layer_csv(&[mk("PowerLaw", Some(2.5)), mk("Collapse", Some(9.0))]);
        assert_eq!(csv, "layer,alpha,status\n1,2.5,PowerLaw\n2,,Collapse\n");
    }
}
