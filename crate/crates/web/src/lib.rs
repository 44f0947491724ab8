//! Browser bindings for the spectraudit demo page.
//!
//! Every export returns a JSON string; errors come back as `{"error": ...}`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use spectraudit::plfit::{self, FitConfig};
use spectraudit::protocol::{self, ScoreConfig};
use spectraudit::rmt::{self, AnalysisConfig, TrapConfig};
use spectraudit::synth::{self, SpikePlacement, SynthKind, SynthSpec};

fn wrap(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Log-spaced points of the empirical CCDF, thinned to at most `max_points`.
fn ccdf(sorted_desc: &[f64], max_points: usize) -> Vec<[f64; 2]> {
    let n = sorted_desc.len();
    let step = n.div_ceil(max_points).max(1);
    let mut out: Vec<[f64; 2]> = (0..n).step_by(step).map(|i| [sorted_desc[i], (i + 1) as f64 / n as f64]).collect();
    out.reverse();
    out
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u32> {
    let mut h = vec![0u32; bins];
    let w = (hi - lo) / bins as f64;
    for &v in values {
        if v >= lo && v <= hi && w > 0.0 {
            h[(((v - lo) / w) as usize).min(bins - 1)] += 1;
        }
    }
    h
}

/// Draw a Pareto sample and fit its tail.
#[wasm_bindgen]
pub fn fit_pareto(alpha: f64, n: usize, n_bootstrap: usize, seed: u32) -> String {
    wrap((|| {
        let mut xs = plfit::pareto_sample(alpha, 1.0, n, seed as u64).map_err(|e| e.to_string())?;
        let cfg = FitConfig { n_bootstrap: n_bootstrap.max(1), seed: seed as u64, ..FitConfig::default() };
        let fit = plfit::fit_values(&xs, &cfg).map_err(|e| e.to_string())?;
        xs.sort_by(|a, b| b.total_cmp(a));
        Ok(json!({
            "alpha": fit.alpha,
            "xmin": fit.xmin,
            "n_tail": fit.n_tail,
            "ks_stat": fit.ks_stat,
            "ks_p": fit.ks_p,
            "accepted": fit.accepted(&cfg),
            "ccdf": ccdf(&xs, 400),
        }))
    })())
}

/// Spiked Wishart spectrum run through the full analysis.
#[wasm_bindgen]
pub fn spiked_spectrum(n: usize, q: f64, spikes: usize, spike_sigmas: f64, k_sigma: f64, seed: u32) -> String {
    wrap((|| {
        let kind = SynthKind::SpikedWishart {
            n,
            q,
            sigma2: 1.0,
            spikes,
            placement: SpikePlacement::TailSigmas { k: spike_sigmas, spread: 0.0 },
        };
        let out = synth::generate(&SynthSpec { kind, seed: seed as u64 }).map_err(|e| e.to_string())?;
        let bundle = out.bundle().ok_or("generator returned no bundle")?;
        let cfg = AnalysisConfig {
            fit: FitConfig { n_bootstrap: 100, seed: seed as u64, ..FitConfig::default() },
            traps: TrapConfig { k_sigma },
            ..AnalysisConfig::default()
        };
        let esd = spectraudit::eig::spectrum(
            &spectraudit::repmat::build(bundle).map_err(|e| e.to_string())?,
            &cfg.lanczos,
        )
        .map_err(|e| e.to_string())?;
        let report = rmt::analyze_esd(&esd, bundle.family, &bundle.meta, &cfg).map_err(|e| e.to_string())?;
        let hi = esd.eigs.first().copied().unwrap_or(1.0) * 1.02;
        Ok(json!({
            "status": report.status.as_str(),
            "alpha": report.fit.map(|f| f.alpha),
            "xmin": report.fit.map(|f| f.xmin),
            "lambda_minus": report.mp.lambda_minus,
            "lambda_plus": report.mp.lambda_plus,
            "sigma2": report.mp.sigma2,
            "traps": report.traps,
            "planted": out.truth.spike_targets,
            "threshold": report.fit.map(|f| rmt::trap_threshold(&esd, &report.mp, &f, &cfg.traps)),
            "hist_max": hi,
            "hist": histogram(&esd.eigs, 0.0, hi, 80),
        }))
    })())
}

/// Composite model-selection score, or `null` when the F1 gate rejects it.
#[wasm_bindgen]
pub fn composite_score(f1: f64, alpha: f64, n_traps: f64, w1: f64, w2: f64, w3: f64) -> String {
    wrap((|| {
        let cfg = ScoreConfig { w1, w2, w3, ..ScoreConfig::default() };
        cfg.validate().map_err(|e| e.to_string())?;
        let curve: Vec<[f64; 2]> = (0..=60)
            .map(|i| {
                let a = 1.0 + i as f64 * 0.05;
                [a, protocol::score_formula(f1, a, n_traps, &cfg)]
            })
            .collect();
        let score = (f1 >= cfg.f1_gate).then(|| protocol::score_formula(f1, alpha, n_traps, &cfg));
        Ok(json!({ "score": score, "gate": cfg.f1_gate, "curve": curve }))
    })())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn pareto_fit_roundtrip() {
        let v = parse(fit_pareto(2.5, 5000, 20, 1));
        assert!((v["alpha"].as_f64().unwrap() - 2.5).abs() < 0.15);
        assert!(v["ccdf"].as_array().unwrap().len() <= 401);
    }

    #[test]
    fn bad_input_reports_error() {
        assert!(parse(fit_pareto(0.5, 100, 10, 1))["error"].is_string());
        assert!(parse(composite_score(0.9, 3.0, 0.0, -1.0, 0.4, 0.02))["error"].is_string());
    }

    #[test]
    fn spiked_demo_finds_the_spike() {
        let v = parse(spiked_spectrum(300, 0.5, 1, 10.0, 3.0, 4));
        assert_eq!(v["traps"].as_array().unwrap().len(), 1, "{v}");
        assert_eq!(v["hist"].as_array().unwrap().len(), 80);
    }

    #[test]
    fn score_gate_and_peak() {
        let v = parse(composite_score(1.0, 3.0, 0.0, 0.4, 0.4, 0.02));
        assert!((v["score"].as_f64().unwrap() - 0.8).abs() < 1e-12);
        assert!(parse(composite_score(0.7, 3.0, 0.0, 0.4, 0.4, 0.02))["score"].is_null());
    }
}
