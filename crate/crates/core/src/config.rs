//! Run configuration: defaults, then an optional flat `key = value` file, then
//! command-line overrides. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::protocol::{EarlyStopConfig, ScoreConfig};
use crate::rmt::AnalysisConfig;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "SPECTRAUDIT_CONFIG";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key {key:?}{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownKey { key: String, line: Option<usize> },
    #[error("bad value {value:?} for {key}")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("cannot read config {path}: {msg}")]
    BadPath { path: String, msg: String },
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::UnknownKey { .. } => "UnknownKey",
            ConfigError::BadValue { .. } => "BadValue",
            ConfigError::Syntax { .. } => "ConfigSyntax",
            ConfigError::BadPath { .. } => "BadPath",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub analysis: AnalysisConfig,
    pub early_stop: EarlyStopConfig,
    pub score: ScoreConfig,
}

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "seed",
    "bootstrap",
    "min_tail",
    "p_accept",
    "p_collapse",
    "max_candidates",
    "k_sigma",
    "lanczos_k",
    "lanczos_max_iters",
    "lanczos_check_top",
    "lanczos_rel_tol",
    "dense_threshold",
    "trim_top",
    "trim_bottom",
    "dirac_mass",
    "dirac_tol",
    "zero_fraction",
    "alpha_low",
    "tau_trap",
    "patience",
    "w1",
    "w2",
    "w3",
    "center",
    "f1_gate",
    "exclude_non_powerlaw",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.to_string(), value: value.to_string() })
}

impl RunConfig {
    /// Set one key. `seed` drives both the bootstrap and the Lanczos start vector.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let a = &mut self.analysis;
        let v = value.trim();
        match key {
            "seed" => {
                let s: u64 = parse(key, v)?;
                a.fit.seed = s;
                a.lanczos.seed = s;
            }
            "bootstrap" | "n_bootstrap" => a.fit.n_bootstrap = parse(key, v)?,
            "min_tail" => a.fit.min_tail = parse(key, v)?,
            "p_accept" => a.fit.p_accept = parse(key, v)?,
            "p_collapse" => a.fit.p_collapse = parse(key, v)?,
            "max_candidates" => a.fit.max_candidates = parse(key, v)?,
            "k_sigma" => a.traps.k_sigma = parse(key, v)?,
            "lanczos_k" => a.lanczos.k = parse(key, v)?,
            "lanczos_max_iters" => a.lanczos.max_iters = parse(key, v)?,
            "lanczos_check_top" => a.lanczos.check_top = parse(key, v)?,
            "lanczos_rel_tol" => a.lanczos.rel_tol = parse(key, v)?,
            "dense_threshold" => a.lanczos.dense_threshold = parse(key, v)?,
            "trim_top" => a.mp.trim_top = parse(key, v)?,
            "trim_bottom" => a.mp.trim_bottom = parse(key, v)?,
            "dirac_mass" => a.collapse.dirac_mass = parse(key, v)?,
            "dirac_tol" => a.collapse.dirac_tol = parse(key, v)?,
            "zero_fraction" => a.collapse.zero_fraction = parse(key, v)?,
            "alpha_low" => self.early_stop.alpha_low = parse(key, v)?,
            "tau_trap" => self.early_stop.tau_trap = parse(key, v)?,
            "patience" => self.early_stop.patience = parse(key, v)?,
            "w1" => self.score.w1 = parse(key, v)?,
            "w2" => self.score.w2 = parse(key, v)?,
            "w3" => self.score.w3 = parse(key, v)?,
            "center" => self.score.center = parse(key, v)?,
            "f1_gate" => self.score.f1_gate = parse(key, v)?,
            "exclude_non_powerlaw" => self.score.exclude_non_powerlaw = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey { key: key.to_string(), line: None }),
        }
        Ok(())
    }

    /// Apply a config file body: `key = value` (or `key: value`) lines, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').or_else(|| line.split_once(':')).ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = k.trim();
            self.set(key, v).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { key, line: Some(i + 1) },
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::BadPath { path: path.display().to_string(), msg: e.to_string() })?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.analysis.validate()?;
        self.early_stop.validate()?;
        self.score.validate()?;
        Ok(())
    }

    /// Defaults < file < overrides. The file is `explicit` if given, else the
    /// path in `env_path` (the value of [`CONFIG_ENV`]), else none.
    pub fn resolve(
        explicit: Option<&Path>,
        env_path: Option<&str>,
        overrides: &[(&str, String)],
    ) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        let file: Option<PathBuf> = explicit.map(Path::to_path_buf).or_else(|| env_path.filter(|s| !s.is_empty()).map(PathBuf::from));
        if let Some(p) = file {
            cfg.apply_file(&p)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
