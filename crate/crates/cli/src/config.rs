//! Pipeline settings: defaults, a flat `key = value` file, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use carbonet_core::bootstrap::ThresholdRule;
use clap::Args;
use serde::Serialize;

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    #[serde(skip)]
    pub input: Option<PathBuf>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub model: Option<PathBuf>,
    #[serde(skip)]
    pub two_slice: Option<PathBuf>,
    pub target: Option<String>,
    pub columns: Option<Vec<String>>,
    pub max_lag: usize,
    pub p_max: usize,
    pub q_max: usize,
    pub scale: f64,
    pub prescaled: bool,
    pub min_len: usize,
    pub resamples: usize,
    pub threshold: f64,
    pub threshold_rule: ThresholdRule,
    pub ess: f64,
    pub max_in_degree: usize,
    pub seed: u64,
    pub include_neutral: bool,
    pub mi_percent: bool,
    pub top_k: usize,
    pub delta: f64,
    pub whole_row: bool,
    pub shocks: Vec<String>,
    pub single_run: bool,
    #[serde(skip)]
    pub host: String,
    #[serde(skip)]
    pub port: u16,
    #[serde(skip)]
    pub cors_origin: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: PathBuf::from("out"),
            model: None,
            two_slice: None,
            target: None,
            columns: None,
            max_lag: 7,
            p_max: 9,
            q_max: 9,
            scale: 1000.0,
            prescaled: false,
            min_len: 500,
            resamples: 200,
            threshold: 0.5,
            threshold_rule: ThresholdRule::Undirected,
            ess: 10.0,
            max_in_degree: 4,
            seed: 1,
            include_neutral: false,
            mi_percent: false,
            top_k: 10,
            delta: 0.05,
            whole_row: false,
            shocks: Vec::new(),
            single_run: false,
            host: "127.0.0.1".into(),
            port: 8080,
            cors_origin: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| format!("`{key}`: cannot parse `{value}`: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(format!("`{key}`: expected true or false, got `{v}`")),
    }
}

fn parse_rule(value: &str) -> Result<ThresholdRule, String> {
    match value.trim() {
        "undirected" => Ok(ThresholdRule::Undirected),
        "directed" => Ok(ThresholdRule::Directed),
        v => Err(format!("`threshold-rule`: expected undirected or directed, got `{v}`")),
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl PipelineConfig {
    /// Sets one field by its flag name. Underscores and dashes are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.trim().replace('_', "-");
        let k = key.as_str();
        match k {
            "input" => self.input = Some(PathBuf::from(value.trim())),
            "out" => self.out = PathBuf::from(value.trim()),
            "model" => self.model = Some(PathBuf::from(value.trim())),
            "two-slice" => self.two_slice = Some(PathBuf::from(value.trim())),
            "target" => self.target = Some(value.trim().to_string()),
            "columns" => self.columns = Some(list(value)),
            "max-lag" => self.max_lag = parse(k, value)?,
            "p-max" => self.p_max = parse(k, value)?,
            "q-max" => self.q_max = parse(k, value)?,
            "scale" => self.scale = parse(k, value)?,
            "prescaled" => self.prescaled = parse_bool(k, value)?,
            "min-len" => self.min_len = parse(k, value)?,
            "resamples" => self.resamples = parse(k, value)?,
            "threshold" => self.threshold = parse(k, value)?,
            "threshold-rule" => self.threshold_rule = parse_rule(value)?,
            "ess" => self.ess = parse(k, value)?,
            "max-in-degree" => self.max_in_degree = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "include-neutral" => self.include_neutral = parse_bool(k, value)?,
            "mi-percent" => self.mi_percent = parse_bool(k, value)?,
            "top-k" => self.top_k = parse(k, value)?,
            "delta" => self.delta = parse(k, value)?,
            "whole-row" => self.whole_row = parse_bool(k, value)?,
            "shocks" => self.shocks = list(value),
            "single-run" => self.single_run = parse_bool(k, value)?,
            "host" => self.host = value.trim().to_string(),
            "port" => self.port = parse(k, value)?,
            "cors-origin" => self.cors_origin = Some(value.trim().to_string()),
            _ => return Err(format!("unknown setting `{key}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            self.set(k, v).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.p_max == 0 || self.q_max == 0 {
            return Err("p-max and q-max must be at least 1".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(format!("scale must be positive, got {}", self.scale));
        }
        if self.resamples == 0 {
            return Err("resamples must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(format!("threshold {} outside (0, 1]", self.threshold));
        }
        if !(self.ess > 0.0 && self.ess.is_finite()) {
            return Err(format!("ess must be positive, got {}", self.ess));
        }
        if self.max_in_degree == 0 {
            return Err("max-in-degree must be at least 1".into());
        }
        if self.top_k == 0 {
            return Err("top-k must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("delta {} outside (0, 1)", self.delta));
        }
        Ok(())
    }

    pub fn target(&self) -> Result<&str, Failure> {
        self.target
            .as_deref()
            .ok_or_else(|| Failure::input("no target node; pass --target"))
    }

    pub fn input_or(&self, default: &str) -> PathBuf {
        self.input.clone().unwrap_or_else(|| self.out.join(default))
    }

    pub fn model_or_default(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// Flat `key = value` settings file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV: prices for prep, a discretized panel for learn and dbn
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model JSON (defaults to <out>/model.json)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Two-slice model JSON, for serve
    #[arg(long)]
    pub two_slice: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated instrument columns to keep
    #[arg(long)]
    pub columns: Option<String>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long)]
    pub p_max: Option<usize>,
    #[arg(long)]
    pub q_max: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Input returns are already multiplied by the scale
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub prescaled: Option<bool>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// undirected or directed
    #[arg(long)]
    pub threshold_rule: Option<String>,
    /// Equivalent sample size of the BDeu prior
    #[arg(long)]
    pub ess: Option<f64>,
    #[arg(long)]
    pub max_in_degree: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Include Neutral evidence rows in the sweep
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub include_neutral: Option<bool>,
    /// Report mutual information multiplied by 100
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub mi_percent: Option<bool>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Tornado perturbation size
    #[arg(long)]
    pub delta: Option<f64>,
    /// Arc diameters over whole parent rows instead of per co-parent configuration
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub whole_row: Option<bool>,
    /// Comma-separated shocks, each `NODE=STATE` or several joined by `&`
    #[arg(long)]
    pub shocks: Option<String>,
    /// One transition search on the full panel instead of bootstrap consensus
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub single_run: Option<bool>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Allowed browser origin; any origin when unset
    #[arg(long)]
    pub cors_origin: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        fn p(v: &Option<PathBuf>) -> Option<String> {
            v.as_ref().map(|p| p.to_string_lossy().into_owned())
        }
        let all = [
            ("input", p(&self.input)),
            ("out", p(&self.out)),
            ("model", p(&self.model)),
            ("two-slice", p(&self.two_slice)),
            ("target", s(&self.target)),
            ("columns", s(&self.columns)),
            ("max-lag", s(&self.max_lag)),
            ("p-max", s(&self.p_max)),
            ("q-max", s(&self.q_max)),
            ("scale", s(&self.scale)),
            ("prescaled", s(&self.prescaled)),
            ("min-len", s(&self.min_len)),
            ("resamples", s(&self.resamples)),
            ("threshold", s(&self.threshold)),
            ("threshold-rule", s(&self.threshold_rule)),
            ("ess", s(&self.ess)),
            ("max-in-degree", s(&self.max_in_degree)),
            ("seed", s(&self.seed)),
            ("include-neutral", s(&self.include_neutral)),
            ("mi-percent", s(&self.mi_percent)),
            ("top-k", s(&self.top_k)),
            ("delta", s(&self.delta)),
            ("whole-row", s(&self.whole_row)),
            ("shocks", s(&self.shocks)),
            ("single-run", s(&self.single_run)),
            ("host", s(&self.host)),
            ("port", s(&self.port)),
            ("cors-origin", s(&self.cors_origin)),
        ];
        all.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            let text = read_text(path)?;
            cfg.apply_file(&text)
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        }
        for (k, v) in self.pairs() {
            cfg.set(k, &v).map_err(Failure::input)?;
        }
        cfg.validate().map_err(Failure::input)?;
        Ok(cfg)
    }
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Parses `NODE=STATE&NODE=STATE` into pairs.
pub fn parse_shock(item: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for part in item.split('&') {
        let (n, s) = part
            .split_once('=')
            .ok_or_else(|| Failure::input(format!("shock `{item}`: expected NODE=STATE")))?;
        out.insert(n.trim().to_string(), s.trim().to_string());
    }
    Ok(out)
}
