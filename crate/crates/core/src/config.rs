//! `config.json` parsing and validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::engine::EngineSpec;
use crate::error::{Error, Result};
use crate::estimator::NO_ESTIMATOR;
use crate::oracle::edit_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chunking {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    Wall,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tts: String,
    pub asrs: Vec<String>,
    pub target_asr: String,
    pub estimator: String,
    pub num_iteration: u32,
    /// Per-iteration budget, seconds (wall) or units (virtual).
    pub time_budget: f64,
    /// Visibility: how many candidate texts one iteration may rank.
    pub text_batch_size: usize,
    pub chunking: Chunking,
    pub recompute: bool,
    pub seed: u64,
    pub clock: ClockKind,
    pub output_dir: PathBuf,
    pub corpus: PathBuf,
    pub sample_size: Option<usize>,
    pub engines: BTreeMap<String, EngineSpec>,
    /// Virtual time charged for each estimator training step.
    pub training_cost: f64,
    pub adapter_timeout_s: f64,
    pub cache_transcriptions: bool,
    pub workers: usize,
}

const REQUIRED: [&str; 7] = [
    "tts",
    "asrs",
    "target_asr",
    "corpus",
    "num_iteration",
    "text_batch_size",
    "output_dir",
];

const OPTIONAL: [&str; 12] = [
    "estimator",
    "time_budget",
    "chunking",
    "recompute",
    "seed",
    "clock",
    "sample_size",
    "engines",
    "training_cost",
    "adapter_timeout_s",
    "cache_transcriptions",
    "workers",
];

impl RunConfig {
    /// A configuration with every optional field at its default.
    pub fn new(tts: &str, asrs: &[&str], target_asr: &str) -> Self {
        RunConfig {
            tts: tts.into(),
            asrs: asrs.iter().map(|s| s.to_string()).collect(),
            target_asr: target_asr.into(),
            estimator: NO_ESTIMATOR.into(),
            num_iteration: 1,
            time_budget: 3600.0,
            text_batch_size: 1,
            chunking: Chunking::Dynamic,
            recompute: false,
            seed: 0,
            clock: ClockKind::Wall,
            output_dir: PathBuf::from("out"),
            corpus: PathBuf::from("corpus.txt"),
            sample_size: None,
            engines: BTreeMap::new(),
            training_cost: 0.0,
            adapter_timeout_s: 300.0,
            cache_transcriptions: true,
            workers: 1,
        }
    }

    /// Checks the invariants that do not need engine resolution.
    pub fn validate(&self) -> Result<()> {
        if self.asrs.len() < 2 {
            return Err(Error::config("asrs", "cross-referencing needs at least two ASRs"));
        }
        for (i, a) in self.asrs.iter().enumerate() {
            if self.asrs[..i].contains(a) {
                return Err(Error::config("asrs", format!("`{a}` is listed twice")));
            }
            if *a == self.tts {
                return Err(Error::config("asrs", format!("`{a}` is also the TTS")));
            }
        }
        if !self.asrs.contains(&self.target_asr) {
            return Err(Error::config(
                "target_asr",
                format!("`{}` is not one of asrs {:?}", self.target_asr, self.asrs),
            ));
        }
        if self.num_iteration == 0 {
            return Err(Error::config("num_iteration", "must be positive"));
        }
        if self.time_budget.is_nan() || self.time_budget <= 0.0 {
            return Err(Error::config("time_budget", "must be positive"));
        }
        if self.text_batch_size == 0 {
            return Err(Error::config("text_batch_size", "must be positive"));
        }
        if self.sample_size == Some(0) {
            return Err(Error::config("sample_size", "must be positive"));
        }
        if !(self.training_cost >= 0.0 && self.training_cost.is_finite()) {
            return Err(Error::config("training_cost", "must be a finite non-negative number"));
        }
        if !(self.adapter_timeout_s > 0.0 && self.adapter_timeout_s.is_finite()) {
            return Err(Error::config("adapter_timeout_s", "must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be positive"));
        }
        Ok(())
    }
}

/// Reads and validates a configuration file. Relative `corpus` and
/// `output_dir` paths are resolved against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

pub fn parse_config_str(json: &str, base_dir: &Path) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(json).map_err(|e| Error::config("config.json", e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(Error::config("config.json", "top level must be a JSON object"));
    };

    for key in obj.keys() {
        if !REQUIRED.contains(&key.as_str()) && !OPTIONAL.contains(&key.as_str()) {
            return Err(Error::config(
                key.clone(),
                format!("unknown key; nearest valid names: {}", nearest_keys(key).join(", ")),
            ));
        }
    }
    for key in REQUIRED {
        if !obj.contains_key(key) {
            return Err(Error::config(key, "required key is missing"));
        }
    }

    let mut cfg = RunConfig::new("", &[], "");
    cfg.tts = take(&mut obj, "tts")?.expect("required");
    cfg.asrs = take(&mut obj, "asrs")?.expect("required");
    cfg.target_asr = take(&mut obj, "target_asr")?.expect("required");
    cfg.corpus = base_dir.join(take::<PathBuf>(&mut obj, "corpus")?.expect("required"));
    cfg.output_dir = base_dir.join(take::<PathBuf>(&mut obj, "output_dir")?.expect("required"));
    cfg.num_iteration = take(&mut obj, "num_iteration")?.expect("required");
    cfg.text_batch_size = take(&mut obj, "text_batch_size")?.expect("required");
    if let Some(v) = take(&mut obj, "estimator")? {
        cfg.estimator = v;
    }
    if let Some(v) = take(&mut obj, "time_budget")? {
        cfg.time_budget = v;
    }
    if let Some(v) = take(&mut obj, "chunking")? {
        cfg.chunking = v;
    }
    if let Some(v) = take(&mut obj, "recompute")? {
        cfg.recompute = v;
    }
    if let Some(v) = take(&mut obj, "seed")? {
        cfg.seed = v;
    }
    if let Some(v) = take(&mut obj, "clock")? {
        cfg.clock = v;
    }
    cfg.sample_size = take(&mut obj, "sample_size")?;
    if let Some(v) = take(&mut obj, "engines")? {
        cfg.engines = v;
    }
    if let Some(v) = take(&mut obj, "training_cost")? {
        cfg.training_cost = v;
    }
    if let Some(v) = take(&mut obj, "adapter_timeout_s")? {
        cfg.adapter_timeout_s = v;
    }
    if let Some(v) = take(&mut obj, "cache_transcriptions")? {
        cfg.cache_transcriptions = v;
    }
    if let Some(v) = take(&mut obj, "workers")? {
        cfg.workers = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn take<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<Option<T>> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| Error::config(key, e.to_string())),
    }
}

fn nearest_keys(unknown: &str) -> Vec<&'static str> {
    let u: Vec<char> = unknown.chars().collect();
    let mut scored: Vec<(usize, &str)> = REQUIRED
        .iter()
        .chain(OPTIONAL.iter())
        .map(|k| (edit_distance(&u, &k.chars().collect::<Vec<_>>()), *k))
        .collect();
    scored.sort();
    let best = scored[0].0;
    scored
        .into_iter()
        .take_while(|(d, _)| *d <= best + 1)
        .take(3)
        .map(|(_, k)| k)
        .collect()
}
