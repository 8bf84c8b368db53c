//! Browser demo: JSON-in, JSON-out wrappers around the oracle, the simulated
//! noisy channel and a synthetic scheduler run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;
use xref_core::config::Chunking;
use xref_core::engine::sim;
use xref_core::estimator::{BUILTIN_ESTIMATOR, NO_ESTIMATOR};
use xref_core::scheduler::{build_hub, Runner};
use xref_core::store::Store;
use xref_core::synthetic::Scenario;
use xref_core::{classify_case, normalize_text, word_error_rate, CorpusEntry, Outcome, SimModel, Transcription};

type Demo = Result<String, String>;

fn parse<'a, T: Deserialize<'a>>(input: &'a str) -> Result<T, String> {
    serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))
}

fn emit<T: Serialize>(value: &T) -> Demo {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn wer(reference: &str, hypothesis: &str) -> Option<f64> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    word_error_rate(&r, &h).ok()
}

#[derive(Deserialize)]
struct ClassifyInput {
    reference: String,
    target: String,
    transcripts: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct ClassifyRow {
    asr: String,
    normalized: String,
    matches: bool,
    wer: Option<f64>,
    outcome_as_target: Outcome,
}

#[derive(Serialize)]
struct ClassifyOutput {
    reference: String,
    outcome: Outcome,
    rows: Vec<ClassifyRow>,
}

/// Judges one case: `{reference, target, transcripts: {asr: text}}`.
pub fn classify_json(input: &str) -> Demo {
    let input: ClassifyInput = parse(input)?;
    if input.transcripts.len() < 2 {
        return Err("cross-referencing needs at least two transcripts".into());
    }
    let entry = CorpusEntry {
        index: 0,
        norm_text: normalize_text(&input.reference),
        raw_text: input.reference,
    };
    let transcriptions: BTreeMap<String, Transcription> = input
        .transcripts
        .iter()
        .map(|(asr, raw)| (asr.clone(), Transcription::new(asr, 0, raw)))
        .collect();
    let judge = |target: &str| classify_case(&entry, &transcriptions, target).map_err(|e| e.to_string());
    let outcome = judge(&input.target)?;
    let rows = transcriptions
        .values()
        .map(|t| {
            Ok(ClassifyRow {
                asr: t.asr_name.clone(),
                normalized: t.norm.clone(),
                matches: t.norm == entry.norm_text,
                wer: wer(&entry.norm_text, &t.norm),
                outcome_as_target: judge(&t.asr_name)?,
            })
        })
        .collect::<Result<_, String>>()?;
    emit(&ClassifyOutput {
        reference: entry.norm_text,
        outcome,
        rows,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorruptInput {
    text: String,
    #[serde(default)]
    p_sub: f64,
    #[serde(default)]
    p_del: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    triggers: Vec<String>,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_samples() -> usize {
    8
}

#[derive(Serialize)]
struct CorruptSample {
    text_index: usize,
    transcript: String,
    exact: bool,
    wer: Option<f64>,
}

#[derive(Serialize)]
struct CorruptOutput {
    normalized: String,
    samples: Vec<CorruptSample>,
    exact_share: f64,
    mean_wer: Option<f64>,
}

/// Runs the simulated ASR channel on one text for `samples` call indices.
pub fn corrupt_json(input: &str) -> Demo {
    let input: CorruptInput = parse(input)?;
    if input.samples == 0 || input.samples > 1000 {
        return Err("samples must lie in 1..=1000".into());
    }
    let model = SimModel {
        p_sub: input.p_sub,
        p_del: input.p_del,
        trigger_tokens: input.triggers.iter().map(|t| normalize_text(t)).filter(|t| !t.is_empty()).collect(),
        rng_seed: input.seed,
        ..Default::default()
    };
    model.validate("demo-asr").map_err(|e| e.to_string())?;
    let normalized = normalize_text(&input.text);
    let samples: Vec<CorruptSample> = (0..input.samples)
        .map(|i| {
            let transcript = sim::recognize(&model, "demo-asr", i, &normalized);
            CorruptSample {
                text_index: i,
                exact: transcript == normalized,
                wer: wer(&normalized, &transcript),
                transcript,
            }
        })
        .collect();
    let exact_share = samples.iter().filter(|s| s.exact).count() as f64 / samples.len() as f64;
    let wers: Vec<f64> = samples.iter().filter_map(|s| s.wer).collect();
    let mean_wer = (!wers.is_empty()).then(|| wers.iter().sum::<f64>() / wers.len() as f64);
    emit(&CorruptOutput {
        normalized,
        samples,
        exact_share,
        mean_wer,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateInput {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_corpus")]
    corpus_size: usize,
    #[serde(default = "default_asrs")]
    num_asrs: usize,
    #[serde(default = "default_fraction")]
    trigger_fraction: f64,
    #[serde(default = "default_true")]
    estimator: bool,
    #[serde(default = "default_true")]
    dynamic: bool,
    visibility: Option<usize>,
    #[serde(default = "default_iterations")]
    iterations: u32,
    #[serde(default = "default_cases")]
    cases_per_iteration: u32,
    /// Visibility values for the curve; empty skips it.
    #[serde(default)]
    grid: Vec<usize>,
}

fn default_corpus() -> usize {
    300
}
fn default_asrs() -> usize {
    4
}
fn default_fraction() -> f64 {
    0.2
}
fn default_true() -> bool {
    true
}
fn default_iterations() -> u32 {
    10
}
fn default_cases() -> u32 {
    20
}

#[derive(Serialize)]
struct IterationOut {
    iteration: u32,
    processed: u64,
    failed: u64,
    success: u64,
    indeterminate: u64,
}

#[derive(Serialize)]
struct FailedExample {
    text: String,
    target_heard: String,
}

#[derive(Serialize)]
struct SimulateOutput {
    target: String,
    iterations: Vec<IterationOut>,
    total_failed: u64,
    total_processed: u64,
    per_asr_failed: BTreeMap<String, u64>,
    curve: Vec<(usize, u64)>,
    examples: Vec<FailedExample>,
}

/// Runs the scheduler on a synthetic corpus with simulated engines, plus an
/// optional visibility curve.
pub fn simulate_json(input: &str) -> Demo {
    let input: SimulateInput = parse(input)?;
    if !(2..=8).contains(&input.num_asrs) {
        return Err("num_asrs must lie in 2..=8".into());
    }
    if !(10..=2000).contains(&input.corpus_size) {
        return Err("corpus_size must lie in 10..=2000".into());
    }
    if !(0.0..=1.0).contains(&input.trigger_fraction) {
        return Err("trigger_fraction must lie in [0, 1]".into());
    }
    if input.iterations == 0 || input.iterations > 100 || input.cases_per_iteration == 0 {
        return Err("iterations must lie in 1..=100 and cases_per_iteration be positive".into());
    }
    if input.grid.len() > 12 {
        return Err("at most 12 grid values".into());
    }
    let scenario = Scenario {
        corpus_size: input.corpus_size,
        num_asrs: input.num_asrs,
        trigger_fraction: input.trigger_fraction,
        seed: input.seed,
        ..Default::default()
    };
    let corpus = scenario.corpus();
    let mut config = scenario.config();
    config.estimator = if input.estimator { BUILTIN_ESTIMATOR } else { NO_ESTIMATOR }.into();
    config.chunking = if input.dynamic { Chunking::Dynamic } else { Chunking::Static };
    config.text_batch_size = input.visibility.unwrap_or(input.corpus_size);
    config.num_iteration = input.iterations;
    config.time_budget = f64::from(input.cases_per_iteration) * (1 + input.num_asrs) as f64;
    let hub = build_hub(&config, &[]).map_err(|e| e.to_string())?;
    let store = Store::memory();
    let result = Runner::new(&config, &corpus, &hub, &store)
        .execute()
        .map_err(|e| e.to_string())?;
    let target = config.target_asr.clone();

    let mut curve = Vec::new();
    for &v in &input.grid {
        if v == 0 {
            return Err("grid values must be positive".into());
        }
        let mut c = config.clone();
        c.text_batch_size = v;
        let r = Runner::new(&c, &corpus, &hub, &Store::memory())
            .execute()
            .map_err(|e| e.to_string())?;
        curve.push((v, r.report.totals.failed));
    }

    let examples = result
        .cases
        .iter()
        .filter(|c| c.outcome_for(&target) == Some(Outcome::Failed))
        .take(6)
        .map(|c| FailedExample {
            text: c.entry.norm_text.clone(),
            target_heard: c.transcriptions[&target].norm.clone(),
        })
        .collect();
    let report = result.report;
    emit(&SimulateOutput {
        iterations: report
            .iterations
            .iter()
            .map(|row| IterationOut {
                iteration: row.iteration,
                processed: row.counts.cases_processed,
                failed: row.counts.failed,
                success: row.counts.success,
                indeterminate: row.counts.indeterminate,
            })
            .collect(),
        total_failed: report.totals.failed,
        total_processed: report.totals.cases_processed,
        per_asr_failed: report.per_asr_failed,
        curve,
        examples,
        target,
    })
}

#[wasm_bindgen]
pub fn classify(input: &str) -> Result<String, JsValue> {
    classify_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn corrupt(input: &str) -> Result<String, JsValue> {
    corrupt_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(input: &str) -> Result<String, JsValue> {
    simulate_json(input).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn call(f: fn(&str) -> Demo, input: Value) -> Value {
        serde_json::from_str(&f(&input.to_string()).unwrap()).unwrap()
    }

    #[test]
    fn classify_reports_every_view() {
        let out = call(
            classify_json,
            serde_json::json!({
                "reference": "The cat sat.",
                "target": "a",
                "transcripts": {"a": "the bat sat", "b": "THE CAT SAT", "c": "cat sat"}
            }),
        );
        assert_eq!(out["reference"], "the cat sat");
        assert_eq!(out["outcome"], "failed");
        let rows = out["rows"].as_array().unwrap();
        assert_eq!(rows[1]["outcome_as_target"], "success");
        assert_eq!(rows[2]["outcome_as_target"], "failed");
        assert!((rows[0]["wer"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn classify_rejects_bad_input() {
        assert!(classify_json("{}").is_err());
        let one = serde_json::json!({"reference": "x", "target": "a", "transcripts": {"a": "x"}});
        assert!(classify_json(&one.to_string()).is_err());
        let ghost = serde_json::json!({"reference": "x", "target": "z", "transcripts": {"a": "x", "b": "x"}});
        assert!(classify_json(&ghost.to_string()).is_err());
    }

    #[test]
    fn corrupt_is_seeded_and_triggers_fire() {
        let input = serde_json::json!({"text": "a zebra ran", "p_sub": 0.3, "seed": 7, "triggers": ["Zebra"]});
        let a = call(corrupt_json, input.clone());
        assert_eq!(a, call(corrupt_json, input));
        for s in a["samples"].as_array().unwrap() {
            assert!(!s["transcript"].as_str().unwrap().split(' ').any(|w| w == "zebra"));
        }
        assert_eq!(a["exact_share"], 0.0);

        let clean = call(corrupt_json, serde_json::json!({"text": "Hello there", "samples": 3}));
        assert_eq!(clean["exact_share"], 1.0);
        assert_eq!(clean["mean_wer"], 0.0);
        assert!(corrupt_json(r#"{"text":"x","p_sub":2}"#).is_err());
    }

    #[test]
    fn simulate_runs_with_curve() {
        let out = call(
            simulate_json,
            serde_json::json!({"corpus_size": 120, "iterations": 4, "cases_per_iteration": 10, "grid": [4, 40]}),
        );
        assert_eq!(out["target"], "asr-0");
        assert_eq!(out["total_processed"], 40);
        assert_eq!(out["iterations"].as_array().unwrap().len(), 4);
        assert_eq!(out["curve"].as_array().unwrap().len(), 2);
        assert!(simulate_json(r#"{"num_asrs":1}"#).is_err());
        assert!(simulate_json(r#"{"colour":1}"#).is_err());
    }
}
