//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use xref_core::config::{Chunking, ClockKind};
use xref_core::corpus::corpus_from_lines;
use xref_core::engine::EngineKind;
use xref_core::estimator::{BUILTIN_ESTIMATOR, NO_ESTIMATOR};
use xref_core::scheduler::{build_hub, run, Runner};
use xref_core::store::Store;
use xref_core::synthetic::Scenario;
use xref_core::{
    classify_case, word_error_rate, CorpusEntry, EngineDescriptor, EngineHub, Outcome, RunConfig, SimModel,
    Transcription,
};

type Check = std::result::Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "oracle partition equivalence",
            limit: Some(Duration::from_secs(1)),
            check: oracle_partition,
        },
        Criterion {
            name: "reference-set monotonicity",
            limit: Some(Duration::from_secs(30)),
            check: monotonicity,
        },
        Criterion {
            name: "dynamic >= static chunking",
            limit: Some(Duration::from_secs(60)),
            check: dynamic_vs_static,
        },
        Criterion {
            name: "estimator benefit",
            limit: Some(Duration::from_secs(120)),
            check: estimator_benefit,
        },
        Criterion {
            name: "visibility effect",
            limit: Some(Duration::from_secs(120)),
            check: visibility_effect,
        },
        Criterion {
            name: "scheduler hand simulation",
            limit: None,
            check: hand_simulation,
        },
        Criterion {
            name: "determinism and cache",
            limit: None,
            check: determinism,
        },
        Criterion {
            name: "wer edit-path oracle",
            limit: None,
            check: wer_oracle,
        },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut result = (c.check)();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&result, c.limit) {
            if elapsed > limit {
                result = Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS {}: {detail} ({elapsed:.2?})", c.name),
            Err(detail) => {
                failures += 1;
                println!("FAIL {}: {detail} ({elapsed:.2?})", c.name);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn brute_force(matched: &[bool], target: usize) -> Outcome {
    if matched[target] {
        Outcome::Success
    } else if matched.iter().enumerate().any(|(i, &m)| i != target && m) {
        Outcome::Failed
    } else {
        Outcome::Indeterminate
    }
}

fn oracle_partition() -> Check {
    let entry = CorpusEntry {
        index: 0,
        raw_text: "The quick fox".into(),
        norm_text: "the quick fox".into(),
    };
    let mut checked = 0;
    for n in 2..=5usize {
        let names: Vec<String> = (0..n).map(|i| format!("asr{i}")).collect();
        for pattern in 0u32..(1 << n) {
            let matched: Vec<bool> = (0..n).map(|i| pattern & (1 << i) != 0).collect();
            let transcriptions: BTreeMap<String, Transcription> = names
                .iter()
                .zip(&matched)
                .map(|(name, &m)| {
                    let raw = if m { "the QUICK, fox!" } else { "the quick box" };
                    (name.clone(), Transcription::new(name, 0, raw))
                })
                .collect();
            for (t, target) in names.iter().enumerate() {
                let got = classify_case(&entry, &transcriptions, target).map_err(|e| e.to_string())?;
                let want = brute_force(&matched, t);
                if got != want {
                    return Err(format!("{n} ASRs, pattern {pattern:0n$b}, target {t}: got {got:?}, want {want:?}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (pattern, target) pairs agree"))
}

/// Failed-case index sets of one run, judged with each ASR as the target.
fn failed_sets(cfg: &RunConfig, corpus: &[CorpusEntry], hub: &EngineHub) -> Result<BTreeMap<String, BTreeSet<usize>>, String> {
    let result = Runner::new(cfg, corpus, hub, &Store::memory())
        .execute()
        .map_err(|e| e.to_string())?;
    let mut sets: BTreeMap<String, BTreeSet<usize>> = cfg.asrs.iter().map(|a| (a.clone(), BTreeSet::new())).collect();
    for case in &result.cases {
        for (asr, set) in sets.iter_mut() {
            if case.outcome_for(asr) == Some(Outcome::Failed) {
                set.insert(case.entry.index);
            }
        }
    }
    Ok(sets)
}

fn monotonicity() -> Check {
    let mut comparisons = 0;
    for seed in 0..100 {
        let s = Scenario {
            corpus_size: 50,
            num_asrs: 5,
            seed,
            ..Default::default()
        };
        let corpus = s.corpus();
        let mut base = s.config();
        base.estimator = NO_ESTIMATOR.into();
        base.num_iteration = 1;
        base.text_batch_size = 50;
        base.time_budget = 1e12;
        let hub = build_hub(&base, &[]).map_err(|e| e.to_string())?;
        let names = s.asr_names();
        let mut previous: Option<BTreeMap<String, BTreeSet<usize>>> = None;
        for k in 2..=names.len() {
            let mut cfg = base.clone();
            cfg.asrs = names[..k].to_vec();
            let sets = failed_sets(&cfg, &corpus, &hub)?;
            if let Some(prev) = &previous {
                for (target, a) in prev {
                    let b = &sets[target];
                    if !a.is_subset(b) {
                        let lost: Vec<_> = a.difference(b).collect();
                        return Err(format!("seed {seed}, target {target}, {} -> {k} ASRs lost {lost:?}", k - 1));
                    }
                    comparisons += 1;
                }
            }
            previous = Some(sets);
        }
    }
    Ok(format!("{comparisons} inclusions hold over 100 corpora of 50 texts"))
}

fn target_failed(s: &Scenario, adjust: impl Fn(&mut RunConfig)) -> Result<u64, String> {
    let corpus = s.corpus();
    let mut cfg = s.config();
    adjust(&mut cfg);
    let hub = build_hub(&cfg, &[]).map_err(|e| e.to_string())?;
    let result = Runner::new(&cfg, &corpus, &hub, &Store::memory())
        .execute()
        .map_err(|e| e.to_string())?;
    Ok(result.report.totals.failed)
}

fn median(mut v: Vec<u64>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn dynamic_vs_static() -> Check {
    let (mut sum_d, mut sum_s) = (0, 0);
    let mut worse = Vec::new();
    for seed in 0..20 {
        let s = Scenario { seed, ..Default::default() };
        let d = target_failed(&s, |c| c.chunking = Chunking::Dynamic)?;
        let st = target_failed(&s, |c| c.chunking = Chunking::Static)?;
        if d < st {
            worse.push(format!("seed {seed}: {d} < {st}"));
        }
        sum_d += d;
        sum_s += st;
    }
    if !worse.is_empty() {
        return Err(format!("dynamic below static: {}", worse.join(", ")));
    }
    if sum_d <= sum_s {
        return Err(format!("aggregate dynamic {sum_d} not above static {sum_s}"));
    }
    Ok(format!("dynamic {sum_d} vs static {sum_s} failed over 20 seeds, no seed worse"))
}

fn estimator_benefit() -> Check {
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let s = Scenario { seed, ..Default::default() };
        with.push(target_failed(&s, |c| c.estimator = BUILTIN_ESTIMATOR.into())?);
        without.push(target_failed(&s, |c| c.estimator = NO_ESTIMATOR.into())?);
    }
    let (m_with, m_without) = (median(with), median(without));
    let detail = format!("median failed {m_with} with {BUILTIN_ESTIMATOR} vs {m_without} with none");
    if m_with >= 1.10 * m_without && m_with > 0.0 {
        Ok(format!("{detail} (+{:.1}%)", 100.0 * (m_with / m_without - 1.0)))
    } else {
        Err(format!("{detail}; needs at least +10%"))
    }
}

fn visibility_effect() -> Check {
    let grid = [4usize, 12, 40, 120];
    let mut per_value: Vec<Vec<u64>> = vec![Vec::new(); grid.len()];
    for seed in 0..20 {
        let s = Scenario { seed, ..Default::default() };
        for (i, &v) in grid.iter().enumerate() {
            per_value[i].push(target_failed(&s, |c| c.text_batch_size = v)?);
        }
    }
    let medians: Vec<f64> = per_value.into_iter().map(median).collect();
    let curve: Vec<String> = grid.iter().zip(&medians).map(|(v, m)| format!("{v}:{m}")).collect();
    let interior = &medians[1..grid.len() - 1];
    if interior.iter().any(|&m| m > medians[0]) {
        Ok(format!("median failed by visibility {}", curve.join(" ")))
    } else {
        Err(format!("no interior value beats visibility {}: {}", grid[0], curve.join(" ")))
    }
}

fn hand_simulation() -> Check {
    let corpus = corpus_from_lines(["one", "two", "three", "four", "five", "six"], None, 0).map_err(|e| e.to_string())?;
    let hub = EngineHub::new(
        [
            EngineDescriptor::simulated("tts", EngineKind::Tts, SimModel::default(), 1.0),
            EngineDescriptor::simulated("a", EngineKind::Asr, SimModel::default(), 1.0),
            EngineDescriptor::simulated("b", EngineKind::Asr, SimModel::default(), 1.0),
        ],
        Duration::from_secs(1),
    )
    .map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for chunking in [Chunking::Dynamic, Chunking::Static] {
        let mut c = RunConfig::new("tts", &["a", "b"], "a");
        c.clock = ClockKind::Virtual;
        c.time_budget = 7.0;
        c.chunking = chunking;
        c.num_iteration = 2;
        c.text_batch_size = 6;
        let r = Runner::new(&c, &corpus, &hub, &Store::memory())
            .execute()
            .map_err(|e| e.to_string())?
            .report;
        let counts: Vec<u64> = r.iterations.iter().map(|i| i.counts.cases_processed).collect();
        let clocks: Vec<f64> = r.iterations.iter().map(|i| i.counts.clock_used).collect();
        if counts != [3, 3] || clocks != [9.0, 9.0] {
            return Err(format!("{chunking:?}: cases {counts:?}, clock {clocks:?}; want [3, 3] at clock 9"));
        }
        seen.push(format!("{chunking:?} {counts:?}"));
    }
    Ok(seen.join(", "))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = Scenario {
        corpus_size: 120,
        seed: 3,
        ..Default::default()
    };
    let corpus_path = dir.path().join("corpus.txt");
    std::fs::write(&corpus_path, s.texts().join("\n")).map_err(|e| e.to_string())?;
    let mut cfg = s.config();
    cfg.corpus = corpus_path;
    cfg.output_dir = dir.path().join("out");
    cfg.num_iteration = 4;
    cfg.time_budget = 12.0 * (1 + s.num_asrs) as f64;
    cfg.recompute = false;
    let first = run(&cfg, &[]).map_err(|e| e.to_string())?;
    let second = run(&cfg, &[]).map_err(|e| e.to_string())?;
    let read = |p: std::path::PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    let a = read(first.run_dir.join("report.json"))?;
    let b = read(second.run_dir.join("report.json"))?;
    if first.run_dir == second.run_dir {
        return Err("both runs wrote the same run directory".into());
    }
    if a != b {
        return Err("report.json differs between the cold and the warm run".into());
    }
    Ok(format!(
        "cold and warm report.json identical ({} bytes, {} failed)",
        a.len(),
        first.report.totals.failed
    ))
}

/// Minimum cost over every explicit edit path (match, substitute, insert,
/// delete), enumerated without memoisation.
fn edit_paths(r: &[u8], h: &[u8]) -> usize {
    match (r, h) {
        ([], _) => h.len(),
        (_, []) => r.len(),
        ([x, rs @ ..], [y, hs @ ..]) => {
            let diagonal = edit_paths(rs, hs) + usize::from(x != y);
            let delete = edit_paths(rs, h) + 1;
            let insert = edit_paths(r, hs) + 1;
            diagonal.min(delete).min(insert)
        }
    }
}

fn all_lists(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|l: &Vec<u8>| {
                (b'a'..=b'c').map(move |s| {
                    let mut next = l.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn wer_oracle() -> Check {
    let lists = all_lists(4);
    let words = |l: &[u8]| -> Vec<String> { l.iter().map(|&b| (b as char).to_string()).collect() };
    let mut pairs = 0;
    for r in lists.iter().filter(|l| !l.is_empty()) {
        for h in &lists {
            let want = edit_paths(r, h) as f64 / r.len() as f64;
            let got = word_error_rate(&words(r), &words(h)).map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!("{r:?} vs {h:?}: got {got}, want {want}"));
            }
            pairs += 1;
        }
    }
    if word_error_rate::<&str>(&[], &["a"]).is_ok() {
        return Err("empty reference accepted".into());
    }
    Ok(format!("{pairs} reference/hypothesis pairs agree"))
}
