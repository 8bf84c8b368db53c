//! The iteration loop.
//!
//! Each iteration resets the clock, forms a candidate pool, ranks it with the
//! estimator (trained from scratch on every case judged so far) and processes
//! texts in ranked order until the time budget is spent. A case is atomic: the
//! one that crosses the budget still completes. In dynamic chunking the
//! unprocessed remainder of the pool is carried into the next iteration; in
//! static chunking it is discarded with the rest of its fixed batch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::clock::{Clock, VirtualClock, WallClock};
use crate::config::{Chunking, ClockKind, RunConfig};
use crate::corpus::{load_corpus, CorpusEntry};
use crate::engine::{EngineDescriptor, EngineHub, EngineKind, Transcription};
use crate::error::{Error, Result};
use crate::estimator::{rank, Estimator, BUILTIN_ESTIMATOR, NO_ESTIMATOR};
use crate::oracle::{CaseRecord, Outcome};
use crate::report::{Counts, IterationRow, RunReport};
use crate::store::{create_run_dir, CaseWriter, Store};

/// Mutable state carried between iterations.
#[derive(Debug, Clone)]
pub struct RunState {
    /// Dynamic mode: texts not yet processed, carried-over texts first.
    pub pending: Vec<CorpusEntry>,
    /// Static mode: the fixed batch for each iteration.
    pub batches: Vec<Vec<CorpusEntry>>,
    pub failed_tests: Vec<CaseRecord>,
    pub other_tests: Vec<CaseRecord>,
    pub iteration: u32,
    pub clock_now: f64,
}

impl RunState {
    pub fn new(corpus: &[CorpusEntry], config: &RunConfig) -> Self {
        let batches = match config.chunking {
            Chunking::Dynamic => Vec::new(),
            Chunking::Static => corpus
                .chunks(static_batch_size(corpus.len(), config).max(1))
                .map(<[CorpusEntry]>::to_vec)
                .collect(),
        };
        RunState {
            pending: corpus.to_vec(),
            batches,
            failed_tests: Vec::new(),
            other_tests: Vec::new(),
            iteration: 0,
            clock_now: 0.0,
        }
    }

    pub fn processed(&self) -> usize {
        self.failed_tests.len() + self.other_tests.len()
    }
}

/// Static batches split the corpus evenly over the iterations, never larger
/// than the visibility.
pub fn static_batch_size(corpus_len: usize, config: &RunConfig) -> usize {
    let per_iteration = corpus_len.div_ceil(config.num_iteration as usize);
    per_iteration.min(config.text_batch_size)
}

/// Candidate pool for the iteration after `state.iteration`.
pub fn next_pool(state: &RunState, config: &RunConfig) -> Vec<CorpusEntry> {
    match config.chunking {
        Chunking::Dynamic => {
            let n = config.text_batch_size.min(state.pending.len());
            state.pending[..n].to_vec()
        }
        Chunking::Static => state
            .batches
            .get(state.iteration as usize)
            .cloned()
            .unwrap_or_default(),
    }
}

pub struct RunResult {
    pub report: RunReport,
    /// Every judged case in processing order.
    pub cases: Vec<CaseRecord>,
}

pub struct RunOutput {
    pub report: RunReport,
    pub cases: Vec<CaseRecord>,
    pub run_dir: PathBuf,
}

enum CaseResult {
    Judged(CaseRecord),
    Errored(Error),
}

/// One scheduler run over an already loaded corpus and engine hub.
pub struct Runner<'a> {
    config: &'a RunConfig,
    corpus: &'a [CorpusEntry],
    hub: &'a EngineHub,
    store: &'a Store,
    sink: Option<&'a mut CaseWriter>,
}

impl<'a> Runner<'a> {
    pub fn new(config: &'a RunConfig, corpus: &'a [CorpusEntry], hub: &'a EngineHub, store: &'a Store) -> Self {
        Runner {
            config,
            corpus,
            hub,
            store,
            sink: None,
        }
    }

    /// Streams each judged case to `cases.jsonl` as it completes.
    pub fn with_sink(mut self, sink: &'a mut CaseWriter) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn execute(mut self) -> Result<RunResult> {
        let cfg = self.config;
        cfg.validate()?;
        resolve_engines(cfg, self.hub)?;

        let mut notes = Vec::new();
        if cfg.text_batch_size > self.corpus.len() {
            notes.push(format!(
                "text_batch_size {} exceeds corpus size {}; clamped",
                cfg.text_batch_size,
                self.corpus.len()
            ));
        }
        let mut clock: Box<dyn Clock> = match cfg.clock {
            ClockKind::Virtual => Box::new(VirtualClock::default()),
            ClockKind::Wall => Box::new(WallClock::default()),
        };
        let mut estimator = Estimator::from_name(&cfg.estimator);
        let mut state = RunState::new(self.corpus, cfg);
        let mut rows = Vec::new();
        let mut cases = Vec::new();

        while state.iteration < cfg.num_iteration {
            let iteration = state.iteration + 1;
            clock.reset();
            let mut pool = next_pool(&state, cfg);
            if pool.is_empty() {
                notes.push(format!("no texts left for iteration {iteration}; run ended early"));
                break;
            }

            if iteration > 1 && estimator.is_active() {
                clock.charge(cfg.training_cost);
                let ranked = estimator
                    .fit(self.hub, &state.failed_tests, &state.other_tests)
                    .and_then(|_| estimator.predict(self.hub, &pool))
                    .and_then(|probs| rank(&pool, &probs));
                match ranked {
                    Ok(r) => pool = r,
                    Err(e) => {
                        log::warn!("iteration {iteration}: {e}; keeping pool order");
                        notes.push(format!("iteration {iteration}: estimator unavailable ({e}); pool order kept"));
                    }
                }
            }

            let mut counts = Counts::default();
            let mut consumed = 0;
            for entry in &pool {
                if clock.now() >= cfg.time_budget {
                    break;
                }
                consumed += 1;
                counts.cases_processed += 1;
                match self.process_case(entry, clock.as_mut(), iteration)? {
                    CaseResult::Judged(record) => {
                        if let Some(sink) = self.sink.as_deref_mut() {
                            sink.append_case(&record)?;
                        }
                        match record.outcome_for(&cfg.target_asr) {
                            Some(Outcome::Failed) => counts.failed += 1,
                            Some(Outcome::Success) => counts.success += 1,
                            _ => counts.indeterminate += 1,
                        }
                        if record.outcome_for(&cfg.target_asr) == Some(Outcome::Failed) {
                            state.failed_tests.push(record.clone());
                        } else {
                            state.other_tests.push(record.clone());
                        }
                        cases.push(record);
                    }
                    CaseResult::Errored(e) => {
                        log::warn!("iteration {iteration}: case {} skipped: {e}", entry.index);
                        counts.engine_errors += 1;
                    }
                }
            }
            counts.clock_used = clock.now();
            state.clock_now = clock.now();

            match cfg.chunking {
                Chunking::Dynamic => {
                    let mut next: Vec<CorpusEntry> = pool[consumed..].to_vec();
                    next.extend_from_slice(&state.pending[pool.len()..]);
                    state.pending = next;
                }
                Chunking::Static => {
                    let done: std::collections::HashSet<usize> = pool.iter().map(|e| e.index).collect();
                    state.pending.retain(|e| !done.contains(&e.index));
                }
            }
            state.iteration = iteration;
            rows.push(IterationRow { iteration, counts });
        }

        let mut per_asr_failed: BTreeMap<String, u64> = cfg.asrs.iter().map(|a| (a.clone(), 0)).collect();
        for record in &cases {
            for (asr, outcome) in &record.outcomes {
                if *outcome == Outcome::Failed {
                    *per_asr_failed.entry(asr.clone()).or_default() += 1;
                }
            }
        }
        let report = RunReport::new(cfg, rows, per_asr_failed, notes);
        Ok(RunResult { report, cases })
    }

    fn process_case(&self, entry: &CorpusEntry, clock: &mut dyn Clock, iteration: u32) -> Result<CaseResult> {
        let cfg = self.config;
        let tts = self.hub.get(&cfg.tts)?;
        clock.charge(tts.virtual_cost);
        let (audio, fresh) = match self.hub.tts_generate(&cfg.tts, entry, self.store, cfg.recompute) {
            Ok(generated) => generated,
            Err(e @ Error::Engine { .. }) => return Ok(CaseResult::Errored(e)),
            Err(e) => return Err(e),
        };
        // Fresh audio invalidates any transcription cached for the old audio.
        let recompute = cfg.recompute || fresh;

        let results = self.recognize_all(&audio, recompute);
        let mut transcriptions = BTreeMap::new();
        let mut engine_error = None;
        for (asr, result) in cfg.asrs.iter().zip(results) {
            clock.charge(self.hub.get(asr)?.virtual_cost);
            match result {
                Ok(t) => {
                    transcriptions.insert(asr.clone(), t);
                }
                Err(e @ Error::Engine { .. }) => {
                    engine_error.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(e) = engine_error {
            return Ok(CaseResult::Errored(e));
        }
        let record = CaseRecord::judge(entry.clone(), audio, transcriptions, iteration, clock.now())?;
        Ok(CaseResult::Judged(record))
    }

    /// Runs every ASR on `audio`, results in `config.asrs` order.
    fn recognize_all(&self, audio: &crate::engine::AudioRef, recompute: bool) -> Vec<Result<Transcription>> {
        let cfg = self.config;
        let call = |asr: &String| {
            self.hub
                .asr_recognize(asr, audio, self.store, cfg.cache_transcriptions, recompute)
        };
        let workers = cfg.workers.min(cfg.asrs.len());
        if workers <= 1 {
            return cfg.asrs.iter().map(call).collect();
        }
        let mut slots: Vec<Option<Result<Transcription>>> = (0..cfg.asrs.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let call = &call;
                    s.spawn(move || {
                        cfg.asrs
                            .iter()
                            .enumerate()
                            .skip(w)
                            .step_by(workers)
                            .map(|(i, asr)| (i, call(asr)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("recognition worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|r| r.expect("every slot filled")).collect()
    }
}

/// Checks that every engine named by `config` exists in `hub` with the right kind.
pub fn resolve_engines(cfg: &RunConfig, hub: &EngineHub) -> Result<()> {
    hub.expect(&cfg.tts, EngineKind::Tts, "tts")?;
    for asr in &cfg.asrs {
        hub.expect(asr, EngineKind::Asr, "asrs")?;
    }
    if cfg.estimator != NO_ESTIMATOR && cfg.estimator != BUILTIN_ESTIMATOR {
        hub.expect(&cfg.estimator, EngineKind::Estimator, "estimator")?;
    }
    Ok(())
}

/// Builds the hub for `config`: declared engines plus any extra descriptors
/// (for example adapter manifests).
pub fn build_hub(config: &RunConfig, extra: &[EngineDescriptor]) -> Result<EngineHub> {
    let mut descriptors = Vec::new();
    for (name, spec) in &config.engines {
        descriptors.push(spec.clone().into_descriptor(name)?);
    }
    descriptors.extend_from_slice(extra);
    EngineHub::new(descriptors, Duration::from_secs_f64(config.adapter_timeout_s))
}

/// Full command-line run: loads the corpus, runs against an on-disk store and
/// writes `cases.jsonl`, `report.json` and `report.csv` into a fresh run
/// directory under `output_dir/runs`.
pub fn run(config: &RunConfig, extra_engines: &[EngineDescriptor]) -> Result<RunOutput> {
    config.validate()?;
    let hub = build_hub(config, extra_engines)?;
    run_with_hub(config, &hub)
}

pub fn run_with_hub(config: &RunConfig, hub: &EngineHub) -> Result<RunOutput> {
    config.validate()?;
    resolve_engines(config, hub)?;
    let corpus = load_corpus(&config.corpus, config.sample_size, config.seed)?;
    let store = Store::disk(&config.output_dir);
    let run_dir = create_run_dir(&config.output_dir)?;
    let mut sink = CaseWriter::open(&run_dir)?;
    let result = Runner::new(config, &corpus, hub, &store)
        .with_sink(&mut sink)
        .execute()?;
    result.report.write_files(&run_dir)?;
    Ok(RunOutput {
        report: result.report,
        cases: result.cases,
        run_dir,
    })
}

/// Re-reads a finished run directory and checks report and cases agree.
pub fn load_run(run_dir: &Path) -> Result<(RunReport, Vec<CaseRecord>)> {
    let report = RunReport::load(run_dir)?;
    report.validate()?;
    let cases = crate::store::load_cases(run_dir)?;
    let judged = report.totals.cases_processed - report.totals.engine_errors;
    if cases.len() as u64 != judged {
        return Err(Error::Validation(format!(
            "report counts {judged} judged cases but cases.jsonl holds {}",
            cases.len()
        )));
    }
    Ok((report, cases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_from_lines;
    use crate::engine::SimModel;

    fn unit_hub() -> EngineHub {
        EngineHub::new(
            [
                EngineDescriptor::simulated("tts", EngineKind::Tts, SimModel::default(), 1.0),
                EngineDescriptor::simulated("a", EngineKind::Asr, SimModel::default(), 1.0),
                EngineDescriptor::simulated("b", EngineKind::Asr, SimModel::default(), 1.0),
            ],
            Duration::from_secs(1),
        )
        .unwrap()
    }

    fn six() -> Vec<CorpusEntry> {
        corpus_from_lines(["one", "two", "three", "four", "five", "six"], None, 0).unwrap()
    }

    fn cfg(budget: f64, chunking: Chunking, iterations: u32, visibility: usize) -> RunConfig {
        let mut c = RunConfig::new("tts", &["a", "b"], "a");
        c.clock = ClockKind::Virtual;
        c.time_budget = budget;
        c.chunking = chunking;
        c.num_iteration = iterations;
        c.text_batch_size = visibility;
        c
    }

    fn per_iteration(r: &RunReport) -> Vec<u64> {
        r.iterations.iter().map(|i| i.counts.cases_processed).collect()
    }

    #[test]
    fn atomic_case_hand_simulation() {
        // 3 units per case, budget 7: stop is checked before cases at clock 0, 3, 6
        // and triggers at 9, so three cases per iteration.
        let corpus = six();
        let hub = unit_hub();
        let store = Store::memory();
        for chunking in [Chunking::Dynamic, Chunking::Static] {
            let c = cfg(7.0, chunking, 2, 6);
            let r = Runner::new(&c, &corpus, &hub, &store).execute().unwrap().report;
            assert_eq!(per_iteration(&r), [3, 3], "{chunking:?}");
            assert!(r.iterations.iter().all(|i| i.counts.clock_used == 9.0));
        }
    }

    #[test]
    fn unit_budget_means_one_case() {
        let corpus = six();
        let hub = unit_hub();
        let store = Store::memory();
        let r = Runner::new(&cfg(1.0, Chunking::Dynamic, 4, 6), &corpus, &hub, &store)
            .execute()
            .unwrap()
            .report;
        assert_eq!(per_iteration(&r), [1, 1, 1, 1]);
    }

    #[test]
    fn dynamic_carries_and_static_discards() {
        let corpus = six();
        let hub = unit_hub();
        let store = Store::memory();
        // Budget allows 2 cases per iteration, batches of 3.
        let dynamic = Runner::new(&cfg(4.0, Chunking::Dynamic, 3, 3), &corpus, &hub, &store)
            .execute()
            .unwrap();
        let order: Vec<usize> = dynamic.cases.iter().map(|c| c.entry.index).collect();
        assert_eq!(order, [0, 1, 2, 3, 4, 5]);

        let fixed = Runner::new(&cfg(4.0, Chunking::Static, 3, 3), &corpus, &hub, &store)
            .execute()
            .unwrap();
        let order: Vec<usize> = fixed.cases.iter().map(|c| c.entry.index).collect();
        // Batches of min(3, ceil(6/3)) = 2 fit the budget exactly.
        assert_eq!(order, [0, 1, 2, 3, 4, 5]);

        let fixed = Runner::new(&cfg(4.0, Chunking::Static, 2, 3), &corpus, &hub, &store)
            .execute()
            .unwrap();
        let order: Vec<usize> = fixed.cases.iter().map(|c| c.entry.index).collect();
        // Batches [0,1,2] and [3,4,5]; the third text of each is discarded.
        assert_eq!(order, [0, 1, 3, 4]);
    }

    #[test]
    fn next_pool_rules() {
        let corpus = corpus_from_lines(["c1", "c2", "f1", "f2", "f3", "f4", "f5"], None, 0).unwrap();
        let mut c = cfg(1.0, Chunking::Dynamic, 3, 4);
        let state = RunState::new(&corpus, &c);
        let names: Vec<String> = next_pool(&state, &c).into_iter().map(|e| e.raw_text).collect();
        assert_eq!(names, ["c1", "c2", "f1", "f2"]);

        c.text_batch_size = 50;
        assert_eq!(next_pool(&state, &c).len(), 7);

        let mut s = cfg(1.0, Chunking::Static, 3, 3);
        let mut state = RunState::new(&corpus, &s);
        state.iteration = 1;
        let names: Vec<String> = next_pool(&state, &s).into_iter().map(|e| e.raw_text).collect();
        assert_eq!(names, ["f2", "f3", "f4"]);
        s.num_iteration = 1;
        state.iteration = 5;
        assert!(next_pool(&state, &s).is_empty());
    }

    #[test]
    fn empty_pool_ends_run_with_note() {
        let corpus = six();
        let hub = unit_hub();
        let store = Store::memory();
        let r = Runner::new(&cfg(100.0, Chunking::Dynamic, 5, 6), &corpus, &hub, &store)
            .execute()
            .unwrap()
            .report;
        assert_eq!(per_iteration(&r), [6]);
        assert!(r.notes.iter().any(|n| n.contains("iteration 2")));
        r.validate().unwrap();
    }

    #[test]
    fn unknown_engine_is_config_error() {
        let corpus = six();
        let hub = unit_hub();
        let store = Store::memory();
        let mut c = cfg(7.0, Chunking::Dynamic, 1, 6);
        c.asrs.push("ghost".into());
        let err = Runner::new(&c, &corpus, &hub, &store).execute().err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn parallel_recognition_matches_sequential() {
        let corpus = six();
        let hub = EngineHub::new(
            (0..4).map(|i| {
                EngineDescriptor::simulated(
                    &format!("asr{i}"),
                    EngineKind::Asr,
                    SimModel {
                        p_sub: 0.3,
                        rng_seed: i,
                        ..Default::default()
                    },
                    1.0,
                )
            }),
            Duration::from_secs(1),
        )
        .unwrap();
        let mut c = RunConfig::new("sim-tts", &["asr0", "asr1", "asr2", "asr3"], "asr0");
        c.clock = ClockKind::Virtual;
        c.text_batch_size = 6;
        let seq = Runner::new(&c, &corpus, &hub, &Store::memory()).execute().unwrap();
        c.workers = 3;
        let par = Runner::new(&c, &corpus, &hub, &Store::memory()).execute().unwrap();
        assert_eq!(seq.cases, par.cases);
        assert_eq!(seq.report.to_json(), {
            let mut r = par.report.clone();
            r.config.workers = 1;
            r.to_json()
        });
    }

    #[test]
    fn training_cost_counts_against_budget() {
        let corpus = six();
        let hub = unit_hub();
        let store = Store::memory();
        let mut c = cfg(7.0, Chunking::Dynamic, 2, 6);
        c.estimator = BUILTIN_ESTIMATOR.into();
        c.training_cost = 5.0;
        let r = Runner::new(&c, &corpus, &hub, &store).execute().unwrap().report;
        assert_eq!(per_iteration(&r), [3, 1]);
    }
}
