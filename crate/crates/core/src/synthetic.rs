//! Seeded synthetic scenarios: a corpus where a fixed fraction of texts carry
//! words the target ASR always mis-hears, plus matching simulated engines.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Chunking, ClockKind, RunConfig};
use crate::corpus::{corpus_from_lines, CorpusEntry};
use crate::engine::{BackendKind, EngineKind, EngineSpec, SimModel};
use crate::estimator::BUILTIN_ESTIMATOR;

pub const TRIGGERS: [&str; 8] = [
    "zebra", "quartz", "jukebox", "oxygen", "sphinx", "vortex", "wizard", "kayak",
];

const VOCABULARY: [&str; 64] = [
    "the", "a", "house", "green", "river", "over", "under", "people", "time", "little", "water",
    "small", "great", "morning", "evening", "road", "sun", "moon", "tree", "open", "door", "bird",
    "song", "long", "short", "went", "came", "home", "before", "after", "garden", "friend", "table",
    "chair", "window", "light", "dark", "rain", "field", "horse", "boat", "sea", "town", "market",
    "bread", "milk", "letter", "paper", "story", "old", "new", "red", "blue", "white", "stone",
    "wall", "path", "hill", "north", "south", "east", "west", "summer", "winter",
];

pub const TTS_NAME: &str = "sim-tts";

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub corpus_size: usize,
    /// Share of texts carrying one trigger word.
    pub trigger_fraction: f64,
    /// How many of [`TRIGGERS`] the corpus and the target use.
    pub num_triggers: usize,
    /// Inclusive word-count range of each text.
    pub words: (usize, usize),
    /// ASR count, target included. The target is `asr-0`.
    pub num_asrs: usize,
    pub invalid_audio_rate: f64,
    /// Per-word substitution probability of every ASR.
    pub asr_noise: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            corpus_size: 500,
            trigger_fraction: 0.2,
            num_triggers: 8,
            words: (4, 8),
            num_asrs: 4,
            invalid_audio_rate: 0.05,
            asr_noise: 0.01,
            seed: 0,
        }
    }
}

pub fn asr_name(i: usize) -> String {
    format!("asr-{i}")
}

impl Scenario {
    pub fn target(&self) -> String {
        asr_name(0)
    }

    pub fn triggers(&self) -> &'static [&'static str] {
        &TRIGGERS[..self.num_triggers.clamp(1, TRIGGERS.len())]
    }

    pub fn asr_names(&self) -> Vec<String> {
        (0..self.num_asrs).map(asr_name).collect()
    }

    /// Distinct texts of 4 to 8 words; exactly `round(size × fraction)` of them
    /// contain a trigger word.
    pub fn texts(&self) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n_trigger = (self.corpus_size as f64 * self.trigger_fraction).round() as usize;
        let mut flags: Vec<bool> = (0..self.corpus_size).map(|i| i < n_trigger).collect();
        flags.shuffle(&mut rng);
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(self.corpus_size);
        for triggered in flags {
            loop {
                let len = rng.gen_range(self.words.0.max(1)..=self.words.1.max(self.words.0).max(1));
                let mut words: Vec<&str> = (0..len)
                    .map(|_| *VOCABULARY.choose(&mut rng).expect("non-empty"))
                    .collect();
                if triggered {
                    let at = rng.gen_range(0..len);
                    words[at] = self.triggers().choose(&mut rng).expect("non-empty");
                }
                let text = words.join(" ");
                if seen.insert(text.clone()) {
                    out.push(text);
                    break;
                }
            }
        }
        out
    }

    pub fn corpus(&self) -> Vec<CorpusEntry> {
        let texts = self.texts();
        corpus_from_lines(texts.iter().map(String::as_str), None, self.seed)
            .expect("synthetic corpus is clean")
    }

    /// Simulated engines: the TTS, the trigger-deaf target and noisy peers.
    pub fn engines(&self) -> BTreeMap<String, EngineSpec> {
        let sim = |model: SimModel, kind| EngineSpec {
            kind,
            backend: BackendKind::Simulated,
            exec: None,
            sim: Some(model),
            virtual_cost: 1.0,
        };
        let mut engines = BTreeMap::new();
        engines.insert(
            TTS_NAME.to_string(),
            sim(
                SimModel {
                    invalid_audio_rate: self.invalid_audio_rate,
                    rng_seed: self.seed,
                    ..Default::default()
                },
                EngineKind::Tts,
            ),
        );
        for (i, name) in self.asr_names().into_iter().enumerate() {
            let trigger_tokens = if i == 0 {
                self.triggers().iter().map(|t| t.to_string()).collect()
            } else {
                Default::default()
            };
            engines.insert(
                name,
                sim(
                    SimModel {
                        p_sub: self.asr_noise,
                        trigger_tokens,
                        rng_seed: self.seed.wrapping_add(i as u64 + 1),
                        ..Default::default()
                    },
                    EngineKind::Asr,
                ),
            );
        }
        engines
    }

    /// Virtual-clock configuration with the built-in estimator: every engine
    /// call costs one unit, the whole corpus is visible and each iteration
    /// affords 20 cases.
    pub fn config(&self) -> RunConfig {
        let names = self.asr_names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut c = RunConfig::new(TTS_NAME, &refs, &self.target());
        c.estimator = BUILTIN_ESTIMATOR.into();
        c.clock = ClockKind::Virtual;
        c.chunking = Chunking::Dynamic;
        c.num_iteration = 10;
        c.text_batch_size = self.corpus_size;
        c.time_budget = 20.0 * (1 + self.num_asrs) as f64;
        c.seed = self.seed;
        c.engines = self.engines();
        c
    }
}
