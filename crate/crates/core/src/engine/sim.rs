//! Deterministic simulated engines.
//!
//! Every call draws from its own ChaCha8 stream seeded by
//! `fnv1a(rng_seed, engine name, 0x00, text_index)`, so a simulated engine is a
//! pure function of `(engine name, text_index)`.

use std::collections::BTreeSet;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::wav;
use crate::error::{Error, Result};

/// Noise parameters of a simulated engine.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimModel {
    pub p_sub: f64,
    pub p_del: f64,
    pub trigger_tokens: BTreeSet<String>,
    /// TTS only: probability that the produced audio is unusable.
    pub invalid_audio_rate: f64,
    pub rng_seed: u64,
}

impl SimModel {
    pub fn validate(&self, engine: &str) -> Result<()> {
        for (field, p) in [
            ("p_sub", self.p_sub),
            ("p_del", self.p_del),
            ("invalid_audio_rate", self.invalid_audio_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(
                    format!("engines.{engine}.sim.{field}"),
                    format!("probability must lie in [0, 1], got {p}"),
                ));
            }
        }
        Ok(())
    }
}

/// Sidecar metadata written next to simulated (and adapter-produced) audio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioMeta {
    pub text: String,
    pub valid: bool,
}

pub fn call_seed(rng_seed: u64, engine: &str, text_index: usize) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(rng_seed);
    h.write(engine.as_bytes());
    h.write_u8(0);
    h.write_u64(text_index as u64);
    h.finish()
}

pub fn call_stream(rng_seed: u64, engine: &str, text_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(call_seed(rng_seed, engine, text_index))
}

const DISTRACTORS: [&str; 24] = [
    "the", "a", "of", "and", "to", "in", "it", "is", "on", "at", "by", "for", "an", "as", "or",
    "so", "up", "we", "he", "she", "they", "this", "that", "but",
];

/// Replacement word for `token`; a function of the token alone and never equal to it.
pub fn distractor(token: &str) -> &'static str {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    let start = (h.finish() % DISTRACTORS.len() as u64) as usize;
    (0..DISTRACTORS.len())
        .map(|k| DISTRACTORS[(start + k) % DISTRACTORS.len()])
        .find(|d| *d != token)
        .expect("distractor table has more than one entry")
}

/// Word-level noisy channel.
///
/// Per token, in order: a trigger token is substituted without consuming a
/// draw; otherwise `u1` is drawn and the token dropped if `u1 < p_del`;
/// otherwise `u2` is drawn and the token substituted if `u2 < p_sub`.
pub fn sim_corrupt<S: AsRef<str>>(words: &[S], model: &SimModel, stream: &mut impl RngCore) -> Vec<String> {
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        let w = w.as_ref();
        if model.trigger_tokens.contains(w) {
            out.push(distractor(w).to_string());
            continue;
        }
        let u1: f64 = stream.gen();
        if u1 < model.p_del {
            continue;
        }
        let u2: f64 = stream.gen();
        if u2 < model.p_sub {
            out.push(distractor(w).to_string());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

/// Simulated synthesis of `norm_text`. The first draw of the call stream
/// decides validity; valid audio is a triangle-wave placeholder whose length
/// grows with the word count.
pub fn synthesize(model: &SimModel, engine: &str, text_index: usize, norm_text: &str) -> (Vec<u8>, AudioMeta) {
    let mut stream = call_stream(model.rng_seed, engine, text_index);
    let u: f64 = stream.gen();
    let valid = u >= model.invalid_audio_rate;
    let bytes = if valid {
        let words = norm_text.split_whitespace().count().max(1);
        let mut h = FnvHasher::default();
        h.write(norm_text.as_bytes());
        let period = 20 + (h.finish() % 60) as usize;
        wav::encode(&wav::triangle_wave(words * wav::SAMPLE_RATE as usize * 3 / 10, period))
    } else {
        wav::INVALID_PLACEHOLDER.to_vec()
    };
    (
        bytes,
        AudioMeta {
            text: norm_text.to_string(),
            valid,
        },
    )
}

/// Simulated recognition of the text carried by the audio sidecar.
pub fn recognize(model: &SimModel, engine: &str, text_index: usize, spoken: &str) -> String {
    let mut stream = call_stream(model.rng_seed, engine, text_index);
    let words: Vec<&str> = spoken.split_whitespace().collect();
    sim_corrupt(&words, model, &mut stream).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    /// Independent replay of the documented draw order.
    fn replay(input: &[&str], p_sub: f64, p_del: f64, triggers: &[&str], seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![];
        for &w in input {
            if triggers.contains(&w) {
                out.push(distractor(w).to_string());
                continue;
            }
            let u1 = rng.gen::<f64>();
            if u1 < p_del {
                continue;
            }
            let u2 = rng.gen::<f64>();
            out.push(if u2 < p_sub { distractor(w).to_string() } else { w.to_string() });
        }
        out
    }

    #[test]
    fn noiseless_channel_is_identity() {
        let m = SimModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sim_corrupt(&words("a b c d"), &m, &mut rng), words("a b c d"));
    }

    #[test]
    fn certain_deletion_empties() {
        let m = SimModel {
            p_del: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sim_corrupt(&words("a b c d"), &m, &mut rng).is_empty());
    }

    #[test]
    fn golden_corruption_seed_7() {
        let m = SimModel {
            p_sub: 0.3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let got = sim_corrupt(&words("a b c d"), &m, &mut rng);
        assert_eq!(got, replay(&words("a b c d"), 0.3, 0.0, &[], 7));
        // Frozen from the replay oracle above.
        assert_eq!(got, GOLDEN_SEED_7);
    }

    const GOLDEN_SEED_7: [&str; 4] = ["to", "b", "c", "d"];

    #[test]
    fn trigger_forces_substitution_only_there() {
        let m = SimModel {
            trigger_tokens: ["zebra".to_string()].into(),
            ..Default::default()
        };
        let out = recognize(&m, "asr", 0, "the zebra ran");
        let out = words(&out);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], "the");
        assert_eq!(out[1], distractor("zebra"));
        assert_ne!(out[1], "zebra");
        assert_eq!(out[2], "ran");
    }

    #[test]
    fn invalidity_extremes() {
        let never = SimModel::default();
        let always = SimModel {
            invalid_audio_rate: 1.0,
            ..Default::default()
        };
        for i in 0..20 {
            assert!(synthesize(&never, "tts", i, "go home").1.valid);
            assert!(!synthesize(&always, "tts", i, "go home").1.valid);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let m = SimModel {
            invalid_audio_rate: 0.5,
            rng_seed: 11,
            ..Default::default()
        };
        for i in 0..10 {
            assert_eq!(synthesize(&m, "tts", i, "go home"), synthesize(&m, "tts", i, "go home"));
        }
    }

    #[test]
    fn out_of_range_probability_rejected() {
        let m = SimModel {
            p_sub: 1.5,
            ..Default::default()
        };
        assert!(m.validate("x").is_err());
    }

    proptest! {
        #[test]
        fn distractor_never_equals_token(t in "[a-z']{1,8}") {
            prop_assert_ne!(distractor(&t), t.as_str());
        }

        #[test]
        fn corruption_matches_replay(
            input in proptest::collection::vec("[a-e]", 0..8),
            p_sub in 0.0f64..=1.0,
            p_del in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let m = SimModel { p_sub, p_del, trigger_tokens: ["c".to_string()].into(), ..Default::default() };
            let refs: Vec<&str> = input.iter().map(String::as_str).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            prop_assert_eq!(sim_corrupt(&refs, &m, &mut rng), replay(&refs, p_sub, p_del, &["c"], seed));
        }
    }
}
