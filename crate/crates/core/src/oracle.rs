//! Cross-reference oracle: classify a case for a target ASR by comparing every
//! ASR's transcript with the reference text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusEntry;
use crate::engine::{AudioRef, Transcription};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// The target transcribed the audio correctly.
    Success,
    /// The target failed but at least one other ASR succeeded.
    Failed,
    /// No ASR transcribed the audio correctly; the audio itself is suspect.
    Indeterminate,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failed => "failed",
            Outcome::Indeterminate => "indeterminate",
        }
    }
}

/// A fully judged test case. Outcomes are stored for every ASR as if it were
/// the target, since transcriptions do not depend on which ASR is under test.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub entry: CorpusEntry,
    pub audio: AudioRef,
    pub transcriptions: BTreeMap<String, Transcription>,
    pub outcomes: BTreeMap<String, Outcome>,
    pub iteration: u32,
    pub clock_time: f64,
}

impl CaseRecord {
    /// Judges `transcriptions` for every ASR and assembles the record.
    pub fn judge(
        entry: CorpusEntry,
        audio: AudioRef,
        transcriptions: BTreeMap<String, Transcription>,
        iteration: u32,
        clock_time: f64,
    ) -> Result<Self> {
        let mut outcomes = BTreeMap::new();
        for name in transcriptions.keys() {
            outcomes.insert(name.clone(), classify_case(&entry, &transcriptions, name)?);
        }
        Ok(CaseRecord {
            entry,
            audio,
            transcriptions,
            outcomes,
            iteration,
            clock_time,
        })
    }

    pub fn outcome_for(&self, target: &str) -> Option<Outcome> {
        self.outcomes.get(target).copied()
    }

    /// Checks that the stored outcomes are exactly what the oracle recomputes.
    pub fn validate(&self) -> Result<()> {
        if self.transcriptions.keys().ne(self.outcomes.keys()) {
            return Err(Error::Validation(format!(
                "case {}: outcome keys do not match transcription keys",
                self.entry.index
            )));
        }
        for (name, t) in &self.transcriptions {
            if t.asr_name != *name || t.text_index != self.entry.index {
                return Err(Error::Validation(format!(
                    "case {}: transcription under `{name}` belongs to `{}`/{}",
                    self.entry.index, t.asr_name, t.text_index
                )));
            }
        }
        for (name, stored) in &self.outcomes {
            let expected = classify_case(&self.entry, &self.transcriptions, name)?;
            if expected != *stored {
                return Err(Error::Validation(format!(
                    "case {}: outcome for `{name}` is {} but transcriptions imply {}",
                    self.entry.index,
                    stored.as_str(),
                    expected.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Exact equality of normalized forms.
pub fn matches(reference: &CorpusEntry, t: &Transcription) -> bool {
    reference.norm_text == t.norm
}

pub fn classify_case(
    reference: &CorpusEntry,
    transcriptions: &BTreeMap<String, Transcription>,
    target: &str,
) -> Result<Outcome> {
    let target_t = transcriptions.get(target).ok_or_else(|| {
        Error::config(
            "target_asr",
            format!("target `{target}` has no transcription for case {}", reference.index),
        )
    })?;
    if matches(reference, target_t) {
        return Ok(Outcome::Success);
    }
    let other_matches = transcriptions
        .iter()
        .any(|(name, t)| name != target && matches(reference, t));
    Ok(if other_matches {
        Outcome::Failed
    } else {
        Outcome::Indeterminate
    })
}

/// Unit-cost Levenshtein distance over arbitrary token slices.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut curr = vec![0; a.len() + 1];
    for (j, bj) in b.iter().enumerate() {
        curr[0] = j + 1;
        for (i, ai) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ai != bj);
            curr[i + 1] = sub.min(prev[i + 1] + 1).min(curr[i] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[a.len()]
}

/// Word error rate: edit distance over word tokens divided by reference length.
pub fn word_error_rate<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Domain("word error rate needs a non-empty reference".into()));
    }
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}
