//! Loading, cleaning and indexing of the input text corpus.

use std::collections::HashSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One candidate text. `index` is the position after cleaning and sampling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub index: usize,
    pub raw_text: String,
    pub norm_text: String,
}

/// Canonical form used by the oracle when comparing transcripts.
///
/// Lowercases, replaces anything that is not a letter, digit, apostrophe or
/// whitespace with a space, collapses whitespace runs and trims.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() || c == '\'' {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Reads a corpus file (one text per line, LF or CRLF) and cleans it.
///
/// See [`corpus_from_lines`] for the cleaning and sampling rules.
pub fn load_corpus(path: &Path, sample_size: Option<usize>, seed: u64) -> Result<Vec<CorpusEntry>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: format!("corpus is not valid UTF-8: {e}"),
    })?;
    corpus_from_lines(text.lines(), sample_size, seed)
}

/// Normalizes each line, drops empties and normalized duplicates (first
/// occurrence wins), then optionally draws a seeded uniform sample that keeps
/// the original order. Indices are reassigned 0..N-1.
pub fn corpus_from_lines<'a, I>(lines: I, sample_size: Option<usize>, seed: u64) -> Result<Vec<CorpusEntry>>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut seen = HashSet::new();
    let mut cleaned: Vec<(String, String)> = Vec::new();
    for line in lines {
        let raw = line.strip_suffix('\r').unwrap_or(line);
        let norm = normalize_text(raw);
        if norm.is_empty() || !seen.insert(norm.clone()) {
            continue;
        }
        cleaned.push((raw.to_string(), norm));
    }

    let selected: Vec<(String, String)> = match sample_size {
        None => cleaned,
        Some(0) => {
            return Err(Error::config("sample_size", "must be a positive integer"));
        }
        Some(k) if k > cleaned.len() => {
            return Err(Error::config(
                "sample_size",
                format!(
                    "sample_size {k} exceeds the cleaned corpus size {}",
                    cleaned.len()
                ),
            ));
        }
        Some(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, cleaned.len(), k).into_vec();
            picked.sort_unstable();
            let mut slots: Vec<Option<(String, String)>> = cleaned.into_iter().map(Some).collect();
            picked.into_iter().filter_map(|i| slots[i].take()).collect()
        }
    };

    Ok(selected
        .into_iter()
        .enumerate()
        .map(|(index, (raw_text, norm_text))| CorpusEntry {
            index,
            raw_text,
            norm_text,
        })
        .collect())
}
