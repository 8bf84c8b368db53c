//! Failure estimation: a two-class multinomial naive Bayes model over hashed
//! character n-grams, plus ranking of candidate texts by failure probability.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::corpus::CorpusEntry;
use crate::engine::{EngineHub, LabeledText, RequestBody};
use crate::error::{Error, Result};
use crate::oracle::CaseRecord;

/// Name of the built-in estimator in configurations.
pub const BUILTIN_ESTIMATOR: &str = "builtin-nb";
pub const NO_ESTIMATOR: &str = "none";

pub const BUCKET_BITS: u32 = 18;
pub const BUCKETS: u32 = 1 << BUCKET_BITS;
pub const SMOOTHING: f64 = 1.0;

const FAILED: usize = 0;
const OTHER: usize = 1;

/// Sparse bucket → count map of character 1-, 2- and 3-grams.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector(pub BTreeMap<u32, u32>);

pub fn bucket(ngram: &str) -> u32 {
    let mut h = FnvHasher::default();
    h.write_u8(ngram.chars().count() as u8);
    h.write(ngram.as_bytes());
    (h.finish() % u64::from(BUCKETS)) as u32
}

pub fn featurize(text: &str) -> FeatureVector {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut counts = BTreeMap::new();
    for n in 1..=3 {
        for start in 0..chars.len().saturating_sub(n - 1) {
            let from = chars[start].0;
            let to = chars.get(start + n).map_or(text.len(), |c| c.0);
            *counts.entry(bucket(&text[from..to])).or_insert(0) += 1;
        }
    }
    FeatureVector(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorModel {
    log_prior: [f64; 2],
    counts: [HashMap<u32, u64>; 2],
    totals: [u64; 2],
    pub training_size: usize,
}

impl EstimatorModel {
    fn log_likelihood(&self, class: usize, feature: u32) -> f64 {
        let c = self.counts[class].get(&feature).copied().unwrap_or(0) as f64;
        ((c + SMOOTHING) / (self.totals[class] as f64 + SMOOTHING * f64::from(BUCKETS))).ln()
    }

    /// Posterior probability that `text` yields a failed case.
    pub fn probability(&self, text: &str) -> f64 {
        let features = featurize(text);
        let mut score = self.log_prior;
        for (&f, &n) in &features.0 {
            for (class, s) in score.iter_mut().enumerate() {
                *s += f64::from(n) * self.log_likelihood(class, f);
            }
        }
        1.0 / (1.0 + (score[OTHER] - score[FAILED]).exp())
    }

    /// Add-one smoothed prior of the failed class.
    pub fn prior(&self) -> f64 {
        self.log_prior[FAILED].exp()
    }
}

/// Trains from scratch: failed cases are positives, everything else negative.
pub fn fit(failed: &[CaseRecord], others: &[CaseRecord]) -> Result<EstimatorModel> {
    fit_texts(
        failed
            .iter()
            .map(|r| (r.entry.norm_text.as_str(), true))
            .chain(others.iter().map(|r| (r.entry.norm_text.as_str(), false))),
    )
}

pub fn fit_texts<'a>(data: impl IntoIterator<Item = (&'a str, bool)>) -> Result<EstimatorModel> {
    let mut counts = [HashMap::new(), HashMap::new()];
    let mut totals = [0u64; 2];
    let mut docs = [0usize; 2];
    for (text, failed) in data {
        let class = if failed { FAILED } else { OTHER };
        docs[class] += 1;
        for (f, n) in featurize(text).0 {
            *counts[class].entry(f).or_insert(0) += u64::from(n);
            totals[class] += u64::from(n);
        }
    }
    let n = docs[FAILED] + docs[OTHER];
    if n == 0 {
        return Err(Error::Training("no labelled cases to train on".into()));
    }
    let denom = (n + 2) as f64;
    Ok(EstimatorModel {
        log_prior: [
            ((docs[FAILED] + 1) as f64 / denom).ln(),
            ((docs[OTHER] + 1) as f64 / denom).ln(),
        ],
        counts,
        totals,
        training_size: n,
    })
}

pub fn predict(model: &EstimatorModel, texts: &[CorpusEntry]) -> Vec<f64> {
    texts.iter().map(|e| model.probability(&e.norm_text)).collect()
}

/// Sorts by probability descending, ties by ascending corpus index.
pub fn rank(texts: &[CorpusEntry], probs: &[f64]) -> Result<Vec<CorpusEntry>> {
    if texts.len() != probs.len() {
        return Err(Error::Internal(format!(
            "rank: {} texts but {} probabilities",
            texts.len(),
            probs.len()
        )));
    }
    let mut order: Vec<usize> = (0..texts.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or_else(|| probs[a].is_nan().cmp(&probs[b].is_nan()))
            .then(texts[a].index.cmp(&texts[b].index))
    });
    Ok(order.into_iter().map(|i| texts[i].clone()).collect())
}

/// The estimator configured for a run.
pub enum Estimator {
    None,
    Builtin(Option<EstimatorModel>),
    External(String),
}

impl Estimator {
    pub fn from_name(name: &str) -> Self {
        match name {
            NO_ESTIMATOR => Estimator::None,
            BUILTIN_ESTIMATOR => Estimator::Builtin(None),
            other => Estimator::External(other.to_string()),
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, Estimator::None)
    }

    pub fn fit(&mut self, hub: &EngineHub, failed: &[CaseRecord], others: &[CaseRecord]) -> Result<()> {
        match self {
            Estimator::None => Ok(()),
            Estimator::Builtin(model) => {
                *model = Some(fit(failed, others)?);
                Ok(())
            }
            Estimator::External(name) => {
                if failed.is_empty() && others.is_empty() {
                    return Err(Error::Training("no labelled cases to train on".into()));
                }
                let data = failed
                    .iter()
                    .map(|r| (r, 1))
                    .chain(others.iter().map(|r| (r, 0)))
                    .map(|(r, label)| LabeledText {
                        text: r.entry.norm_text.clone(),
                        label,
                    })
                    .collect();
                hub.adapter_call(name, RequestBody::Fit { data })
                    .map(|_| ())
                    .map_err(|e| Error::Training(e.to_string()))
            }
        }
    }

    pub fn predict(&self, hub: &EngineHub, texts: &[CorpusEntry]) -> Result<Vec<f64>> {
        match self {
            Estimator::None => Ok(vec![0.0; texts.len()]),
            Estimator::Builtin(Some(model)) => Ok(predict(model, texts)),
            Estimator::Builtin(None) => Err(Error::Training("estimator used before training".into())),
            Estimator::External(name) => {
                let reply = hub
                    .adapter_call(
                        name,
                        RequestBody::Predict {
                            texts: texts.iter().map(|e| e.norm_text.clone()).collect(),
                        },
                    )
                    .map_err(|e| Error::Training(e.to_string()))?;
                let probs = reply
                    .probs
                    .ok_or_else(|| Error::Training(format!("`{name}` replied without `probs`")))?;
                if probs.len() != texts.len() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::Training(format!(
                        "`{name}` returned {} probabilities for {} texts or values outside [0, 1]",
                        probs.len(),
                        texts.len()
                    )));
                }
                Ok(probs)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(index: usize, text: &str) -> CorpusEntry {
        CorpusEntry {
            index,
            raw_text: text.into(),
            norm_text: text.into(),
        }
    }

    /// Textbook multinomial NB over exact (unhashed) n-gram strings.
    fn oracle_posterior(train: &[(&str, bool)], text: &str) -> f64 {
        fn grams(t: &str) -> Vec<String> {
            let c: Vec<char> = t.chars().collect();
            let mut out = vec![];
            for n in 1..=3 {
                for w in c.windows(n) {
                    out.push(w.iter().collect());
                }
            }
            out
        }
        let v = f64::from(BUCKETS);
        let mut score = [0.0f64; 2];
        for (class, label) in [(0, true), (1, false)] {
            let docs: Vec<&str> = train.iter().filter(|d| d.1 == label).map(|d| d.0).collect();
            let all: Vec<String> = docs.iter().flat_map(|d| grams(d)).collect();
            score[class] = ((docs.len() + 1) as f64 / (train.len() + 2) as f64).ln();
            for g in grams(text) {
                let c = all.iter().filter(|x| **x == g).count() as f64;
                score[class] += ((c + 1.0) / (all.len() as f64 + v)).ln();
            }
        }
        1.0 / (1.0 + (score[1] - score[0]).exp())
    }

    const Z_TRAIN: [(&str, bool); 6] = [
        ("zoo", true),
        ("lazy", true),
        ("fizz", true),
        ("apple", false),
        ("pear", false),
        ("plum", false),
    ];

    #[test]
    fn z_model_matches_hand_computation() {
        let model = fit_texts(Z_TRAIN).unwrap();
        let zebra = model.probability("zebra");
        let apple = model.probability("apple");
        assert!((zebra - oracle_posterior(&Z_TRAIN, "zebra")).abs() < 1e-12);
        assert!((apple - oracle_posterior(&Z_TRAIN, "apple")).abs() < 1e-12);
        assert!(zebra > apple, "{zebra} vs {apple}");
    }

    #[test]
    fn single_class_prior_dominates() {
        let model = fit_texts([("zoo", true), ("buzz", true)]).unwrap();
        assert!((model.prior() - 0.75).abs() < 1e-12);
        assert!((model.probability("") - 0.75).abs() < 1e-12);
        assert!(model.probability("zoo") > 0.5);
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(matches!(fit(&[], &[]), Err(Error::Training(_))));
    }

    #[test]
    fn featurize_counts() {
        assert!(featurize("").0.is_empty());
        let total: u32 = featurize("abcd").0.values().sum();
        assert_eq!(total, 4 + 3 + 2);
        let multi: u32 = featurize("ü'ß").0.values().sum();
        assert_eq!(multi, 3 + 2 + 1);
    }

    #[test]
    fn rank_examples() {
        let texts = [e(0, "a"), e(1, "b"), e(2, "c")];
        let idx = |v: Vec<CorpusEntry>| v.into_iter().map(|e| e.index).collect::<Vec<_>>();
        assert_eq!(idx(rank(&texts, &[0.2, 0.9, 0.9]).unwrap()), [1, 2, 0]);
        assert_eq!(idx(rank(&texts, &[0.5, 0.5, 0.5]).unwrap()), [0, 1, 2]);
        assert_eq!(idx(rank(&texts, &[0.9, 0.5, 0.1]).unwrap()), [0, 1, 2]);
        assert!(matches!(rank(&texts, &[0.1]), Err(Error::Internal(_))));
    }

    proptest! {
        #[test]
        fn rank_is_a_monotone_invariant_permutation(probs in proptest::collection::vec(0.0f64..=1.0, 0..20)) {
            let texts: Vec<CorpusEntry> = (0..probs.len()).map(|i| e(i, "x")).collect();
            let ranked = rank(&texts, &probs).unwrap();
            let mut seen: Vec<usize> = ranked.iter().map(|e| e.index).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..probs.len()).collect::<Vec<_>>());
            let squashed: Vec<f64> = probs.iter().map(|p| (3.0 * p - 1.0).exp()).collect();
            prop_assert_eq!(ranked, rank(&texts, &squashed).unwrap());
        }

        #[test]
        fn predictions_are_probabilities_and_deterministic(
            train in proptest::collection::vec(("[a-e ]{0,8}", any::<bool>()), 1..12),
            queries in proptest::collection::vec("[a-h ]{0,10}", 1..6),
        ) {
            let data: Vec<(&str, bool)> = train.iter().map(|(t, l)| (t.as_str(), *l)).collect();
            let a = fit_texts(data.clone()).unwrap();
            let b = fit_texts(data).unwrap();
            prop_assert_eq!(&a, &b);
            let entries: Vec<CorpusEntry> = queries.iter().enumerate().map(|(i, q)| e(i, q)).collect();
            let pa = predict(&a, &entries);
            let pb = predict(&b, &entries);
            prop_assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert!(pa.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
