//! Sentiment lexicon with a confidence threshold on the absolute score.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::normalize_word;

/// Default gate on `|score|` for the review-sentence sentiment filter.
pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct SentimentLexicon {
    entries: HashMap<String, f64>,
    threshold: f64,
}

impl SentimentLexicon {
    pub fn load(path: impl AsRef<Path>, threshold: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), threshold)
    }

    /// Parse `word<TAB>score` rows. Rows whose `|score|` does not exceed the
    /// threshold are dropped; duplicates keep the entry with the larger `|score|`.
    pub fn from_reader<R: BufRead>(reader: R, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Config(format!(
                "lexicon threshold must be in (0, 1], got {threshold}"
            )));
        }
        let mut entries: HashMap<String, f64> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let row = i + 1;
            let line = line.map_err(|e| Error::LexiconRow {
                row,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (word, score) = trimmed.split_once('\t').ok_or_else(|| Error::LexiconRow {
                row,
                message: "expected `word<TAB>score`".into(),
            })?;
            let score: f64 = score.trim().parse().map_err(|_| Error::LexiconRow {
                row,
                message: format!("non-numeric score {:?}", score.trim()),
            })?;
            if !(-1.0..=1.0).contains(&score) {
                return Err(Error::LexiconRow {
                    row,
                    message: format!("score {score} outside [-1, 1]"),
                });
            }
            if score.abs() <= threshold {
                continue;
            }
            let key = word.trim().to_lowercase();
            if key.is_empty() {
                continue;
            }
            entries
                .entry(key)
                .and_modify(|s| {
                    if score.abs() > s.abs() {
                        *s = score;
                    }
                })
                .or_insert(score);
        }
        if entries.is_empty() {
            return Err(Error::EmptyLexicon(threshold));
        }
        Ok(SentimentLexicon { entries, threshold })
    }

    /// Build from in-memory pairs with the same gating as `from_reader`.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>, threshold: f64) -> Result<Self> {
        let tsv: String = pairs.into_iter().map(|(w, s)| format!("{w}\t{s}\n")).collect();
        Self::from_reader(tsv.as_bytes(), threshold)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Score of a raw token after case folding and punctuation stripping.
    pub fn score(&self, token: &str) -> Option<f64> {
        self.entries.get(&normalize_word(token)).copied()
    }

    pub fn contains_sentiment_word<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        tokens.iter().any(|t| self.score(t.as_ref()).is_some())
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(w, s)| (w.as_str(), *s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn lex() -> SentimentLexicon {
        SentimentLexicon::from_pairs(
            [
                ("tasty", 0.9),
                ("ok", 0.3),
                ("awful", -0.95),
                ("Great", 0.8),
                ("bland", -0.7),
            ],
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let l = lex();
        assert!(l.score("tasty").is_some());
        assert!(l.score("ok").is_none());
        assert!(l.score("bland").is_none(), "|S| = 0.7 is not > 0.7");
        assert_eq!(l.score("GREAT"), Some(0.8));
        assert_eq!(l.len(), 3);
        let min = l.words().map(|(_, s)| s.abs()).fold(f64::INFINITY, f64::min);
        assert!(min > l.threshold());
    }

    #[test]
    fn duplicates_keep_max_abs() {
        let l = SentimentLexicon::from_pairs([("nice", 0.8), ("Nice", -0.9), ("nice", 0.85)], 0.7).unwrap();
        assert_eq!(l.score("nice"), Some(-0.9));
    }

    #[test]
    fn bad_rows_report_row_number() {
        let err = SentimentLexicon::from_reader("# header\ngood\t0.9\nbad\tx\n".as_bytes(), 0.7).unwrap_err();
        assert!(matches!(err, Error::LexiconRow { row: 3, .. }), "{err}");
        let err = SentimentLexicon::from_reader("big\t1.5\n".as_bytes(), 0.7).unwrap_err();
        assert!(matches!(err, Error::LexiconRow { row: 1, .. }));
        let err = SentimentLexicon::from_reader("meh\t0.1\n".as_bytes(), 0.7).unwrap_err();
        assert!(matches!(err, Error::EmptyLexicon(_)));
    }

    #[test]
    fn case_folded_match() {
        let l = lex();
        assert!(l.contains_sentiment_word(&["The", "food", "was", "Tasty", "."]));
        assert!(!l.contains_sentiment_word(&["The", "food", "was", "ok", "."]));
        assert!(!l.contains_sentiment_word::<&str>(&[]));
    }

    const VOCAB: &[&str] = &["tasty", "Tasty!", "ok", "awful", "car", "the", "great", "bland", "."];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_set_intersection(idx in prop::collection::vec(0..VOCAB.len(), 0..12)) {
            let l = lex();
            let tokens: Vec<&str> = idx.iter().map(|&i| VOCAB[i]).collect();
            let entries: HashSet<String> = l.words().map(|(w, _)| w.to_string()).collect();
            let normalized: HashSet<String> = tokens.iter().map(|t| normalize_word(t)).collect();
            let oracle = !entries.is_disjoint(&normalized);
            prop_assert_eq!(l.contains_sentiment_word(&tokens), oracle);
        }

        #[test]
        fn concatenation_is_disjunction(a in prop::collection::vec(0..VOCAB.len(), 0..6),
                                        b in prop::collection::vec(0..VOCAB.len(), 0..6)) {
            let l = lex();
            let ta: Vec<&str> = a.iter().map(|&i| VOCAB[i]).collect();
            let tb: Vec<&str> = b.iter().map(|&i| VOCAB[i]).collect();
            let joined: Vec<&str> = ta.iter().chain(tb.iter()).copied().collect();
            prop_assert_eq!(
                l.contains_sentiment_word(&joined),
                l.contains_sentiment_word(&ta) || l.contains_sentiment_word(&tb)
            );
        }
    }
}
