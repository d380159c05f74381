//! IO tagging scheme: per-token labels P/N/O, sub-word merging and span
//! decoding with a confidence score.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::text::char_slice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenLabel {
    #[serde(rename = "P")]
    Pos,
    #[serde(rename = "N")]
    Neg,
    #[serde(rename = "O")]
    None,
}

impl TokenLabel {
    pub const ALL: [TokenLabel; 3] = [TokenLabel::Pos, TokenLabel::Neg, TokenLabel::None];

    pub fn index(self) -> usize {
        match self {
            TokenLabel::Pos => 0,
            TokenLabel::Neg => 1,
            TokenLabel::None => 2,
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            TokenLabel::Pos => Some(Polarity::Positive),
            TokenLabel::Neg => Some(Polarity::Negative),
            TokenLabel::None => None,
        }
    }
}

impl fmt::Display for TokenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenLabel::Pos => "P",
            TokenLabel::Neg => "N",
            TokenLabel::None => "O",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn label(self) -> TokenLabel {
        match self {
            Polarity::Positive => TokenLabel::Pos,
            Polarity::Negative => TokenLabel::Neg,
        }
    }
}

/// Softmax output for one token (or word piece).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    #[serde(rename = "pos")]
    pub p_pos: f64,
    #[serde(rename = "neg")]
    pub p_neg: f64,
    #[serde(rename = "none")]
    pub p_none: f64,
}

const SUM_TOLERANCE: f64 = 1e-6;

impl TokenDistribution {
    pub fn new(p_pos: f64, p_neg: f64, p_none: f64) -> Result<Self> {
        let d = TokenDistribution { p_pos, p_neg, p_none };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_pos, self.p_neg, self.p_none];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::SpanLayout(format!("probability outside [0,1]: {ps:?}")));
        }
        if (ps.iter().sum::<f64>() - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::SpanLayout(format!("probabilities do not sum to 1: {ps:?}")));
        }
        Ok(())
    }

    pub fn one_hot(label: TokenLabel) -> Self {
        let mut p = [0.0; 3];
        p[label.index()] = 1.0;
        Self::from_array(p)
    }

    pub fn uniform() -> Self {
        Self::from_array([1.0 / 3.0; 3])
    }

    pub fn softmax(logits: [f64; 3]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp = logits.map(|z| (z - max).exp());
        let sum: f64 = exp.iter().sum();
        Self::from_array(exp.map(|e| e / sum))
    }

    /// Indexed by `TokenLabel::index`.
    pub fn from_array(p: [f64; 3]) -> Self {
        TokenDistribution {
            p_pos: p[0],
            p_neg: p[1],
            p_none: p[2],
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_pos, self.p_neg, self.p_none]
    }

    pub fn prob(&self, label: TokenLabel) -> f64 {
        self.as_array()[label.index()]
    }

    /// Highest-probability label; exact ties resolve NONE, then POS, then NEG.
    pub fn argmax(&self) -> TokenLabel {
        if self.p_none >= self.p_pos && self.p_none >= self.p_neg {
            TokenLabel::None
        } else if self.p_pos >= self.p_neg {
            TokenLabel::Pos
        } else {
            TokenLabel::Neg
        }
    }
}

/// Piece-level distributions with the word index of each piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceAlignment {
    pub piece_distributions: Vec<TokenDistribution>,
    pub piece_to_word: Vec<usize>,
}

impl PieceAlignment {
    pub fn validate(&self) -> Result<()> {
        if self.piece_distributions.len() != self.piece_to_word.len() {
            return Err(Error::SpanLayout(format!(
                "{} piece distributions but {} alignment entries",
                self.piece_distributions.len(),
                self.piece_to_word.len()
            )));
        }
        let mut expected = 0usize;
        for &w in &self.piece_to_word {
            if w == expected {
                expected += 1;
            } else if w + 1 != expected {
                return Err(Error::SpanLayout(format!(
                    "piece_to_word must be non-decreasing and gap-free, saw {w} after {}",
                    expected as isize - 1
                )));
            }
        }
        self.piece_distributions.iter().try_for_each(|d| d.validate())
    }

    pub fn word_count(&self) -> usize {
        self.piece_to_word.last().map_or(0, |w| w + 1)
    }
}

/// Half-open word-token span with polarity and confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpan {
    pub start: usize,
    pub end: usize,
    pub polarity: Polarity,
    pub confidence: f64,
    #[serde(default)]
    pub surface: String,
}

impl TargetSpan {
    pub fn new(start: usize, end: usize, polarity: Polarity, confidence: f64) -> Self {
        TargetSpan {
            start,
            end,
            polarity,
            confidence,
            surface: String::new(),
        }
    }

    pub fn gold(start: usize, end: usize, polarity: Polarity) -> Self {
        Self::new(start, end, polarity, 1.0)
    }

    pub fn same_target(&self, other: &TargetSpan) -> bool {
        self.start == other.start && self.end == other.end && self.polarity == other.polarity
    }

    pub fn overlaps(&self, other: &TargetSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Fill `surface` from the sentence text; falls back to joined tokens.
    pub fn fill_surface(&mut self, sentence: &Sentence) {
        self.surface = match sentence.token_offsets() {
            Some(offs) if self.end <= offs.len() && self.start < self.end => {
                char_slice(&sentence.text, offs[self.start].0, offs[self.end - 1].1)
            }
            _ => sentence
                .tokens
                .get(self.start..self.end.min(sentence.tokens.len()))
                .map(|t| t.join(" "))
                .unwrap_or_default(),
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    #[default]
    Labeled,
    WeakTarget,
    WeakNone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    pub gold_spans: Vec<TargetSpan>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl LabeledSentence {
    pub fn new(sentence: Sentence, gold_spans: Vec<TargetSpan>) -> Self {
        LabeledSentence {
            sentence,
            gold_spans,
            provenance: Provenance::Labeled,
        }
    }
}

/// Check that spans are in range, non-empty and pairwise non-overlapping.
/// Returns them sorted by start.
pub fn check_spans(spans: &[TargetSpan], len: usize) -> Result<Vec<&TargetSpan>> {
    let mut sorted: Vec<&TargetSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.start >= s.end || s.end > len {
            return Err(Error::SpanLayout(format!(
                "span [{}, {}) invalid for {len} tokens",
                s.start, s.end
            )));
        }
    }
    for w in sorted.windows(2) {
        if w[0].overlaps(w[1]) {
            return Err(Error::SpanLayout(format!(
                "spans [{}, {}) and [{}, {}) overlap",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    Ok(sorted)
}

pub fn encode_spans(spans: &[TargetSpan], len: usize) -> Result<Vec<TokenLabel>> {
    let sorted = check_spans(spans, len)?;
    for w in sorted.windows(2) {
        if w[0].end == w[1].start && w[0].polarity == w[1].polarity {
            return Err(Error::SpanLayout(format!(
                "adjacent same-polarity spans [{}, {}) and [{}, {}) are not representable with IO labels",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    let mut labels = vec![TokenLabel::None; len];
    for s in sorted {
        labels[s.start..s.end].fill(s.polarity.label());
    }
    Ok(labels)
}

pub fn encode_labels(labeled: &LabeledSentence) -> Result<Vec<TokenLabel>> {
    encode_spans(&labeled.gold_spans, labeled.sentence.tokens.len())
}

/// Collapse piece distributions to one per word: the first piece whose argmax
/// is a sentiment label wins, otherwise the word's first piece.
pub fn merge_word_pieces(alignment: &PieceAlignment) -> Result<Vec<TokenDistribution>> {
    alignment.validate()?;
    let mut words: Vec<TokenDistribution> = Vec::with_capacity(alignment.word_count());
    let mut has_sentiment = false;
    for (d, &w) in alignment.piece_distributions.iter().zip(&alignment.piece_to_word) {
        let sentiment = d.argmax() != TokenLabel::None;
        if w == words.len() {
            words.push(*d);
            has_sentiment = sentiment;
        } else if sentiment && !has_sentiment {
            words[w] = *d;
            has_sentiment = true;
        }
    }
    Ok(words)
}

/// Maximal runs of identical POS or NEG argmax labels become spans. A span's
/// confidence is the minimum probability of its label over the run.
pub fn decode_spans(word_distributions: &[TokenDistribution]) -> Vec<TargetSpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < word_distributions.len() {
        let label = word_distributions[i].argmax();
        let Some(polarity) = label.polarity() else {
            i += 1;
            continue;
        };
        let start = i;
        let mut confidence = f64::INFINITY;
        while i < word_distributions.len() && word_distributions[i].argmax() == label {
            confidence = confidence.min(word_distributions[i].prob(label));
            i += 1;
        }
        spans.push(TargetSpan::new(start, i, polarity, confidence));
    }
    spans
}

/// Decode and attach surface strings.
pub fn decode_sentence(sentence: &Sentence, word_distributions: &[TokenDistribution]) -> Vec<TargetSpan> {
    let mut spans = decode_spans(word_distributions);
    for s in &mut spans {
        s.fill_surface(sentence);
    }
    spans
}

/// Micro-averaged token-level counts where POS and NEG are the positive classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TokenCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl TokenCounts {
    pub fn add(&mut self, predicted: &[TokenLabel], gold: &[TokenLabel]) {
        for (p, g) in predicted.iter().zip(gold) {
            match (*p, *g) {
                (p, g) if p == g && g != TokenLabel::None => self.tp += 1,
                (p, g) => {
                    if p != TokenLabel::None {
                        self.fp += 1;
                    }
                    if g != TokenLabel::None {
                        self.fn_ += 1;
                    }
                }
            }
        }
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DomainLabel;
    use proptest::prelude::*;

    fn d(p: f64, n: f64, o: f64) -> TokenDistribution {
        TokenDistribution::new(p, n, o).unwrap()
    }

    fn car_sentence() -> Sentence {
        Sentence::new("Here is a nice electric car", DomainLabel::new("automotive"), "ex", 0)
    }

    #[test]
    fn encodes_worked_example() {
        let ls = LabeledSentence::new(car_sentence(), vec![TargetSpan::gold(4, 6, Polarity::Positive)]);
        let labels: Vec<String> = encode_labels(&ls).unwrap().iter().map(|l| l.to_string()).collect();
        assert_eq!(labels, ["O", "O", "O", "O", "P", "P"]);
        let empty = LabeledSentence::new(car_sentence(), vec![]);
        assert!(encode_labels(&empty).unwrap().iter().all(|l| *l == TokenLabel::None));
    }

    #[test]
    fn encode_rejects_unrepresentable() {
        let s = car_sentence();
        let adj = LabeledSentence::new(
            s.clone(),
            vec![
                TargetSpan::gold(1, 2, Polarity::Positive),
                TargetSpan::gold(2, 3, Polarity::Positive),
            ],
        );
        assert!(encode_labels(&adj).is_err());
        let overlap = LabeledSentence::new(
            s.clone(),
            vec![
                TargetSpan::gold(1, 3, Polarity::Positive),
                TargetSpan::gold(2, 4, Polarity::Negative),
            ],
        );
        assert!(encode_labels(&overlap).is_err());
        let oob = LabeledSentence::new(s.clone(), vec![TargetSpan::gold(5, 7, Polarity::Positive)]);
        assert!(encode_labels(&oob).is_err());
        let mixed = LabeledSentence::new(
            s,
            vec![
                TargetSpan::gold(1, 2, Polarity::Positive),
                TargetSpan::gold(2, 3, Polarity::Negative),
            ],
        );
        assert_eq!(encode_labels(&mixed).unwrap()[1..3], [TokenLabel::Pos, TokenLabel::Neg]);
    }

    #[test]
    fn tie_break_order() {
        assert_eq!(TokenDistribution::uniform().argmax(), TokenLabel::None);
        assert_eq!(d(0.5, 0.5, 0.0).argmax(), TokenLabel::Pos);
        assert_eq!(d(0.4, 0.2, 0.4).argmax(), TokenLabel::None);
        assert_eq!(d(0.2, 0.4, 0.4).argmax(), TokenLabel::None);
        assert_eq!(d(0.1, 0.6, 0.3).argmax(), TokenLabel::Neg);
    }

    #[test]
    fn distribution_validation() {
        assert!(TokenDistribution::new(0.5, 0.5, 0.1).is_err());
        assert!(TokenDistribution::new(1.2, -0.2, 0.0).is_err());
        let s = TokenDistribution::softmax([1.0, 2.0, 3.0]);
        assert!(s.validate().is_ok());
        assert_eq!(s.argmax(), TokenLabel::None);
    }

    #[test]
    fn merge_first_sentiment_piece() {
        let none = d(0.1, 0.1, 0.8);
        let pos = d(0.7, 0.1, 0.2);
        let neg = d(0.1, 0.6, 0.3);
        let al = PieceAlignment {
            piece_distributions: vec![none, none, pos, pos, neg],
            piece_to_word: vec![0, 1, 1, 2, 2],
        };
        assert_eq!(merge_word_pieces(&al).unwrap(), vec![none, pos, pos]);
        let empty = PieceAlignment {
            piece_distributions: vec![],
            piece_to_word: vec![],
        };
        assert!(merge_word_pieces(&empty).unwrap().is_empty());
        let single = PieceAlignment {
            piece_distributions: vec![neg],
            piece_to_word: vec![0],
        };
        assert_eq!(merge_word_pieces(&single).unwrap(), vec![neg]);
    }

    #[test]
    fn merge_rejects_bad_alignment() {
        let p = TokenDistribution::uniform();
        for map in [vec![0, 2], vec![1], vec![0, 1, 0]] {
            let al = PieceAlignment {
                piece_distributions: vec![p; map.len()],
                piece_to_word: map,
            };
            assert!(merge_word_pieces(&al).is_err());
        }
        let al = PieceAlignment {
            piece_distributions: vec![p],
            piece_to_word: vec![0, 1],
        };
        assert!(merge_word_pieces(&al).is_err());
    }

    #[test]
    fn decodes_worked_example() {
        let o = d(0.05, 0.05, 0.9);
        let dists = [o, o, o, o, d(0.8, 0.1, 0.1), d(0.7, 0.1, 0.2)];
        let spans = decode_sentence(&car_sentence(), &dists);
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].start, spans[0].end), (4, 6));
        assert_eq!(spans[0].polarity, Polarity::Positive);
        assert_eq!(spans[0].surface, "electric car");
        assert_eq!(spans[0].confidence, 0.7);
        assert!(decode_spans(&[o, o]).is_empty());
    }

    #[test]
    fn alternating_labels_are_singletons() {
        let dists = [d(0.8, 0.1, 0.1), d(0.2, 0.7, 0.1), d(0.9, 0.05, 0.05)];
        let spans = decode_spans(&dists);
        let got: Vec<(usize, usize, Polarity, f64)> = spans
            .iter()
            .map(|s| (s.start, s.end, s.polarity, s.confidence))
            .collect();
        assert_eq!(
            got,
            vec![
                (0, 1, Polarity::Positive, 0.8),
                (1, 2, Polarity::Negative, 0.7),
                (2, 3, Polarity::Positive, 0.9)
            ]
        );
    }

    #[test]
    fn token_f1_hand_case() {
        use TokenLabel::*;
        // 2 TP, 1 FP, 2 FN over 10 tokens
        let gold = [Pos, Pos, Neg, Neg, None, None, None, None, None, None];
        let pred = [Pos, Pos, None, None, Pos, None, None, None, None, None];
        let mut c = TokenCounts::default();
        c.add(&pred, &gold);
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 2));
        assert!((c.f1() - 4.0 / 7.0).abs() < 1e-12);
    }

    fn arb_dist() -> impl Strategy<Value = TokenDistribution> {
        (0u32..=20, 0u32..=20, 0u32..=20).prop_filter_map("nonzero", |(a, b, c)| {
            let s = (a + b + c) as f64;
            (s > 0.0).then(|| TokenDistribution::from_array([a as f64 / s, b as f64 / s, c as f64 / s]))
        })
    }

    /// Brute-force grouping: label every index, then cut at every label change.
    fn grouping_oracle(dists: &[TokenDistribution]) -> Vec<(usize, usize, TokenLabel)> {
        let labels: Vec<TokenLabel> = dists.iter().map(|d| d.argmax()).collect();
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=labels.len() {
            if i == labels.len() || labels[i] != labels[start] {
                runs.push((start, i, labels[start]));
                start = i;
            }
        }
        runs
    }

    proptest! {
        #[test]
        fn decode_matches_grouping_oracle(dists in prop::collection::vec(arb_dist(), 0..25)) {
            let spans = decode_spans(&dists);
            let oracle: Vec<(usize, usize, TokenLabel)> = grouping_oracle(&dists)
                .into_iter()
                .filter(|r| r.2 != TokenLabel::None)
                .collect();
            prop_assert_eq!(spans.len(), oracle.len());
            for (s, (a, b, l)) in spans.iter().zip(&oracle) {
                prop_assert_eq!((s.start, s.end, s.polarity.label()), (*a, *b, *l));
                for d in &dists[s.start..s.end] {
                    prop_assert!(s.confidence <= d.prob(*l));
                }
            }
            prop_assert!(spans.windows(2).all(|w| w[0].end <= w[1].start));
        }

        #[test]
        fn merge_is_identity_for_single_pieces(dists in prop::collection::vec(arb_dist(), 0..25)) {
            let al = PieceAlignment {
                piece_to_word: (0..dists.len()).collect(),
                piece_distributions: dists.clone(),
            };
            prop_assert_eq!(merge_word_pieces(&al).unwrap(), dists);
        }
    }
}
