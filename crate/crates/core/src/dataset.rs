//! Canonical labeled-sentence files: one JSON record per line with
//! character-offset targets. Used for gold data, predictions (with
//! confidence) and weak-label sets (with provenance).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{DomainLabel, Sentence};
use crate::error::{Error, Result};
use crate::tagger::{check_spans, LabeledSentence, Polarity, Provenance, TargetSpan};
use crate::text;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRecord {
    pub start_char: usize,
    pub end_char: usize,
    pub polarity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub text: String,
    #[serde(default = "default_domain")]
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default)]
    pub targets: Vec<TargetRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn default_domain() -> String {
    "unknown".to_string()
}

/// Counters for lossy conversions performed while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub records: usize,
    /// Gold spans whose char boundaries fell inside a token and were widened.
    pub snapped: usize,
    /// Spans that covered no token.
    pub dropped_empty: usize,
    /// Neutral, mixed or conflict targets removed.
    pub dropped_polarity: usize,
}

fn parse_polarity(p: &str) -> Option<Polarity> {
    match p.to_ascii_lowercase().as_str() {
        "positive" | "pos" | "p" => Some(Polarity::Positive),
        "negative" | "neg" | "n" => Some(Polarity::Negative),
        _ => None,
    }
}

/// Convert a char range to the covering token range, widening outwards.
/// Returns `(start, end, snapped)` or `None` if no token overlaps.
pub fn char_span_to_tokens(
    offsets: &[(usize, usize)],
    start_char: usize,
    end_char: usize,
) -> Option<(usize, usize, bool)> {
    let covered: Vec<usize> = offsets
        .iter()
        .enumerate()
        .filter(|(_, (s, e))| *s < end_char && start_char < *e)
        .map(|(i, _)| i)
        .collect();
    let (&first, &last) = (covered.first()?, covered.last()?);
    let snapped = offsets[first].0 != start_char || offsets[last].1 != end_char;
    Some((first, last + 1, snapped))
}

impl Record {
    pub fn into_labeled(self, line: usize, report: &mut LoadReport) -> std::result::Result<LabeledSentence, String> {
        let tokens = match self.tokens {
            Some(t) => t,
            None => text::tokenize_words(&self.text),
        };
        if tokens.is_empty() {
            return Err("sentence has no tokens".into());
        }
        let offsets = text::align_tokens(&self.text, &tokens).ok_or("tokens cannot be aligned with text")?;
        let review_id = self.review_id.or(self.id).unwrap_or_else(|| format!("line-{line}"));
        let sentence = Sentence {
            text: self.text,
            tokens,
            domain: DomainLabel::new(self.domain),
            review_id,
            index_in_review: self.index.unwrap_or(0),
        };
        let mut spans = Vec::with_capacity(self.targets.len());
        for t in self.targets {
            let Some(polarity) = parse_polarity(&t.polarity) else {
                report.dropped_polarity += 1;
                continue;
            };
            let Some((start, end, snapped)) = char_span_to_tokens(&offsets, t.start_char, t.end_char) else {
                report.dropped_empty += 1;
                continue;
            };
            if snapped {
                report.snapped += 1;
            }
            let mut span = TargetSpan::new(start, end, polarity, t.confidence.unwrap_or(1.0));
            span.fill_surface(&sentence);
            spans.push(span);
        }
        check_spans(&spans, sentence.tokens.len()).map_err(|e| e.to_string())?;
        spans.sort_by_key(|s| s.start);
        report.records += 1;
        Ok(LabeledSentence {
            sentence,
            gold_spans: spans,
            provenance: self.provenance.unwrap_or_default(),
        })
    }

    pub fn from_labeled(ls: &LabeledSentence, with_confidence: bool, with_provenance: bool) -> Self {
        let s = &ls.sentence;
        let offsets = s.token_offsets();
        let targets = ls
            .gold_spans
            .iter()
            .map(|span| {
                let (start_char, end_char) = match &offsets {
                    Some(o) => (o[span.start].0, o[span.end - 1].1),
                    None => (0, 0),
                };
                TargetRecord {
                    start_char,
                    end_char,
                    polarity: match span.polarity {
                        Polarity::Positive => "positive".into(),
                        Polarity::Negative => "negative".into(),
                    },
                    confidence: with_confidence.then_some(span.confidence),
                    text: Some(text::char_slice(&s.text, start_char, end_char)),
                }
            })
            .collect();
        Record {
            id: Some(s.id().to_string()),
            review_id: Some(s.review_id.clone()),
            index: Some(s.index_in_review),
            text: s.text.clone(),
            domain: s.domain.as_str().to_string(),
            tokens: Some(s.tokens.clone()),
            targets,
            provenance: with_provenance.then_some(ls.provenance),
        }
    }
}

pub fn read_labeled(path: &Path) -> Result<(Vec<LabeledSentence>, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = LoadReport::default();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec_err = |message: String| Error::Record {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let record: Record = serde_json::from_str(&line).map_err(|e| rec_err(e.to_string()))?;
        out.push(record.into_labeled(i + 1, &mut report).map_err(rec_err)?);
    }
    if report.snapped > 0 {
        warn!(
            "{}: {} target span(s) snapped to token boundaries",
            path.display(),
            report.snapped
        );
    }
    if report.dropped_empty + report.dropped_polarity > 0 {
        warn!(
            "{}: dropped {} empty and {} non-binary-polarity target(s)",
            path.display(),
            report.dropped_empty,
            report.dropped_polarity
        );
    }
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    pub confidence: bool,
    pub provenance: bool,
}

pub fn write_labeled(path: &Path, records: &[LabeledSentence], opts: WriteOptions) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ls in records {
        serde_json::to_writer(&mut w, &Record::from_labeled(ls, opts.confidence, opts.provenance))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(line: &str) -> (std::result::Result<LabeledSentence, String>, LoadReport) {
        let mut report = LoadReport::default();
        let rec: Record = serde_json::from_str(line).unwrap();
        (rec.into_labeled(1, &mut report), report)
    }

    #[test]
    fn char_offsets_map_to_tokens() {
        let (ls, report) = parse(
            r#"{"text":"Here is a nice electric car.","domain":"automotive","targets":[{"start_char":15,"end_char":27,"polarity":"positive"}]}"#,
        );
        let ls = ls.unwrap();
        assert_eq!(report.snapped, 0);
        assert_eq!((ls.gold_spans[0].start, ls.gold_spans[0].end), (4, 6));
        assert_eq!(ls.gold_spans[0].surface, "electric car");
        assert_eq!(ls.sentence.domain.as_str(), "automotive");
    }

    #[test]
    fn mid_token_boundaries_snap_outward() {
        let (ls, report) = parse(
            r#"{"text":"the different sauces","targets":[{"start_char":6,"end_char":18,"polarity":"positive"}]}"#,
        );
        let ls = ls.unwrap();
        assert_eq!(report.snapped, 1);
        assert_eq!((ls.gold_spans[0].start, ls.gold_spans[0].end), (1, 3));
    }

    #[test]
    fn neutral_targets_are_removed() {
        let (ls, report) =
            parse(r#"{"text":"ok food","targets":[{"start_char":3,"end_char":7,"polarity":"neutral"}]}"#);
        assert!(ls.unwrap().gold_spans.is_empty());
        assert_eq!(report.dropped_polarity, 1);
    }

    #[test]
    fn overlapping_gold_is_rejected() {
        let (ls, _) = parse(
            r#"{"text":"a b c","targets":[{"start_char":0,"end_char":3,"polarity":"positive"},{"start_char":2,"end_char":5,"polarity":"negative"}]}"#,
        );
        assert!(ls.is_err());
    }

    #[test]
    fn write_then_read_preserves_spans() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let (ls, _) = parse(
            r#"{"id":"s1","text":"Great pizza but awful service!","domain":"food","targets":[{"start_char":6,"end_char":11,"polarity":"positive","confidence":0.93},{"start_char":22,"end_char":29,"polarity":"negative"}]}"#,
        );
        let ls = ls.unwrap();
        write_labeled(
            &path,
            std::slice::from_ref(&ls),
            WriteOptions {
                confidence: true,
                provenance: true,
            },
        )
        .unwrap();
        let (back, _) = read_labeled(&path).unwrap();
        assert_eq!(back[0].gold_spans, ls.gold_spans);
        assert_eq!(back[0].sentence, ls.sentence);
        assert_eq!(back[0].gold_spans[0].confidence, 0.93);
    }
}
