//! Turning predictions on the unlabeled pool into weak labels: confident
//! target sentences, a sampled set of explicit no-target sentences, and a
//! per-domain cap on each part.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{DomainLabel, Sentence};
use crate::dataset::{write_labeled, WriteOptions};
use crate::error::{Error, Result};
use crate::seed::stage_rng;
use crate::tagger::{LabeledSentence, Provenance, TargetSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Weak labels need confidence strictly above this.
    pub target_high: f64,
    /// Other spans in a selected sentence must be at or below this.
    pub target_low: f64,
    pub non_target_fraction: f64,
    pub per_domain_cap: usize,
    pub rng_seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            target_high: 0.9,
            target_low: 0.5,
            non_target_fraction: 0.1,
            per_domain_cap: 20_000,
            rng_seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.target_low && self.target_low < self.target_high && self.target_high <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= target_low < target_high <= 1, got {} and {}",
                self.target_low, self.target_high
            )));
        }
        if !(self.non_target_fraction > 0.0 && self.non_target_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "non_target_fraction must be in (0, 1], got {}",
                self.non_target_fraction
            )));
        }
        if self.per_domain_cap == 0 {
            return Err(Error::Config("per_domain_cap must be positive".into()));
        }
        Ok(())
    }
}

pub type Prediction = (Sentence, Vec<TargetSpan>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeakLabeledSet {
    pub target_part: Vec<Prediction>,
    pub non_target_part: Vec<Sentence>,
}

impl WeakLabeledSet {
    pub fn len(&self) -> usize {
        self.target_part.len() + self.non_target_part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_labeled(&self) -> Vec<LabeledSentence> {
        let targets = self.target_part.iter().map(|(s, spans)| LabeledSentence {
            sentence: s.clone(),
            gold_spans: spans.clone(),
            provenance: Provenance::WeakTarget,
        });
        let none = self.non_target_part.iter().map(|s| LabeledSentence {
            sentence: s.clone(),
            gold_spans: Vec::new(),
            provenance: Provenance::WeakNone,
        });
        targets.chain(none).collect()
    }

    /// Rebuild from a persisted weak-label file.
    pub fn from_labeled(records: Vec<LabeledSentence>) -> Self {
        let mut set = WeakLabeledSet::default();
        for r in records {
            match r.provenance {
                Provenance::WeakNone => set.non_target_part.push(r.sentence),
                _ => set.target_part.push((r.sentence, r.gold_spans)),
            }
        }
        set
    }
}

/// Weak labels for one sentence, or `None` if the sentence is not selected.
pub fn target_labels(spans: &[TargetSpan], cfg: &SelectionConfig) -> Option<Vec<TargetSpan>> {
    let (high, rest): (Vec<&TargetSpan>, Vec<&TargetSpan>) = spans.iter().partition(|s| s.confidence > cfg.target_high);
    if high.is_empty() || rest.iter().any(|s| s.confidence > cfg.target_low) {
        return None;
    }
    Some(high.into_iter().cloned().collect())
}

pub fn is_non_target(spans: &[TargetSpan], cfg: &SelectionConfig) -> bool {
    spans.iter().all(|s| s.confidence <= cfg.target_low)
}

pub fn select_targets(predictions: &[Prediction], cfg: &SelectionConfig) -> Vec<Prediction> {
    predictions
        .iter()
        .filter_map(|(s, spans)| target_labels(spans, cfg).map(|kept| (s.clone(), kept)))
        .collect()
}

/// Draw `ceil(fraction * N)` sentences uniformly from all predictions, then
/// keep those with no span above `target_low`. Returns `(sampled, kept)`.
pub fn select_non_targets(predictions: &[Prediction], cfg: &SelectionConfig) -> (usize, Vec<Sentence>) {
    let n = predictions.len();
    let amount = ((cfg.non_target_fraction * n as f64).ceil() as usize).min(n);
    let mut rng = stage_rng(cfg.rng_seed, "non-target-sample");
    let mut picked = index::sample(&mut rng, n, amount).into_vec();
    picked.sort_unstable();
    let kept = picked
        .iter()
        .map(|&i| &predictions[i])
        .filter(|(_, spans)| is_non_target(spans, cfg))
        .map(|(s, _)| s.clone())
        .collect();
    (amount, kept)
}

/// Keep at most `cap` items per domain by seeded sampling without
/// replacement; surviving items stay in input order.
pub fn balance_domains<T, F>(items: Vec<T>, domain_of: F, cap: usize, seed: u64, part: &str) -> Vec<T>
where
    F: Fn(&T) -> &DomainLabel,
{
    let mut by_domain: BTreeMap<DomainLabel, Vec<usize>> = BTreeMap::new();
    for (i, it) in items.iter().enumerate() {
        by_domain.entry(domain_of(it).clone()).or_default().push(i);
    }
    let mut keep = vec![false; items.len()];
    for (domain, idx) in by_domain {
        if idx.len() <= cap {
            idx.iter().for_each(|&i| keep[i] = true);
            continue;
        }
        let mut rng = stage_rng(seed, &format!("balance/{part}/{domain}"));
        for j in index::sample(&mut rng, idx.len(), cap) {
            keep[idx[j]] = true;
        }
    }
    items
        .into_iter()
        .zip(keep)
        .filter_map(|(it, k)| k.then_some(it))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSelection {
    pub predicted: usize,
    pub target_candidates: usize,
    pub target_kept: usize,
    pub non_target_candidates: usize,
    pub non_target_kept: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub predicted: usize,
    pub non_target_sampled: usize,
    pub weak_labels: usize,
    pub per_domain: BTreeMap<DomainLabel, DomainSelection>,
}

impl SelectionStats {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Full selection: targets, sampled non-targets, then per-domain caps.
pub fn build_weak_set(predictions: &[Prediction], cfg: &SelectionConfig) -> (WeakLabeledSet, SelectionStats) {
    let mut stats = SelectionStats {
        predicted: predictions.len(),
        ..Default::default()
    };
    for (s, _) in predictions {
        stats.per_domain.entry(s.domain.clone()).or_default().predicted += 1;
    }
    let targets = select_targets(predictions, cfg);
    let (sampled, non_targets) = select_non_targets(predictions, cfg);
    stats.non_target_sampled = sampled;
    for (s, _) in &targets {
        stats.per_domain.entry(s.domain.clone()).or_default().target_candidates += 1;
    }
    for s in &non_targets {
        stats
            .per_domain
            .entry(s.domain.clone())
            .or_default()
            .non_target_candidates += 1;
    }
    let target_part = balance_domains(targets, |p| &p.0.domain, cfg.per_domain_cap, cfg.rng_seed, "target");
    let non_target_part = balance_domains(
        non_targets,
        |s| &s.domain,
        cfg.per_domain_cap,
        cfg.rng_seed,
        "non-target",
    );
    for (s, spans) in &target_part {
        stats.per_domain.entry(s.domain.clone()).or_default().target_kept += 1;
        stats.weak_labels += spans.len();
    }
    for s in &non_target_part {
        stats.per_domain.entry(s.domain.clone()).or_default().non_target_kept += 1;
    }
    (
        WeakLabeledSet {
            target_part,
            non_target_part,
        },
        stats,
    )
}

/// Labeled data, then weak target sentences, then weak no-target sentences.
pub fn merge_training_set(labeled: &[LabeledSentence], weak: &WeakLabeledSet) -> Vec<LabeledSentence> {
    let mut out: Vec<LabeledSentence> = labeled
        .iter()
        .cloned()
        .map(|mut l| {
            l.provenance = Provenance::Labeled;
            l
        })
        .collect();
    out.extend(weak.to_labeled());
    out
}

pub fn write_weak_set(path: &Path, weak: &WeakLabeledSet) -> Result<()> {
    write_labeled(
        path,
        &weak.to_labeled(),
        WriteOptions {
            confidence: true,
            provenance: true,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagger::Polarity;

    fn sent(id: usize, domain: &str) -> Sentence {
        Sentence::new("w0 w1 w2 w3 w4 w5", DomainLabel::new(domain), format!("r{id}"), 0)
    }

    fn span(start: usize, conf: f64) -> TargetSpan {
        TargetSpan::new(start, start + 1, Polarity::Positive, conf)
    }

    #[test]
    fn target_recipe() {
        let cfg = SelectionConfig::default();
        let kept = target_labels(&[span(0, 0.95), span(2, 0.30)], &cfg).unwrap();
        assert_eq!(kept, vec![span(0, 0.95)]);
        assert!(target_labels(&[span(0, 0.95), span(2, 0.70)], &cfg).is_none());
        assert!(target_labels(&[], &cfg).is_none());
        assert!(target_labels(&[span(0, 0.9)], &cfg).is_none(), "S = 0.9 is not > 0.9");
        assert_eq!(target_labels(&[span(0, 0.91), span(2, 0.5)], &cfg).unwrap().len(), 1);
        assert_eq!(target_labels(&[span(0, 0.91), span(2, 0.97)], &cfg).unwrap().len(), 2);
    }

    #[test]
    fn non_target_recipe() {
        let cfg = SelectionConfig {
            non_target_fraction: 1.0,
            ..Default::default()
        };
        let preds = vec![
            (sent(0, "a"), vec![span(0, 0.4), span(2, 0.2)]),
            (sent(1, "a"), vec![span(0, 0.6)]),
            (sent(2, "a"), vec![]),
            (sent(3, "a"), vec![span(0, 0.5)]),
        ];
        let (sampled, kept) = select_non_targets(&preds, &cfg);
        assert_eq!(sampled, 4);
        let ids: Vec<&str> = kept.iter().map(|s| s.review_id.as_str()).collect();
        assert_eq!(ids, ["r0", "r2", "r3"]);
    }

    #[test]
    fn sample_size_rounds_up() {
        let cfg = SelectionConfig {
            non_target_fraction: 0.1,
            ..Default::default()
        };
        let preds: Vec<Prediction> = (0..25).map(|i| (sent(i, "a"), vec![])).collect();
        let (sampled, kept) = select_non_targets(&preds, &cfg);
        assert_eq!(sampled, 3);
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn caps_per_domain() {
        let items: Vec<Sentence> = (0..25_000)
            .map(|i| sent(i, "Restaurants"))
            .chain((0..500).map(|i| sent(i, "Pets")))
            .collect();
        let a = balance_domains(items.clone(), |s| &s.domain, 20_000, 9, "target");
        let b = balance_domains(items, |s| &s.domain, 20_000, 9, "target");
        assert_eq!(a.len(), 20_500);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|s| s.domain.as_str() == "Pets").count(), 500);
    }

    #[test]
    fn merge_order_and_provenance() {
        let labeled: Vec<LabeledSentence> = (0..100).map(|i| LabeledSentence::new(sent(i, "a"), vec![])).collect();
        let weak = WeakLabeledSet {
            target_part: (0..40).map(|i| (sent(1000 + i, "b"), vec![span(1, 0.95)])).collect(),
            non_target_part: (0..60).map(|i| sent(2000 + i, "c")).collect(),
        };
        let merged = merge_training_set(&labeled, &weak);
        assert_eq!(merged.len(), 200);
        let count = |p| merged.iter().filter(|m| m.provenance == p).count();
        assert_eq!(count(Provenance::Labeled), 100);
        assert_eq!(count(Provenance::WeakTarget), 40);
        assert_eq!(count(Provenance::WeakNone), 60);
        assert_eq!(merged[100].provenance, Provenance::WeakTarget);
        assert_eq!(merge_training_set(&labeled, &WeakLabeledSet::default()), labeled);
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::default().validate().is_ok());
        assert!(SelectionConfig {
            target_low: 0.9,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SelectionConfig {
            non_target_fraction: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SelectionConfig {
            per_domain_cap: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
