use std::collections::BTreeMap;

use proptest::prelude::*;

use tsa_core::corpus::{DomainLabel, Sentence};
use tsa_core::eval::{evaluate_run, evaluate_run_at, exact_match, pr_curve, prf, MatchCounts};
use tsa_core::tagger::{decode_spans, LabeledSentence, Polarity, TargetSpan, TokenDistribution};
use tsa_core::weaklabel::{build_weak_set, Prediction, SelectionConfig};

fn arb_polarity() -> impl Strategy<Value = Polarity> {
    prop_oneof![Just(Polarity::Positive), Just(Polarity::Negative)]
}

fn arb_confidence() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(0.9), Just(1.0), 0.34f64..=1.0]
}

/// Non-overlapping spans over a six-token sentence.
fn arb_spans() -> impl Strategy<Value = Vec<TargetSpan>> {
    prop::collection::vec((any::<bool>(), arb_polarity(), arb_confidence()), 3).prop_map(|slots| {
        slots
            .into_iter()
            .enumerate()
            .filter(|(_, (on, _, _))| *on)
            .map(|(i, (_, p, c))| TargetSpan::new(2 * i, 2 * i + 1, p, c))
            .collect()
    })
}

fn arb_predictions() -> impl Strategy<Value = Vec<Prediction>> {
    prop::collection::vec((0..3usize, arb_spans()), 0..40).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (d, spans))| {
                let domain = DomainLabel::new(["a", "b", "c"][d]);
                (
                    Sentence::new("one two three four five six", domain, format!("r{i}"), 0),
                    spans,
                )
            })
            .collect()
    })
}

fn weak_label_count(preds: &[Prediction], cfg: &SelectionConfig) -> usize {
    build_weak_set(preds, cfg).1.weak_labels
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn raising_target_high_never_adds_weak_labels(preds in arb_predictions(), lo in 0.5f64..0.95, step in 0.0f64..0.05) {
        let low = SelectionConfig { target_high: lo, ..SelectionConfig::default() };
        let high = SelectionConfig { target_high: (lo + step).min(1.0), ..low };
        prop_assert!(weak_label_count(&preds, &high) <= weak_label_count(&preds, &low));
    }

    #[test]
    fn selection_is_deterministic(preds in arb_predictions(), seed in any::<u64>()) {
        let cfg = SelectionConfig { per_domain_cap: 5, rng_seed: seed, ..SelectionConfig::default() };
        prop_assert_eq!(build_weak_set(&preds, &cfg), build_weak_set(&preds, &cfg));
    }

    #[test]
    fn span_confidence_is_a_lower_bound(raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 0..20)) {
        let dists: Vec<TokenDistribution> = raw
            .iter()
            .map(|&(a, b, c)| {
                let s = a + b + c + 1e-9;
                TokenDistribution::from_array([a / s, b / s, c / s])
            })
            .collect();
        for span in decode_spans(&dists) {
            let label = span.polarity.label();
            for d in &dists[span.start..span.end] {
                prop_assert!(span.confidence <= d.prob(label));
            }
            prop_assert!(dists[span.start..span.end].iter().any(|d| d.prob(label) == span.confidence));
        }
    }

    #[test]
    fn match_counts_balance(pred in arb_spans(), gold in arb_spans()) {
        let c = exact_match(&pred, &gold);
        prop_assert!(c.tp <= pred.len().min(gold.len()));
        prop_assert_eq!(c.tp + c.fp, pred.len());
        prop_assert_eq!(c.tp + c.fn_, gold.len());
    }
}

fn labeled(domain: &str, id: &str, spans: Vec<TargetSpan>) -> LabeledSentence {
    LabeledSentence::new(
        Sentence::new("one two three four five six", DomainLabel::new(domain), id, 0),
        spans,
    )
}

/// Paired (prediction, gold) rows across three domains.
fn arb_dataset() -> impl Strategy<Value = Vec<(LabeledSentence, LabeledSentence)>> {
    prop::collection::vec((0..3usize, arb_spans(), arb_spans()), 1..30).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (d, p, g))| {
                let domain = ["a", "b", "c"][d];
                let id = format!("s{i}");
                let gold = g
                    .into_iter()
                    .map(|s| TargetSpan::gold(s.start, s.end, s.polarity))
                    .collect();
                (labeled(domain, &id, p), labeled(domain, &id, gold))
            })
            .collect()
    })
}

fn split(rows: &[(LabeledSentence, LabeledSentence)]) -> (Vec<LabeledSentence>, Vec<LabeledSentence>) {
    rows.iter().cloned().unzip()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn per_domain_counts_match_recomputation(rows in arb_dataset()) {
        let (pred, gold) = split(&rows);
        let run = evaluate_run(&pred, &gold).unwrap();
        let mut oracle: BTreeMap<String, MatchCounts> = BTreeMap::new();
        for (p, g) in &rows {
            *oracle.entry(g.sentence.domain.to_string()).or_default() += exact_match(&p.gold_spans, &g.gold_spans);
        }
        for (d, c) in &oracle {
            prop_assert_eq!(run.per_domain[d].counts, *c);
            prop_assert_eq!(run.per_domain[d].metrics, prf(*c));
        }
        prop_assert_eq!(run.per_domain.len(), oracle.len());
    }

    #[test]
    fn macro_ignores_order_and_duplication(rows in arb_dataset(), dup in 0..3usize) {
        let (pred, gold) = split(&rows);
        let base = evaluate_run(&pred, &gold).unwrap().macro_prf();

        let mut reordered = rows.clone();
        reordered.reverse();
        reordered.sort_by_key(|(_, g)| std::cmp::Reverse(g.sentence.domain.clone()));
        let (rp, rg) = split(&reordered);
        prop_assert_eq!(evaluate_run(&rp, &rg).unwrap().macro_prf(), base);

        let domain = ["a", "b", "c"][dup];
        let mut doubled = rows.clone();
        for (p, g) in rows.iter().filter(|(_, g)| g.sentence.domain.as_str() == domain) {
            let (mut p, mut g) = (p.clone(), g.clone());
            p.sentence.review_id.push_str("-copy");
            g.sentence.review_id.push_str("-copy");
            doubled.push((p, g));
        }
        let (dp, dg) = split(&doubled);
        let m = evaluate_run(&dp, &dg).unwrap().macro_prf();
        prop_assert!((m.f1 - base.f1).abs() < 1e-12);
        prop_assert!((m.precision - base.precision).abs() < 1e-12);
        prop_assert!((m.recall - base.recall).abs() < 1e-12);
    }

    #[test]
    fn pr_curve_recall_is_monotone(rows in arb_dataset(), more in arb_dataset()) {
        let (pred, gold) = split(&rows);
        let mut second = pred.clone();
        for (s, (p, _)) in second.iter_mut().zip(more.iter().cycle()) {
            s.gold_spans = p.gold_spans.clone();
        }
        let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).chain([1.0 + 1e-9]).collect();
        let curve = pr_curve(&[pred.clone(), second], &gold, &thresholds).unwrap();
        for points in curve.per_domain.values() {
            for w in points.windows(2) {
                prop_assert!(w[1].recall <= w[0].recall + 1e-12);
            }
            prop_assert_eq!(points.last().unwrap().recall, 0.0);
        }

        let plain = evaluate_run(&pred, &gold).unwrap();
        let at_zero = evaluate_run_at(&pred, &gold, 0.0).unwrap();
        prop_assert_eq!(plain, at_zero);
    }
}
