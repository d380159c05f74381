//! Exact-match evaluation: per-domain P/R/F1, macro-averaging over domains,
//! mean and standard deviation over seeds, precision-recall curves and
//! error sampling for manual review.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceId;
use crate::error::{Error, Result};
use crate::seed::stage_rng;
use crate::tagger::{LabeledSentence, Polarity, TargetSpan};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Greedy one-to-one matching on identical boundaries and polarity.
/// Returns the counts and, for each prediction, whether it matched.
pub fn match_spans(predicted: &[TargetSpan], gold: &[TargetSpan]) -> (MatchCounts, Vec<bool>) {
    let mut used = vec![false; gold.len()];
    let mut matched = Vec::with_capacity(predicted.len());
    for p in predicted {
        let hit = gold
            .iter()
            .enumerate()
            .find(|(j, g)| !used[*j] && p.same_target(g))
            .map(|(j, _)| j);
        if let Some(j) = hit {
            used[j] = true;
        }
        matched.push(hit.is_some());
    }
    let tp = matched.iter().filter(|m| **m).count();
    (
        MatchCounts {
            tp,
            fp: predicted.len() - tp,
            fn_: gold.len() - tp,
        },
        matched,
    )
}

pub fn exact_match(predicted: &[TargetSpan], gold: &[TargetSpan]) -> MatchCounts {
    match_spans(predicted, gold).0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Zero denominators give 0 for the affected metric.
pub fn prf(c: MatchCounts) -> Prf {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub per_domain: BTreeMap<String, DomainResult>,
    pub overall: DomainResult,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainResult {
    pub counts: MatchCounts,
    pub metrics: Prf,
}

impl RunResult {
    pub fn macro_prf(&self) -> Prf {
        macro_average(self.per_domain.values().map(|d| d.metrics))
    }

    /// Restrict to a subset of domains (e.g. unseen ones).
    pub fn only(&self, domains: &[&str]) -> RunResult {
        let per_domain: BTreeMap<String, DomainResult> = self
            .per_domain
            .iter()
            .filter(|(d, _)| domains.contains(&d.as_str()))
            .map(|(d, r)| (d.clone(), *r))
            .collect();
        let mut counts = MatchCounts::default();
        per_domain.values().for_each(|r| counts += r.counts);
        RunResult {
            per_domain,
            overall: DomainResult {
                counts,
                metrics: prf(counts),
            },
        }
    }
}

fn macro_average(items: impl Iterator<Item = Prf>) -> Prf {
    let (mut p, mut r, mut f, mut n) = (0.0, 0.0, 0.0, 0usize);
    for m in items {
        p += m.precision;
        r += m.recall;
        f += m.f1;
        n += 1;
    }
    if n == 0 {
        return Prf::default();
    }
    let n = n as f64;
    Prf {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    }
}

/// Pair every gold sentence with its prediction by sentence identity.
fn align<'a>(
    predictions: &'a [LabeledSentence],
    gold: &'a [LabeledSentence],
) -> Result<Vec<(&'a LabeledSentence, &'a LabeledSentence)>> {
    let mut by_id: HashMap<SentenceId, &LabeledSentence> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.sentence.id(), p).is_some() {
            return Err(Error::Alignment(format!(
                "duplicate prediction for {}",
                p.sentence.id()
            )));
        }
    }
    let mut pairs = Vec::with_capacity(gold.len());
    let mut missing = Vec::new();
    for g in gold {
        match by_id.remove(&g.sentence.id()) {
            Some(p) => pairs.push((p, g)),
            None => missing.push(g.sentence.id().to_string()),
        }
    }
    let mut extra: Vec<String> = by_id.keys().map(|k| k.to_string()).collect();
    extra.sort();
    if !missing.is_empty() || !extra.is_empty() {
        let show = |v: &[String]| v.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        return Err(Error::Alignment(format!(
            "{} gold sentence(s) without prediction [{}]; {} prediction(s) without gold [{}]",
            missing.len(),
            show(&missing),
            extra.len(),
            show(&extra)
        )));
    }
    Ok(pairs)
}

/// Evaluate one run, keeping only predicted spans with confidence >= `min_confidence`.
pub fn evaluate_run_at(
    predictions: &[LabeledSentence],
    gold: &[LabeledSentence],
    min_confidence: f64,
) -> Result<RunResult> {
    let mut per_domain: BTreeMap<String, MatchCounts> = BTreeMap::new();
    for (p, g) in align(predictions, gold)? {
        let kept: Vec<TargetSpan> = p
            .gold_spans
            .iter()
            .filter(|s| s.confidence >= min_confidence)
            .cloned()
            .collect();
        *per_domain.entry(g.sentence.domain.to_string()).or_default() += exact_match(&kept, &g.gold_spans);
    }
    let mut overall = MatchCounts::default();
    per_domain.values().for_each(|c| overall += *c);
    Ok(RunResult {
        per_domain: per_domain
            .into_iter()
            .map(|(d, c)| {
                (
                    d,
                    DomainResult {
                        counts: c,
                        metrics: prf(c),
                    },
                )
            })
            .collect(),
        overall: DomainResult {
            counts: overall,
            metrics: prf(overall),
        },
    })
}

pub fn evaluate_run(predictions: &[LabeledSentence], gold: &[LabeledSentence]) -> Result<RunResult> {
    evaluate_run_at(predictions, gold, f64::NEG_INFINITY)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Population standard deviation.
pub fn mean_std(xs: &[f64]) -> MeanStd {
    if xs.is_empty() {
        return MeanStd::default();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

impl MetricSummary {
    fn from_runs(xs: &[Prf]) -> Self {
        let pick = |f: fn(&Prf) -> f64| mean_std(&xs.iter().map(f).collect::<Vec<_>>());
        MetricSummary {
            precision: pick(|p| p.precision),
            recall: pick(|p| p.recall),
            f1: pick(|p| p.f1),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub per_domain: BTreeMap<String, Prf>,
    #[serde(rename = "macro")]
    pub macro_: Prf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub per_domain: BTreeMap<String, MetricSummary>,
    #[serde(rename = "macro")]
    pub macro_: MetricSummary,
    pub per_seed: Vec<SeedResult>,
}

/// Per-domain mean/std over seeds; macro is computed per seed first.
pub fn aggregate_seeds(runs: &[RunResult], dataset: &str) -> Result<EvalReport> {
    let Some(first) = runs.first() else {
        return Err(Error::DomainMismatch("no runs to aggregate".into()));
    };
    let domains: Vec<&String> = first.per_domain.keys().collect();
    for (i, r) in runs.iter().enumerate() {
        let these: Vec<&String> = r.per_domain.keys().collect();
        if these != domains {
            return Err(Error::DomainMismatch(format!(
                "run 0 has {domains:?} but run {i} has {these:?}"
            )));
        }
    }
    let per_seed: Vec<SeedResult> = runs
        .iter()
        .map(|r| SeedResult {
            per_domain: r.per_domain.iter().map(|(d, x)| (d.clone(), x.metrics)).collect(),
            macro_: r.macro_prf(),
        })
        .collect();
    let per_domain = domains
        .iter()
        .map(|d| {
            let xs: Vec<Prf> = per_seed.iter().map(|s| s.per_domain[*d]).collect();
            ((*d).clone(), MetricSummary::from_runs(&xs))
        })
        .collect();
    let macros: Vec<Prf> = per_seed.iter().map(|s| s.macro_).collect();
    Ok(EvalReport {
        dataset: dataset.to_string(),
        per_domain,
        macro_: MetricSummary::from_runs(&macros),
        per_seed,
    })
}

/// Plain-text table: one row per domain plus the macro row; values in percent.
pub fn render_table(report: &EvalReport) -> String {
    let width = report
        .per_domain
        .keys()
        .map(|d| d.chars().count())
        .max()
        .unwrap_or(0)
        .max("macro".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} ({} seed{})",
        report.dataset,
        report.per_seed.len(),
        if report.per_seed.len() == 1 { "" } else { "s" }
    );
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>13}", "domain", "P", "R", "F1");
    let row = |out: &mut String, name: &str, m: &MetricSummary| {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.1}  {:>6.1}  {:>6.1} ± {:>4.1}",
            name,
            100.0 * m.precision.mean,
            100.0 * m.recall.mean,
            100.0 * m.f1.mean,
            100.0 * m.f1.std
        );
    };
    for (d, m) in &report.per_domain {
        row(&mut out, d, m);
    }
    row(&mut out, "macro", &report.macro_);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub per_domain: BTreeMap<String, Vec<PrPoint>>,
}

/// For each threshold keep spans with confidence >= t, then average the
/// per-domain precision and recall pointwise across seeds.
pub fn pr_curve(
    seed_predictions: &[Vec<LabeledSentence>],
    gold: &[LabeledSentence],
    thresholds: &[f64],
) -> Result<PrCurve> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("thresholds must be strictly increasing".into()));
    }
    let mut sums: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for preds in seed_predictions {
        for (k, &t) in thresholds.iter().enumerate() {
            for (d, r) in evaluate_run_at(preds, gold, t)?.per_domain {
                let v = sums.entry(d).or_insert_with(|| vec![(0.0, 0.0); thresholds.len()]);
                v[k].0 += r.metrics.precision;
                v[k].1 += r.metrics.recall;
            }
        }
    }
    let n = seed_predictions.len().max(1) as f64;
    Ok(PrCurve {
        per_domain: sums
            .into_iter()
            .map(|(d, v)| {
                let pts = thresholds
                    .iter()
                    .zip(v)
                    .map(|(&threshold, (p, r))| PrPoint {
                        threshold,
                        precision: p / n,
                        recall: r / n,
                    })
                    .collect();
                (d, pts)
            })
            .collect(),
    })
}

pub fn write_pr_csv(path: &Path, curve: &PrCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["domain", "threshold", "precision", "recall"])
        .map_err(|e| csv_err(path, e))?;
    for (d, pts) in &curve.per_domain {
        for p in pts {
            w.write_record([
                d.as_str(),
                &format!("{:.4}", p.threshold),
                &format!("{:.6}", p.precision),
                &format!("{:.6}", p.recall),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Manual error categories offered to the annotator.
pub const ERROR_CATEGORIES: [&str; 4] = [
    "invalid target",
    "correct target with wrong sentiment or span",
    "borderline target that can be accepted",
    "clearly correct target",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanView {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub domain: String,
    pub sentence_id: String,
    pub text: String,
    pub predicted: SpanView,
    pub overlapping_gold: Vec<SpanView>,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub categories: Vec<String>,
    pub n_per_domain: usize,
    pub seed: u64,
    pub records: Vec<ErrorRecord>,
}

impl ErrorSample {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Sample up to `n_per_domain` false-positive predictions per domain.
pub fn sample_errors(
    predictions: &[LabeledSentence],
    gold: &[LabeledSentence],
    n_per_domain: usize,
    seed: u64,
) -> Result<ErrorSample> {
    if n_per_domain == 0 {
        return Err(Error::Config("n_per_domain must be >= 1".into()));
    }
    let mut by_domain: BTreeMap<String, Vec<ErrorRecord>> = BTreeMap::new();
    for (p, g) in align(predictions, gold)? {
        let (_, matched) = match_spans(&p.gold_spans, &g.gold_spans);
        for (span, hit) in p.gold_spans.iter().zip(matched) {
            if hit {
                continue;
            }
            let view = |s: &TargetSpan, conf: bool| SpanView {
                start: s.start,
                end: s.end,
                surface: s.surface.clone(),
                polarity: s.polarity,
                confidence: conf.then_some(s.confidence),
            };
            by_domain
                .entry(g.sentence.domain.to_string())
                .or_default()
                .push(ErrorRecord {
                    domain: g.sentence.domain.to_string(),
                    sentence_id: g.sentence.id().to_string(),
                    text: g.sentence.text.clone(),
                    predicted: view(span, true),
                    overlapping_gold: g
                        .gold_spans
                        .iter()
                        .filter(|x| x.overlaps(span))
                        .map(|x| view(x, false))
                        .collect(),
                    category: String::new(),
                });
        }
    }
    let mut records = Vec::new();
    for (domain, errs) in by_domain {
        let take = n_per_domain.min(errs.len());
        let mut rng = stage_rng(seed, &format!("errors/{domain}"));
        let mut picked = index::sample(&mut rng, errs.len(), take).into_vec();
        picked.sort_unstable();
        records.extend(picked.into_iter().map(|i| errs[i].clone()));
    }
    Ok(ErrorSample {
        categories: ERROR_CATEGORIES.iter().map(|c| c.to_string()).collect(),
        n_per_domain,
        seed,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DomainLabel, Sentence};

    fn pos(s: usize, e: usize) -> TargetSpan {
        TargetSpan::gold(s, e, Polarity::Positive)
    }

    #[test]
    fn exact_match_examples() {
        assert_eq!(
            exact_match(&[pos(4, 6)], &[pos(4, 6)]),
            MatchCounts { tp: 1, fp: 0, fn_: 0 }
        );
        assert_eq!(
            exact_match(&[pos(5, 6)], &[pos(4, 6)]),
            MatchCounts { tp: 0, fp: 1, fn_: 1 }
        );
        assert_eq!(exact_match(&[], &[]), MatchCounts::default());
        let neg = TargetSpan::gold(4, 6, Polarity::Negative);
        assert_eq!(exact_match(&[neg], &[pos(4, 6)]), MatchCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn prf_examples() {
        let m = prf(MatchCounts { tp: 2, fp: 1, fn_: 2 });
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(prf(MatchCounts::default()), Prf::default());
        assert_eq!(
            prf(MatchCounts { tp: 5, fp: 0, fn_: 0 }),
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    fn ls(id: usize, domain: &str, spans: Vec<TargetSpan>) -> LabeledSentence {
        LabeledSentence::new(
            Sentence::new("a b c d e f", DomainLabel::new(domain), format!("s{id}"), 0),
            spans,
        )
    }

    fn run(f1s: &[(&str, f64)]) -> RunResult {
        RunResult {
            per_domain: f1s
                .iter()
                .map(|(d, f)| {
                    (
                        d.to_string(),
                        DomainResult {
                            counts: MatchCounts::default(),
                            metrics: Prf {
                                precision: *f,
                                recall: *f,
                                f1: *f,
                            },
                        },
                    )
                })
                .collect(),
            overall: DomainResult::default(),
        }
    }

    #[test]
    fn aggregation() {
        let r = aggregate_seeds(
            &[run(&[("a", 50.0), ("b", 60.0)]), run(&[("a", 70.0), ("b", 80.0)])],
            "x",
        )
        .unwrap();
        assert!((r.macro_.f1.mean - 65.0).abs() < 1e-12);
        assert!((r.macro_.f1.std - 10.0).abs() < 1e-12);
        assert!((r.per_domain["a"].f1.mean - 60.0).abs() < 1e-12);
        let one = aggregate_seeds(&[run(&[("a", 40.0)])], "x").unwrap();
        assert_eq!(one.per_domain["a"].f1, MeanStd { mean: 40.0, std: 0.0 });
        let same: Vec<RunResult> = (0..10).map(|_| run(&[("a", 40.0), ("b", 30.0)])).collect();
        assert_eq!(aggregate_seeds(&same, "x").unwrap().macro_.f1.std, 0.0);
        assert!(aggregate_seeds(&[run(&[("a", 1.0)]), run(&[("b", 1.0)])], "x").is_err());
    }

    #[test]
    fn alignment_errors_list_ids() {
        let gold = vec![ls(1, "a", vec![]), ls(2, "a", vec![])];
        let preds = vec![ls(1, "a", vec![]), ls(3, "a", vec![])];
        let err = evaluate_run(&preds, &gold).unwrap_err().to_string();
        assert!(err.contains("s2#0") && err.contains("s3#0"), "{err}");
    }

    #[test]
    fn single_domain_equals_overall() {
        let gold = vec![ls(1, "a", vec![pos(0, 1)]), ls(2, "a", vec![pos(2, 3)])];
        let preds = vec![ls(1, "a", vec![pos(0, 1)]), ls(2, "a", vec![pos(3, 4)])];
        let r = evaluate_run(&preds, &gold).unwrap();
        assert_eq!(r.per_domain["a"], r.overall);
    }

    #[test]
    fn error_sampling_caps_and_is_seeded() {
        let gold: Vec<LabeledSentence> = (0..5).map(|i| ls(i, "a", vec![pos(0, 2)])).collect();
        let preds: Vec<LabeledSentence> = (0..5).map(|i| ls(i, "a", vec![pos(1, 2)])).collect();
        let s = sample_errors(&preds, &gold, 30, 1).unwrap();
        assert_eq!(s.records.len(), 5);
        assert_eq!(s.records[0].overlapping_gold.len(), 1);
        assert!(s.records.iter().all(|r| r.category.is_empty()));
        assert_eq!(s.categories.len(), 4);
        let a = sample_errors(&preds, &gold, 2, 9).unwrap();
        let b = sample_errors(&preds, &gold, 2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 2);
    }

    #[test]
    fn pr_curve_thresholds() {
        let gold = vec![ls(1, "a", vec![pos(0, 1), pos(2, 3)])];
        let mut p1 = pos(0, 1);
        p1.confidence = 0.9;
        let mut p2 = pos(2, 3);
        p2.confidence = 0.4;
        let preds = vec![ls(1, "a", vec![p1, p2])];
        let c = pr_curve(std::slice::from_ref(&preds), &gold, &[0.0, 0.5, 1.01]).unwrap();
        let recalls: Vec<f64> = c.per_domain["a"].iter().map(|p| p.recall).collect();
        assert_eq!(recalls, vec![1.0, 0.5, 0.0]);
        assert!(pr_curve(&[preds], &gold, &[0.5, 0.5]).is_err());
    }
}
