//! Built-in tagger: a per-token softmax classifier over sparse lexical
//! features, trained with mini-batch AdaGrad on cross-entropy.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scheme::{encode_labels, LabeledSentence, TokenCounts, TokenDistribution, TokenLabel};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::lexicon::SentimentLexicon;
use crate::selftrain::TrainConfig;
use crate::text::normalize_word;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub l2: f64,
    /// Probability of hiding a training token's identity features so the
    /// context weights learn to handle unseen words.
    pub word_dropout: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            learning_rate: 0.5,
            l2: 1e-4,
            word_dropout: 0.5,
        }
    }
}

/// Feature strings for token `i`: identity, shape, lexicon bucket, a
/// two-word window on each side and the polarity of the nearest lexicon
/// word within three tokens on each side.
fn token_features(tokens: &[String], i: usize, lexicon: Option<&LexiconTable>) -> Vec<String> {
    let word = &tokens[i];
    let lower = word.to_lowercase();
    let at = |j: isize| -> String {
        if j < 0 {
            "<s>".to_string()
        } else {
            tokens
                .get(j as usize)
                .map_or_else(|| "</s>".to_string(), |t| t.to_lowercase())
        }
    };
    let bucket = |j: isize| -> String {
        usize::try_from(j)
            .ok()
            .and_then(|j| tokens.get(j))
            .and_then(|t| lexicon.and_then(|l| l.get(&normalize_word(t))))
            .map_or_else(|| "none".to_string(), |s| score_bucket(*s))
    };
    let suffix: String = {
        let chars: Vec<char> = lower.chars().collect();
        chars[chars.len().saturating_sub(3)..].iter().collect()
    };
    let nearest = |steps: &mut dyn Iterator<Item = isize>| -> &'static str {
        steps
            .map(bucket)
            .find(|b| b != "none")
            .map_or("none", |b| if b.starts_with('+') { "+" } else { "-" })
    };
    let cap = word.chars().next().is_some_and(char::is_uppercase);
    let i = i as isize;
    vec![
        "bias".to_string(),
        format!("w={word}"),
        format!("lw={lower}"),
        format!("lex={}", bucket(i)),
        format!("pw={}", at(i - 1)),
        format!("nw={}", at(i + 1)),
        format!("p2w={}", at(i - 2)),
        format!("n2w={}", at(i + 2)),
        format!("plex={}", bucket(i - 1)),
        format!("nlex={}", bucket(i + 1)),
        format!("cap={cap}"),
        format!("suf={suffix}"),
        format!("lsent={}", nearest(&mut (i - 3..i).rev())),
        format!("rsent={}", nearest(&mut (i + 1..=i + 3))),
    ]
}

/// Positions of the word-identity features in `token_features` output.
const IDENTITY_SLOTS: [usize; 3] = [1, 2, 11];

fn score_bucket(score: f64) -> String {
    let sign = if score >= 0.0 { '+' } else { '-' };
    let tenth = ((score.abs() * 10.0).floor() as i64).min(9);
    format!("{sign}{tenth}")
}

type LexiconTable = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub training_seed: u64,
    features: Vec<String>,
    weights: Vec<[f64; 3]>,
    lexicon: Option<LexiconTable>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl BaselineModel {
    fn new(features: Vec<String>, lexicon: Option<LexiconTable>, seed: u64) -> Self {
        let weights = vec![[0.0; 3]; features.len()];
        let mut m = BaselineModel {
            training_seed: seed,
            features,
            weights,
            lexicon,
            index: HashMap::new(),
        };
        m.rebuild_index();
        m
    }

    /// Must be called after deserializing.
    pub fn rebuild_index(&mut self) {
        self.index = self.features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    fn feature_ids(&self, tokens: &[String]) -> Vec<Vec<usize>> {
        (0..tokens.len())
            .map(|i| {
                token_features(tokens, i, self.lexicon.as_ref())
                    .iter()
                    .filter_map(|f| self.index.get(f).copied())
                    .collect()
            })
            .collect()
    }

    fn logits(&self, ids: &[usize]) -> [f64; 3] {
        let mut z = [0.0; 3];
        for &f in ids {
            for (zk, wk) in z.iter_mut().zip(&self.weights[f]) {
                *zk += wk;
            }
        }
        z
    }

    pub fn distributions(&self, tokens: &[String]) -> Vec<TokenDistribution> {
        self.feature_ids(tokens)
            .iter()
            .map(|ids| TokenDistribution::softmax(self.logits(ids)))
            .collect()
    }

    pub fn distributions_batch(&self, sentences: &[Sentence]) -> Vec<Vec<TokenDistribution>> {
        sentences.par_iter().map(|s| self.distributions(&s.tokens)).collect()
    }

    pub fn labels(&self, tokens: &[String]) -> Vec<TokenLabel> {
        self.distributions(tokens).iter().map(|d| d.argmax()).collect()
    }
}

/// Token F1 of a baseline model against gold labels.
fn dev_token_f1(model: &BaselineModel, dev: &[(Vec<String>, Vec<TokenLabel>)]) -> f64 {
    let mut counts = TokenCounts::default();
    for (tokens, gold) in dev {
        counts.add(&model.labels(tokens), gold);
    }
    counts.f1()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub dev_trace: Vec<f64>,
    pub stopped_early: bool,
}

struct Example {
    features: Vec<Vec<usize>>,
    labels: Vec<TokenLabel>,
}

/// Early-stopping bookkeeping: an epoch counts as an improvement only if it
/// beats the best score by at least `min_delta`.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    min_delta: f64,
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(min_delta: f64, patience: usize) -> Self {
        EarlyStopping {
            min_delta,
            patience,
            best: None,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Record a score; returns `(improved, should_stop)`.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        let improved = match self.best {
            None => true,
            Some(b) => score - b >= self.min_delta,
        };
        if improved {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        (improved, self.wait >= self.patience)
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

pub fn train_baseline(
    train: &[LabeledSentence],
    dev: &[LabeledSentence],
    cfg: &TrainConfig,
    lexicon: Option<&Arc<SentimentLexicon>>,
    seed: u64,
) -> Result<(BaselineModel, TrainReport)> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if cfg.max_epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("max_epochs and batch_size must be positive".into()));
    }
    let lex_table: Option<LexiconTable> = lexicon.map(|l| l.words().map(|(w, s)| (w.to_string(), s)).collect());

    // Feature vocabulary in order of first appearance.
    let mut vocab: Vec<String> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut encoded = Vec::with_capacity(train.len());
    for ls in train {
        let labels = encode_labels(ls)?;
        let tokens = &ls.sentence.tokens;
        let features = (0..tokens.len())
            .map(|i| {
                token_features(tokens, i, lex_table.as_ref())
                    .into_iter()
                    .map(|f| {
                        let next = vocab.len();
                        *seen.entry(f.clone()).or_insert_with(|| {
                            vocab.push(f);
                            next
                        })
                    })
                    .collect()
            })
            .collect();
        encoded.push(Example { features, labels });
    }
    let dev_set: Vec<(Vec<String>, Vec<TokenLabel>)> = dev
        .iter()
        .map(|ls| Ok((ls.sentence.tokens.clone(), encode_labels(ls)?)))
        .collect::<Result<_>>()?;

    let mut model = BaselineModel::new(vocab, lex_table, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.min_delta, cfg.patience);
    let mut best_weights = model.weights.clone();
    let mut accum = vec![[0.0f64; 3]; model.weights.len()];
    let mut report = TrainReport::default();
    let lr = cfg.baseline.learning_rate;
    let l2 = cfg.baseline.l2;
    let word_dropout = cfg.baseline.word_dropout;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad: HashMap<usize, [f64; 3]> = HashMap::new();
            for &ex in batch {
                let ex = &encoded[ex];
                for (ids, label) in ex.features.iter().zip(&ex.labels) {
                    let dropped;
                    let ids = if word_dropout > 0.0 && rng.random_bool(word_dropout) {
                        dropped = ids
                            .iter()
                            .enumerate()
                            .filter(|(slot, _)| !IDENTITY_SLOTS.contains(slot))
                            .map(|(_, &f)| f)
                            .collect::<Vec<_>>();
                        &dropped
                    } else {
                        ids
                    };
                    let p = TokenDistribution::softmax(model.logits(ids)).as_array();
                    let mut g = p;
                    g[label.index()] -= 1.0;
                    for &f in ids {
                        let acc = grad.entry(f).or_insert([0.0; 3]);
                        for k in 0..3 {
                            acc[k] += g[k];
                        }
                    }
                }
            }
            // AdaGrad step with L2 on the touched rows only.
            let n = batch.len() as f64;
            for (f, g) in grad {
                let w = &mut model.weights[f];
                let h = &mut accum[f];
                for k in 0..3 {
                    let gk = g[k] / n + l2 * w[k];
                    h[k] += gk * gk;
                    w[k] -= lr * gk / (h[k].sqrt() + 1e-8);
                }
            }
        }
        report.epochs_run = epoch;
        if dev_set.is_empty() {
            continue;
        }
        let f1 = dev_token_f1(&model, &dev_set);
        report.dev_trace.push(f1);
        let (improved, stop) = stopper.observe(epoch, f1);
        if improved {
            best_weights.clone_from(&model.weights);
        }
        if stop {
            report.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    if dev_set.is_empty() {
        report.best_epoch = report.epochs_run;
    } else {
        report.best_epoch = stopper.best_epoch();
        model.weights = best_weights;
    }
    Ok((model, report))
}
