//! The self-training loop: train on labeled data, predict on the pool,
//! select weak labels, retrain from scratch, repeat. Every iteration is
//! persisted before the next one starts, so an interrupted run resumes.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stage_rng};
use crate::tagger::{encode_labels, BaselineConfig, LabeledSentence, TaggerModel, TokenCounts, TrainReport, Trainer};
use crate::weaklabel::{
    build_weak_set, merge_training_set, write_weak_set, Prediction, SelectionConfig, SelectionStats,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub min_delta: f64,
    pub dev_fraction: f64,
    /// Epochs without a `min_delta` improvement before stopping.
    pub patience: usize,
    pub baseline: BaselineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            adam_epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 15,
            min_delta: 0.005,
            dev_fraction: 0.2,
            patience: 2,
            baseline: BaselineConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(Error::Config(format!(
                "dev_fraction must be in (0, 1), got {}",
                self.dev_fraction
            )));
        }
        if self.max_epochs < 1 || self.batch_size < 1 || self.patience < 1 {
            return Err(Error::Config("max_epochs, batch_size and patience must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Self-training rounds after the initial model; 0 trains on labeled data only.
    pub iterations: usize,
    pub selection: SelectionConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Not persisted: a run directory can be moved or copied and resumed.
    #[serde(skip)]
    pub artifact_dir: PathBuf,
    /// Draw the dev split from labeled data only instead of labeled + weak.
    pub dev_from_labeled_only: bool,
    /// Sentences per prediction request.
    pub predict_chunk: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            iterations: 3,
            selection: SelectionConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
            artifact_dir: PathBuf::from("artifacts"),
            dev_from_labeled_only: false,
            predict_chunk: 512,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.selection.validate()?;
        if self.predict_chunk == 0 {
            return Err(Error::Config("predict_chunk must be positive".into()));
        }
        Ok(())
    }
}

/// Seeded uniform split; `|dev| = round(fraction * N)`, kept within `[1, N-1]`.
pub fn split_dev(
    labeled: &[LabeledSentence],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledSentence>, Vec<LabeledSentence>)> {
    let n = labeled.len();
    if n < 2 {
        return Err(Error::TooFewSentences(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("dev fraction must be in (0, 1), got {fraction}")));
    }
    let dev_size = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stage_rng(seed, "dev-split"));
    let mut is_dev = vec![false; n];
    order[..dev_size].iter().for_each(|&i| is_dev[i] = true);
    let (dev, train): (Vec<_>, Vec<_>) = labeled.iter().cloned().zip(is_dev).partition(|(_, d)| *d);
    Ok((
        train.into_iter().map(|(l, _)| l).collect(),
        dev.into_iter().map(|(l, _)| l).collect(),
    ))
}

/// Micro token F1 with POS and NEG as positive classes.
pub fn token_f1(model: &TaggerModel, dev: &[LabeledSentence]) -> Result<f64> {
    let sentences: Vec<Sentence> = dev.iter().map(|l| l.sentence.clone()).collect();
    let dists = model.distributions(&sentences)?;
    let mut counts = TokenCounts::default();
    for (ls, d) in dev.iter().zip(&dists) {
        let predicted: Vec<_> = d.iter().map(|x| x.argmax()).collect();
        counts.add(&predicted, &encode_labels(ls)?);
    }
    Ok(counts.f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationArtifact {
    pub iteration: usize,
    pub model_path: PathBuf,
    pub weak_path: Option<PathBuf>,
    pub selection: Option<SelectionStats>,
    pub train_size: usize,
    pub dev_size: usize,
    pub train_report: TrainReport,
}

pub struct LoopOutcome {
    pub model: TaggerModel,
    pub artifacts: Vec<IterationArtifact>,
    /// Iterations restored from disk instead of recomputed.
    pub resumed: usize,
}

const CONFIG_FILE: &str = "loop_config.json";

fn iteration_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("iter-{i}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_manifest(root: &Path, i: usize) -> Option<IterationArtifact> {
    let raw = fs::read_to_string(iteration_dir(root, i).join("manifest.json")).ok()?;
    serde_json::from_str(&raw).ok()
}

/// Predict on the whole pool in chunks.
pub fn predict_pool(model: &TaggerModel, pool: &[Sentence], chunk: usize) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(pool.len());
    for part in pool.chunks(chunk.max(1)) {
        let spans = model.predict(part)?;
        out.extend(part.iter().cloned().zip(spans));
    }
    Ok(out)
}

/// Run (or resume) the loop. Artifacts for iteration `i` live under
/// `artifact_dir/iter-i/`; `manifest.json` is written last and marks the
/// iteration complete.
pub fn run_self_training(
    labeled: &[LabeledSentence],
    pool: &[Sentence],
    cfg: &LoopConfig,
    trainer: &dyn Trainer,
) -> Result<LoopOutcome> {
    cfg.validate()?;
    let root = &cfg.artifact_dir;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let config_path = root.join(CONFIG_FILE);
    let config_json = serde_json::to_string_pretty(cfg)? + "\n";
    if let Ok(existing) = fs::read_to_string(&config_path) {
        if existing != config_json {
            return Err(Error::Config(format!(
                "{} holds a run with a different configuration",
                root.display()
            )));
        }
    } else {
        fs::write(&config_path, &config_json).map_err(|e| Error::io(&config_path, e))?;
    }

    let mut artifacts: Vec<IterationArtifact> = Vec::new();
    while artifacts.len() <= cfg.iterations {
        match read_manifest(root, artifacts.len()) {
            Some(a) => artifacts.push(a),
            None => break,
        }
    }
    let resumed = artifacts.len();
    let mut model = match artifacts.last() {
        Some(a) => {
            info!("resuming after iteration {}", a.iteration);
            Some(trainer.restore(&root.join(&a.model_path))?)
        }
        None => None,
    };

    for i in resumed..=cfg.iterations {
        let dir = iteration_dir(root, i);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let split_seed = derive_seed(cfg.seed, &format!("split/{i}"));
        let train_seed = derive_seed(cfg.seed, &format!("train/{i}"));

        let (weak_path, selection, weak) = match &model {
            None => (None, None, Default::default()),
            Some(prev) => {
                let predictions = predict_pool(prev, pool, cfg.predict_chunk)?;
                let sel_cfg = SelectionConfig {
                    rng_seed: derive_seed(cfg.selection.rng_seed, &format!("iteration/{i}")),
                    ..cfg.selection
                };
                let (weak, stats) = build_weak_set(&predictions, &sel_cfg);
                let weak_file = dir.join("weak.jsonl");
                write_weak_set(&weak_file, &weak)?;
                stats.write(&dir.join("selection.json"))?;
                info!(
                    "iteration {i}: {} target + {} no-target weak sentences",
                    weak.target_part.len(),
                    weak.non_target_part.len()
                );
                (Some(PathBuf::from(format!("iter-{i}/weak.jsonl"))), Some(stats), weak)
            }
        };

        let (train, dev) = if cfg.dev_from_labeled_only || weak.is_empty() {
            let (ld_train, dev) = split_dev(labeled, cfg.train.dev_fraction, split_seed)?;
            (merge_training_set(&ld_train, &weak), dev)
        } else {
            split_dev(&merge_training_set(labeled, &weak), cfg.train.dev_fraction, split_seed)?
        };

        let (new_model, report) = trainer.train(&train, &dev, &cfg.train, train_seed)?;
        let model_rel = PathBuf::from(format!("iter-{i}/model.json"));
        new_model.save(&root.join(&model_rel))?;
        let artifact = IterationArtifact {
            iteration: i,
            model_path: model_rel,
            weak_path,
            selection,
            train_size: train.len(),
            dev_size: dev.len(),
            train_report: report,
        };
        write_json(&dir.join("manifest.json"), &artifact)?;
        info!(
            "iteration {i}: trained on {} sentences, best dev token F1 {:.4}",
            train.len(),
            artifact.train_report.dev_trace.iter().copied().fold(0.0, f64::max)
        );
        artifacts.push(artifact);
        model = Some(new_model);
    }

    Ok(LoopOutcome {
        model: model.expect("at least one iteration runs"),
        artifacts,
        resumed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DomainLabel;

    fn data(n: usize) -> Vec<LabeledSentence> {
        (0..n)
            .map(|i| LabeledSentence::new(Sentence::new("a b", DomainLabel::new("d"), format!("r{i}"), 0), vec![]))
            .collect()
    }

    #[test]
    fn split_sizes() {
        let (train, dev) = split_dev(&data(100), 0.2, 1).unwrap();
        assert_eq!((train.len(), dev.len()), (80, 20));
        let (train, dev) = split_dev(&data(3), 0.5, 1).unwrap();
        assert_eq!((train.len(), dev.len()), (1, 2));
        assert!(matches!(split_dev(&data(1), 0.2, 1), Err(Error::TooFewSentences(1))));
        assert!(split_dev(&data(10), 1.0, 1).is_err());
    }

    #[test]
    fn split_is_seeded_partition() {
        let all = data(50);
        let (a_train, a_dev) = split_dev(&all, 0.2, 4).unwrap();
        let (b_train, b_dev) = split_dev(&all, 0.2, 4).unwrap();
        assert_eq!(a_dev, b_dev);
        assert_eq!(a_train, b_train);
        let mut ids: Vec<String> = a_train
            .iter()
            .chain(&a_dev)
            .map(|l| l.sentence.review_id.clone())
            .collect();
        ids.sort();
        let mut expected: Vec<String> = all.iter().map(|l| l.sentence.review_id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
        let (_, c_dev) = split_dev(&all, 0.2, 5).unwrap();
        assert_ne!(a_dev, c_dev);
    }

    #[test]
    fn train_config_defaults() {
        let c = TrainConfig::default();
        assert_eq!(
            (
                c.learning_rate,
                c.adam_epsilon,
                c.batch_size,
                c.max_epochs,
                c.min_delta,
                c.dev_fraction
            ),
            (3e-5, 1e-8, 32, 15, 0.005, 0.2)
        );
        assert!(TrainConfig { dev_fraction: 0.0, ..c }.validate().is_err());
        assert!(TrainConfig { max_epochs: 0, ..c }.validate().is_err());
        assert_eq!(LoopConfig::default().iterations, 3);
    }
}
