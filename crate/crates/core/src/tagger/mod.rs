//! Tagging: the IO scheme, the built-in baseline classifier and the
//! external tagger protocol.

pub mod baseline;
pub mod conformance;
pub mod external;
pub mod mock;
pub mod protocol;
pub mod scheme;

use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use baseline::{train_baseline, BaselineConfig, BaselineModel, TrainReport};
pub use external::{Endpoint, ExternalClient};
pub use mock::{MockBackend, MockMode};
pub use scheme::{
    check_spans, decode_sentence, decode_spans, encode_labels, encode_spans, merge_word_pieces, LabeledSentence,
    PieceAlignment, Polarity, Provenance, TargetSpan, TokenCounts, TokenDistribution, TokenLabel,
};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::lexicon::SentimentLexicon;
use crate::selftrain::TrainConfig;
use protocol::{WireLabeled, WireTrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaggerKind {
    Baseline,
    External,
}

/// Handle to a model living in an external tagger session.
#[derive(Clone)]
pub struct ExternalModel {
    pub model_id: String,
    pub training_seed: u64,
    client: Arc<Mutex<ExternalClient>>,
}

impl ExternalModel {
    pub fn new(client: Arc<Mutex<ExternalClient>>, model_id: String, training_seed: u64) -> Self {
        ExternalModel {
            model_id,
            training_seed,
            client,
        }
    }
}

pub enum TaggerModel {
    Baseline(BaselineModel),
    External(ExternalModel),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum StoredModel {
    Baseline(BaselineModel),
    External { model_id: String, training_seed: u64 },
}

impl TaggerModel {
    pub fn kind(&self) -> TaggerKind {
        match self {
            TaggerModel::Baseline(_) => TaggerKind::Baseline,
            TaggerModel::External(_) => TaggerKind::External,
        }
    }

    pub fn training_seed(&self) -> u64 {
        match self {
            TaggerModel::Baseline(m) => m.training_seed,
            TaggerModel::External(m) => m.training_seed,
        }
    }

    /// Word-level distributions for each sentence.
    pub fn distributions(&self, sentences: &[Sentence]) -> Result<Vec<Vec<TokenDistribution>>> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        match self {
            TaggerModel::Baseline(m) => Ok(m.distributions_batch(sentences)),
            TaggerModel::External(m) => {
                let mut client = m
                    .client
                    .lock()
                    .map_err(|_| Error::protocol("predict", "client lock poisoned"))?;
                client.predict(&m.model_id, sentences)
            }
        }
    }

    pub fn predict(&self, sentences: &[Sentence]) -> Result<Vec<Vec<TargetSpan>>> {
        Ok(self
            .distributions(sentences)?
            .iter()
            .zip(sentences)
            .map(|(d, s)| decode_sentence(s, d))
            .collect())
    }

    /// Predictions wrapped as labeled sentences, ready for evaluation or writing.
    pub fn predict_labeled(&self, sentences: &[Sentence]) -> Result<Vec<LabeledSentence>> {
        Ok(self
            .predict(sentences)?
            .into_iter()
            .zip(sentences)
            .map(|(spans, s)| LabeledSentence::new(s.clone(), spans))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let stored = match self {
            TaggerModel::Baseline(m) => StoredModel::Baseline(m.clone()),
            TaggerModel::External(m) => StoredModel::External {
                model_id: m.model_id.clone(),
                training_seed: m.training_seed,
            },
        };
        let json = serde_json::to_string(&stored)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Load a saved model; external models need a live client.
    pub fn load(path: &Path, client: Option<Arc<Mutex<ExternalClient>>>) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match serde_json::from_str::<StoredModel>(&raw)? {
            StoredModel::Baseline(mut m) => {
                m.rebuild_index();
                Ok(TaggerModel::Baseline(m))
            }
            StoredModel::External {
                model_id,
                training_seed,
            } => {
                let client = client.ok_or_else(|| {
                    Error::Config(format!(
                        "{} is an external model; an endpoint is required",
                        path.display()
                    ))
                })?;
                Ok(TaggerModel::External(ExternalModel::new(
                    client,
                    model_id,
                    training_seed,
                )))
            }
        }
    }
}

/// Something that can fit a fresh model from labeled data.
pub trait Trainer {
    fn kind(&self) -> TaggerKind;
    fn train(
        &self,
        train: &[LabeledSentence],
        dev: &[LabeledSentence],
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<(TaggerModel, TrainReport)>;

    /// Reload a model saved by `TaggerModel::save`.
    fn restore(&self, path: &Path) -> Result<TaggerModel> {
        TaggerModel::load(path, None)
    }
}

pub struct BaselineTrainer {
    pub lexicon: Option<Arc<SentimentLexicon>>,
}

impl Trainer for BaselineTrainer {
    fn kind(&self) -> TaggerKind {
        TaggerKind::Baseline
    }

    fn train(
        &self,
        train: &[LabeledSentence],
        dev: &[LabeledSentence],
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<(TaggerModel, TrainReport)> {
        let (m, report) = train_baseline(train, dev, cfg, self.lexicon.as_ref(), seed)?;
        Ok((TaggerModel::Baseline(m), report))
    }
}

pub struct ExternalTrainer {
    pub client: Arc<Mutex<ExternalClient>>,
}

impl ExternalTrainer {
    pub fn connect(endpoint: &Endpoint) -> Result<Self> {
        Ok(ExternalTrainer {
            client: Arc::new(Mutex::new(ExternalClient::connect(endpoint)?)),
        })
    }
}

impl Trainer for ExternalTrainer {
    fn kind(&self) -> TaggerKind {
        TaggerKind::External
    }

    fn restore(&self, path: &Path) -> Result<TaggerModel> {
        TaggerModel::load(path, Some(self.client.clone()))
    }

    fn train(
        &self,
        train: &[LabeledSentence],
        dev: &[LabeledSentence],
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<(TaggerModel, TrainReport)> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let wire = |xs: &[LabeledSentence]| xs.iter().map(WireLabeled::from_labeled).collect::<Result<Vec<_>>>();
        let model_id = self
            .client
            .lock()
            .map_err(|_| Error::protocol("train", "client lock poisoned"))?
            .train(WireTrainConfig::from(cfg), wire(train)?, wire(dev)?, seed)?;
        Ok((
            TaggerModel::External(ExternalModel::new(self.client.clone(), model_id, seed)),
            TrainReport::default(),
        ))
    }
}
