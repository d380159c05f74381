//! Newline-delimited JSON messages spoken between the pipeline and an
//! external tagger process (stdin/stdout or TCP).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::scheme::{encode_labels, LabeledSentence, TokenDistribution, TokenLabel};
use crate::error::Result;
use crate::selftrain::TrainConfig;

pub const PROTOCOL_VERSION: u32 = 1;

/// Hyperparameters forwarded to the external trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireTrainConfig {
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub min_delta: f64,
}

impl From<&TrainConfig> for WireTrainConfig {
    fn from(c: &TrainConfig) -> Self {
        WireTrainConfig {
            learning_rate: c.learning_rate,
            adam_epsilon: c.adam_epsilon,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            min_delta: c.min_delta,
        }
    }
}

/// Word-level training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireLabeled {
    pub text: String,
    pub domain: String,
    pub tokens: Vec<String>,
    pub labels: Vec<TokenLabel>,
}

impl WireLabeled {
    pub fn from_labeled(ls: &LabeledSentence) -> Result<Self> {
        Ok(WireLabeled {
            text: ls.sentence.text.clone(),
            domain: ls.sentence.domain.to_string(),
            tokens: ls.sentence.tokens.clone(),
            labels: encode_labels(ls)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTokens {
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WirePrediction {
    Pieces {
        pieces: Vec<TokenDistribution>,
        piece_to_word: Vec<usize>,
    },
    Words {
        distributions: Vec<TokenDistribution>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello {
        version: u32,
    },
    Train {
        config: WireTrainConfig,
        train: Vec<WireLabeled>,
        dev: Vec<WireLabeled>,
        seed: u64,
    },
    Predict {
        model_id: String,
        sentences: Vec<WireTokens>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Response {
    Hello { version: u32, piece_level: bool },
    Trained { model_id: String },
    Predictions { predictions: Vec<WirePrediction> },
    Error { stage: String, message: String },
}

/// Server-side model host.
pub trait Backend {
    fn version(&self) -> u32 {
        PROTOCOL_VERSION
    }
    fn piece_level(&self) -> bool;
    fn train(
        &mut self,
        config: &WireTrainConfig,
        train: &[WireLabeled],
        dev: &[WireLabeled],
        seed: u64,
    ) -> std::result::Result<String, String>;
    fn predict(&mut self, model_id: &str, sentences: &[WireTokens])
        -> std::result::Result<Vec<WirePrediction>, String>;
}

fn error(stage: &str, message: impl Into<String>) -> Response {
    Response::Error {
        stage: stage.to_string(),
        message: message.into(),
    }
}

/// Answer requests until the reader closes. Bad requests get an `error`
/// response and the session continues.
pub fn serve<B: Backend, R: BufRead, W: Write>(backend: &mut B, reader: R, mut writer: W) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Err(e) => error("decode", format!("bad request: {e}")),
            Ok(Request::Hello { .. }) => Response::Hello {
                version: backend.version(),
                piece_level: backend.piece_level(),
            },
            Ok(Request::Train {
                config,
                train,
                dev,
                seed,
            }) => match backend.train(&config, &train, &dev, seed) {
                Ok(model_id) => Response::Trained { model_id },
                Err(m) => error("train", m),
            },
            Ok(Request::Predict { model_id, sentences }) => match backend.predict(&model_id, &sentences) {
                Ok(predictions) => Response::Predictions { predictions },
                Err(m) => error("predict", m),
            },
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
