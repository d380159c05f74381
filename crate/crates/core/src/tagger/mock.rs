//! A memorizing stand-in for an external tagger, used to exercise the
//! protocol end to end without a language model.

use std::collections::{BTreeMap, HashMap};

use super::protocol::{Backend, WireLabeled, WirePrediction, WireTokens, WireTrainConfig, PROTOCOL_VERSION};
use super::scheme::{TokenDistribution, TokenLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// One distribution per word.
    Words,
    /// Words of 5+ chars are split into two pieces; the label sits on the second.
    Pieces,
    /// Every token gets a uniform distribution.
    Uniform,
}

/// Model id that is available without training; tags "electric car" positive.
pub const DEMO_MODEL: &str = "demo";

pub struct MockBackend {
    mode: MockMode,
    version: u32,
    models: HashMap<String, HashMap<String, TokenLabel>>,
}

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        let demo = [("electric", TokenLabel::Pos), ("car", TokenLabel::Pos)]
            .into_iter()
            .map(|(w, l)| (w.to_string(), l))
            .collect();
        MockBackend {
            mode,
            version: PROTOCOL_VERSION,
            models: HashMap::from([(DEMO_MODEL.to_string(), demo)]),
        }
    }

    pub fn with_version(mut self, version: u32) -> Self {
        self.version = version;
        self
    }

    fn word_dist(label: TokenLabel) -> TokenDistribution {
        let mut p = [0.05; 3];
        p[label.index()] = 0.9;
        TokenDistribution::from_array(p)
    }
}

impl Backend for MockBackend {
    fn version(&self) -> u32 {
        self.version
    }

    fn piece_level(&self) -> bool {
        self.mode == MockMode::Pieces
    }

    fn train(
        &mut self,
        _config: &WireTrainConfig,
        train: &[WireLabeled],
        _dev: &[WireLabeled],
        seed: u64,
    ) -> Result<String, String> {
        if train.is_empty() {
            return Err("empty training set".into());
        }
        let mut votes: HashMap<String, BTreeMap<TokenLabel, usize>> = HashMap::new();
        for ex in train {
            if ex.tokens.len() != ex.labels.len() {
                return Err(format!("{} tokens but {} labels", ex.tokens.len(), ex.labels.len()));
            }
            for (t, l) in ex.tokens.iter().zip(&ex.labels) {
                *votes.entry(t.to_lowercase()).or_default().entry(*l).or_insert(0) += 1;
            }
        }
        let table = votes
            .into_iter()
            .map(|(w, v)| {
                let best = v
                    .iter()
                    .max_by_key(|(l, c)| (**c, std::cmp::Reverse(**l)))
                    .map(|(l, _)| *l);
                (w, best.unwrap_or(TokenLabel::None))
            })
            .collect();
        let id = format!("mock-{}-{seed}", self.models.len());
        self.models.insert(id.clone(), table);
        Ok(id)
    }

    fn predict(&mut self, model_id: &str, sentences: &[WireTokens]) -> Result<Vec<WirePrediction>, String> {
        let table = self
            .models
            .get(model_id)
            .ok_or_else(|| format!("unknown model_id {model_id:?}"))?;
        Ok(sentences
            .iter()
            .map(|s| {
                let dists: Vec<TokenDistribution> = s
                    .tokens
                    .iter()
                    .map(|t| match self.mode {
                        MockMode::Uniform => TokenDistribution::uniform(),
                        _ => Self::word_dist(*table.get(&t.to_lowercase()).unwrap_or(&TokenLabel::None)),
                    })
                    .collect();
                if self.mode != MockMode::Pieces {
                    return WirePrediction::Words { distributions: dists };
                }
                let mut pieces = Vec::new();
                let mut piece_to_word = Vec::new();
                for (w, (tok, d)) in s.tokens.iter().zip(dists).enumerate() {
                    if tok.chars().count() >= 5 {
                        pieces.push(Self::word_dist(TokenLabel::None));
                        piece_to_word.push(w);
                    }
                    pieces.push(d);
                    piece_to_word.push(w);
                }
                WirePrediction::Pieces { pieces, piece_to_word }
            })
            .collect())
    }
}
