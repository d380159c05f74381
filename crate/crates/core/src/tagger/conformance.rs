//! Protocol conformance checks runnable against any tagger endpoint.

use super::external::{Endpoint, ExternalClient};
use super::protocol::{WireLabeled, WireTrainConfig};
use super::scheme::{LabeledSentence, Polarity, TargetSpan};
use crate::corpus::{DomainLabel, Sentence};
use crate::error::Error;
use crate::selftrain::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn from_result(name: &'static str, r: Result<String, String>) -> Self {
        match r {
            Ok(detail) => Check {
                name,
                passed: true,
                detail,
            },
            Err(detail) => Check {
                name,
                passed: false,
                detail,
            },
        }
    }
}

/// Fifty short labeled sentences with one target each.
pub fn fixture_sentences() -> Vec<LabeledSentence> {
    let targets = ["pizza", "battery", "room", "engine", "plot"];
    let good = ["great", "superb", "lovely", "excellent", "fantastic"];
    let bad = ["awful", "terrible", "dreadful", "poor", "horrible"];
    (0..50)
        .map(|i| {
            let t = targets[i % 5];
            let (w, pol) = if i % 2 == 0 {
                (good[(i / 5) % 5], Polarity::Positive)
            } else {
                (bad[(i / 5) % 5], Polarity::Negative)
            };
            let text = format!("honestly the {t} was {w} for us");
            let s = Sentence::new(text, DomainLabel::new("conformance"), format!("c{i}"), 0);
            LabeledSentence::new(s, vec![TargetSpan::gold(2, 3, pol)])
        })
        .collect()
}

pub fn run_endpoint(endpoint: &Endpoint) -> Vec<Check> {
    match ExternalClient::connect(endpoint) {
        Ok(client) => {
            let mut checks = vec![Check {
                name: "handshake",
                passed: true,
                detail: format!("piece_level={}", client.piece_level()),
            }];
            checks.extend(run(client));
            checks
        }
        Err(e) => vec![Check {
            name: "handshake",
            passed: false,
            detail: e.to_string(),
        }],
    }
}

/// Round-trip and error-path checks on an already-connected client.
pub fn run(mut client: ExternalClient) -> Vec<Check> {
    let data = fixture_sentences();
    let sentences: Vec<Sentence> = data.iter().map(|l| l.sentence.clone()).collect();
    let wire: Vec<WireLabeled> = data
        .iter()
        .map(|l| WireLabeled::from_labeled(l).expect("fixture spans are valid"))
        .collect();
    let cfg = TrainConfig {
        max_epochs: 1,
        ..TrainConfig::default()
    };

    let mut model_id = None;
    let mut checks = Vec::new();
    checks.push(Check::from_result(
        "train",
        client
            .train(WireTrainConfig::from(&cfg), wire[..40].to_vec(), wire[40..].to_vec(), 7)
            .map(|id| {
                model_id = Some(id.clone());
                format!("model_id={id}")
            })
            .map_err(|e| e.to_string()),
    ));

    let round_trip = match &model_id {
        None => Err("no model to predict with".to_string()),
        Some(id) => client
            .predict(id, &sentences)
            .map_err(|e| e.to_string())
            .and_then(|preds| {
                if preds.len() != sentences.len() {
                    return Err(format!("{} predictions for {} sentences", preds.len(), sentences.len()));
                }
                for (p, s) in preds.iter().zip(&sentences) {
                    if p.len() != s.tokens.len() {
                        return Err(format!("{} words predicted for {} tokens", p.len(), s.tokens.len()));
                    }
                    if let Some(d) = p.iter().find(|d| (d.as_array().iter().sum::<f64>() - 1.0).abs() > 1e-5) {
                        return Err(format!("distribution does not sum to 1: {d:?}"));
                    }
                }
                Ok(format!("{} sentences", preds.len()))
            }),
    };
    checks.push(Check::from_result("predict round trip", round_trip));

    let error_path = match client.predict("no-such-model", &sentences[..1]) {
        Err(Error::Protocol { stage, .. }) if stage == "predict" => Ok("error reported".to_string()),
        Err(e) => Err(format!("wrong error: {e}")),
        Ok(_) => Err("unknown model_id was accepted".into()),
    };
    checks.push(Check::from_result("unknown model error", error_path));

    let alive = match &model_id {
        None => Err("no model".to_string()),
        Some(id) => client
            .predict(id, &sentences[..2])
            .map(|_| "session alive after error".to_string())
            .map_err(|e| e.to_string()),
    };
    checks.push(Check::from_result("session survives error", alive));

    let empty = client
        .train(WireTrainConfig::from(&cfg), Vec::new(), Vec::new(), 1)
        .map_or_else(
            |e| match e {
                Error::Protocol { stage, .. } if stage == "train" => Ok("error reported".to_string()),
                other => Err(format!("wrong error: {other}")),
            },
            |_| Err("empty training set accepted".to_string()),
        );
    checks.push(Check::from_result("empty train error", empty));
    checks
}
