//! Client side of the tagger protocol.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};

use log::debug;

use super::protocol::{Request, Response, WireLabeled, WirePrediction, WireTokens, WireTrainConfig, PROTOCOL_VERSION};
use super::scheme::{merge_word_pieces, PieceAlignment, TokenDistribution};
use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// Where the external tagger lives: `tcp://host:port` or a shell command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Command(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("tcp://") {
            Some(addr) => Endpoint::Tcp(addr.to_string()),
            None => Endpoint::Command(s.to_string()),
        }
    }
}

pub struct ExternalClient {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    piece_level: bool,
}

impl ExternalClient {
    pub fn connect(endpoint: &Endpoint) -> Result<Self> {
        let client = match endpoint {
            Endpoint::Tcp(addr) => {
                let stream =
                    TcpStream::connect(addr).map_err(|e| Error::protocol("connect", format!("{addr}: {e}")))?;
                let read_half = stream
                    .try_clone()
                    .map_err(|e| Error::protocol("connect", e.to_string()))?;
                Self::from_parts(BufReader::new(read_half), stream, None)
            }
            Endpoint::Command(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::protocol("connect", format!("spawn `{cmd}`: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Self::from_parts(BufReader::new(stdout), stdin, Some(child))
            }
        };
        client.handshake()
    }

    pub fn from_parts(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
        child: Option<Child>,
    ) -> Self {
        ExternalClient {
            reader: Box::new(reader),
            writer: Box::new(writer),
            child,
            piece_level: false,
        }
    }

    pub fn handshake(mut self) -> Result<Self> {
        match self.call(
            "hello",
            &Request::Hello {
                version: PROTOCOL_VERSION,
            },
        )? {
            Response::Hello { version, piece_level } if version == PROTOCOL_VERSION => {
                self.piece_level = piece_level;
                Ok(self)
            }
            Response::Hello { version, .. } => Err(Error::protocol(
                "hello",
                format!("protocol version mismatch: expected {PROTOCOL_VERSION}, server speaks {version}"),
            )),
            other => Err(unexpected("hello", &other)),
        }
    }

    pub fn piece_level(&self) -> bool {
        self.piece_level
    }

    fn call(&mut self, stage: &str, request: &Request) -> Result<Response> {
        let line = serde_json::to_string(request)?;
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::protocol(stage, format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = self
            .reader
            .read_line(&mut reply)
            .map_err(|e| Error::protocol(stage, format!("read failed: {e}")))?;
        if n == 0 {
            return Err(Error::protocol(stage, "connection closed"));
        }
        debug!("{stage}: {} byte reply", reply.len());
        let response: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| Error::protocol(stage, format!("malformed response {:?}: {e}", truncate(&reply))))?;
        if let Response::Error { stage, message } = response {
            return Err(Error::Protocol { stage, message });
        }
        Ok(response)
    }

    pub fn train(
        &mut self,
        config: WireTrainConfig,
        train: Vec<WireLabeled>,
        dev: Vec<WireLabeled>,
        seed: u64,
    ) -> Result<String> {
        match self.call(
            "train",
            &Request::Train {
                config,
                train,
                dev,
                seed,
            },
        )? {
            Response::Trained { model_id } => Ok(model_id),
            other => Err(unexpected("train", &other)),
        }
    }

    /// Word-level distributions per sentence; piece-level replies are merged.
    pub fn predict(&mut self, model_id: &str, sentences: &[Sentence]) -> Result<Vec<Vec<TokenDistribution>>> {
        let request = Request::Predict {
            model_id: model_id.to_string(),
            sentences: sentences
                .iter()
                .map(|s| WireTokens {
                    tokens: s.tokens.clone(),
                })
                .collect(),
        };
        let predictions = match self.call("predict", &request)? {
            Response::Predictions { predictions } => predictions,
            other => return Err(unexpected("predict", &other)),
        };
        if predictions.len() != sentences.len() {
            return Err(Error::protocol(
                "predict",
                format!("{} predictions for {} sentences", predictions.len(), sentences.len()),
            ));
        }
        predictions
            .into_iter()
            .zip(sentences)
            .enumerate()
            .map(|(i, (p, s))| {
                let words = match p {
                    WirePrediction::Words { distributions } => distributions,
                    WirePrediction::Pieces { pieces, piece_to_word } => merge_word_pieces(&PieceAlignment {
                        piece_distributions: pieces,
                        piece_to_word,
                    })
                    .map_err(|e| Error::protocol("predict", format!("sentence {i}: {e}")))?,
                };
                if words.len() != s.tokens.len() {
                    return Err(Error::protocol(
                        "predict",
                        format!(
                            "sentence {i}: {} word distributions for {} tokens",
                            words.len(),
                            s.tokens.len()
                        ),
                    ));
                }
                words
                    .into_iter()
                    .map(|d| renormalize(d).map_err(|e| Error::protocol("predict", format!("sentence {i}: {e}"))))
                    .collect()
            })
            .collect()
    }
}

impl Drop for ExternalClient {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            // closing stdin ends the session; reap the process
            self.writer = Box::new(std::io::sink());
            let _ = child.wait();
        }
    }
}

/// Accept float32-level drift from the server (sum within 1e-5) and
/// renormalize; anything further off is rejected.
fn renormalize(d: TokenDistribution) -> Result<TokenDistribution> {
    let p = d.as_array();
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !(-1e-5..=1.0 + 1e-5).contains(x)) || (sum - 1.0).abs() > WIRE_TOLERANCE {
        return Err(Error::SpanLayout(format!("invalid distribution {p:?}")));
    }
    Ok(TokenDistribution::from_array(p.map(|x| x.max(0.0) / sum)))
}

const WIRE_TOLERANCE: f64 = 1e-5;

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

fn unexpected(stage: &str, r: &Response) -> Error {
    Error::protocol(
        stage,
        format!(
            "unexpected response {}",
            truncate(&serde_json::to_string(r).unwrap_or_default())
        ),
    )
}
