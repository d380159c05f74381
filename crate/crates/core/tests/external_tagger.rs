use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};

use tsa_core::corpus::{DomainLabel, Sentence};
use tsa_core::selftrain::{run_self_training, LoopConfig, TrainConfig};
use tsa_core::synth::{generate, SynthSpec};
use tsa_core::tagger::conformance::{fixture_sentences, run_endpoint};
use tsa_core::tagger::mock::DEMO_MODEL;
use tsa_core::tagger::{Endpoint, ExternalClient, ExternalModel, ExternalTrainer, Polarity, TaggerModel, Trainer};

const MOCK: &str = env!("CARGO_BIN_EXE_tsa-mock-tagger");

fn endpoint(args: &str) -> Endpoint {
    Endpoint::parse(&format!("{MOCK} {args}"))
}

fn demo(args: &str) -> TaggerModel {
    let client = ExternalClient::connect(&endpoint(args)).unwrap();
    TaggerModel::External(ExternalModel::new(Arc::new(Mutex::new(client)), DEMO_MODEL.into(), 0))
}

fn sentence(text: &str) -> Sentence {
    Sentence::new(text, DomainLabel::new("d"), "s", 0)
}

#[test]
fn uniform_distributions_decode_to_nothing() {
    let model = demo("--mode uniform");
    let spans = model.predict(&[sentence("Here is a nice electric car")]).unwrap();
    assert_eq!(spans, vec![vec![]]);
}

#[test]
fn worked_example_through_pieces() {
    let model = demo("--mode pieces");
    let spans = model.predict(&[sentence("Here is a nice electric car")]).unwrap();
    assert_eq!(spans[0].len(), 1);
    let s = &spans[0][0];
    assert_eq!((s.start, s.end, s.polarity), (4, 6, Polarity::Positive));
    assert_eq!(s.surface, "electric car");
    assert!((s.confidence - 0.9).abs() < 1e-9);
}

#[test]
fn worked_example_through_words() {
    let model = demo("--mode words");
    let spans = model.predict(&[sentence("Here is a nice electric car")]).unwrap();
    assert_eq!(spans[0][0].surface, "electric car");
    assert!(model.predict(&[]).unwrap().is_empty());
}

#[test]
fn version_mismatch_is_rejected() {
    let err = ExternalClient::connect(&endpoint("--protocol-version 7"))
        .err()
        .expect("handshake must fail");
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn dead_endpoint_names_the_stage() {
    let err = ExternalClient::connect(&Endpoint::parse("exit 0"))
        .err()
        .expect("no tagger there");
    assert!(err.to_string().contains("hello"), "{err}");
}

#[test]
fn conformance_suite_passes_over_stdio() {
    for mode in ["words", "pieces"] {
        let checks = run_endpoint(&endpoint(&format!("--mode {mode}")));
        assert!(checks.len() >= 6);
        for c in &checks {
            assert!(c.passed, "{mode}: {} failed: {}", c.name, c.detail);
        }
    }
}

#[test]
fn conformance_suite_passes_over_tcp() {
    let mut child = Command::new(MOCK)
        .args(["--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();
    let checks = run_endpoint(&Endpoint::parse(&format!("tcp://{addr}")));
    child.kill().unwrap();
    child.wait().unwrap();
    for c in &checks {
        assert!(c.passed, "{} failed: {}", c.name, c.detail);
    }
}

#[test]
fn trained_mock_recovers_fixture_boundaries() {
    let trainer = ExternalTrainer::connect(&endpoint("--mode pieces")).unwrap();
    let data = fixture_sentences();
    let (model, _) = trainer.train(&data, &data[..5], &TrainConfig::default(), 3).unwrap();
    let sentences: Vec<Sentence> = data.iter().map(|l| l.sentence.clone()).collect();
    let predicted = model.predict(&sentences).unwrap();
    // the mock keeps one label per word, so only boundaries are recoverable
    for (p, g) in predicted.iter().zip(&data) {
        let bounds: Vec<_> = p.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(
            bounds,
            vec![(g.gold_spans[0].start, g.gold_spans[0].end)],
            "{}",
            g.sentence.text
        );
    }
}

#[test]
fn loop_runs_against_external_tagger() {
    let spec = SynthSpec {
        labeled_sentences: 60,
        pool_sentences: 200,
        test_sentences_per_domain: 5,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let trainer = ExternalTrainer::connect(&endpoint("--mode pieces")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = LoopConfig {
        iterations: 2,
        artifact_dir: dir.path().to_path_buf(),
        predict_chunk: 64,
        ..LoopConfig::default()
    };
    let out = run_self_training(&corpus.labeled, &corpus.pool, &cfg, &trainer).unwrap();
    assert_eq!(out.artifacts.len(), 3);
    let restored = trainer.restore(&dir.path().join(&out.artifacts[2].model_path)).unwrap();
    let sample = &corpus.pool[..10];
    assert_eq!(restored.predict(sample).unwrap(), out.model.predict(sample).unwrap());
}
