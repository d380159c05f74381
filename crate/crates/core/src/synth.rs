//! Deterministic synthetic multi-domain corpora with planted targets.
//!
//! Sentences are built from a few templates around a sentiment word and a
//! domain target, padded with shared function words and domain background
//! nouns. Gold spans are exact by construction.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_pool, DomainLabel, Sentence};
use crate::dataset::{write_labeled, WriteOptions};
use crate::error::{Error, Result};
use crate::lexicon::{SentimentLexicon, DEFAULT_THRESHOLD};
use crate::seed::stage_rng;
use crate::tagger::{LabeledSentence, Polarity, TargetSpan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDomain {
    pub name: String,
    /// Target phrases; multi-word targets are space-separated.
    pub targets: Vec<String>,
    /// Domain-specific words that never act as targets.
    pub background: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentWord {
    pub word: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub domains: Vec<SynthDomain>,
    /// Function words shared by every domain.
    pub shared_background: Vec<String>,
    /// In-lexicon sentiment words (scores carry the sign).
    pub positive: Vec<SentimentWord>,
    pub negative: Vec<SentimentWord>,
    /// Out-of-lexicon synonyms substituted with probability `noise`.
    pub positive_synonyms: Vec<String>,
    pub negative_synonyms: Vec<String>,
    /// Number of leading domains that supply the labeled set.
    pub labeled_domains: usize,
    pub labeled_sentences: usize,
    pub pool_sentences: usize,
    pub test_sentences_per_domain: usize,
    /// Probability that a sentence carries at least one target.
    pub target_density: f64,
    /// Probability that a target sentence carries a second target.
    pub second_target: f64,
    /// Share of target clauses in the predicative frame
    /// ("the <target> felt <sentiment>"); the rest are "<sentiment> <target>".
    pub predicative_share: f64,
    /// Share of target-free sentences where a sentiment word modifies a
    /// domain background noun ("<sentiment> <noun>", not a target).
    pub decoy_share: f64,
    pub noise: f64,
    pub min_background: usize,
    pub max_background: usize,
    pub seed: u64,
}

fn words(s: &str) -> Vec<String> {
    s.split(',')
        .map(|w| w.trim().to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

fn scored(list: &str, sign: f64) -> Vec<SentimentWord> {
    words(list)
        .into_iter()
        .enumerate()
        .map(|(i, word)| SentimentWord {
            word,
            score: sign * (0.75 + 0.25 * ((i * 7) % 10) as f64 / 10.0),
        })
        .collect()
}

fn domain(name: &str, targets: &str, background: &str) -> SynthDomain {
    SynthDomain {
        name: name.to_string(),
        targets: words(targets),
        background: words(background),
    }
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            domains: vec![
                domain(
                    "restaurants",
                    "pizza, pasta, waiter, dessert, sushi, menu, burger, salad, espresso, wine list, \
                     fried chicken, brunch, steak, noodles, bartender, happy hour",
                    "fork, napkin, booth, reservation, tip, plate, kitchen, lunchtime, dinner, patio",
                ),
                domain(
                    "electronics",
                    "battery, screen, keyboard, charger, touchpad, speakers, webcam, processor, \
                     battery life, hard drive, trackpad, display, firmware, headphones, sound quality, port",
                    "cable, carton, warranty, shelf, manual, update, folder, login, outlet, sticker",
                ),
                domain(
                    "hotels",
                    "room, lobby, pool, concierge, bed, breakfast buffet, shower, minibar, spa, \
                     front desk, housekeeping, view, suite, gym, elevator, check in",
                    "suitcase, keycard, hallway, luggage, floor, checkout, stay, towel, corridor, booking",
                ),
                domain(
                    "automotive",
                    "engine, transmission, brakes, mileage, dashboard, steering, gearbox, headlights, \
                     fuel economy, tires, cruise control, seats, suspension, clutch, infotainment, trunk",
                    "garage, highway, driveway, license, mechanic, dealership, lane, parking, odometer, toll",
                ),
                domain(
                    "movies",
                    "plot, soundtrack, villain, ending, acting, screenplay, cinematography, dialogue, \
                     special effects, cast, pacing, sequel, director, lead actress, score, twist",
                    "popcorn, ticket, trailer, theater, premiere, seat, credits, intermission, matinee, queue",
                ),
                domain(
                    "pets",
                    "groomer, vet, kibble, leash, litter box, aquarium, chew toy, kennel, collar, \
                     dog food, catnip, obedience class, shampoo, harness, treats, scratching post",
                    "puppy, kitten, walk, backyard, appointment, vaccine, fur, paw, whisker, bowl",
                ),
            ],
            shared_background: words(
                "we, it, they, this, that, was, is, were, our, my, there, here, today, also, \
                 just, then, so, with, for, at, on, after, before, again, really, very, one, two, \
                 when, because, while, all, some, still, maybe, about, from, into, over, week",
            ),
            positive: scored(
                "great, excellent, amazing, wonderful, fantastic, delicious, superb, lovely, \
                 perfect, awesome, impressive, outstanding, friendly, reliable, brilliant",
                1.0,
            ),
            negative: scored(
                "terrible, awful, horrible, poor, disappointing, bad, rude, broken, noisy, \
                 dirty, slow, mediocre, overpriced, useless, dreadful",
                -1.0,
            ),
            positive_synonyms: words("stellar, splendid, terrific, marvelous, sublime, dandy, nifty, swell"),
            negative_synonyms: words("lousy, shoddy, crummy, dismal, atrocious, abysmal, naff, grotty"),
            labeled_domains: 2,
            labeled_sentences: 500,
            pool_sentences: 20_000,
            test_sentences_per_domain: 300,
            target_density: 0.75,
            second_target: 0.25,
            predicative_share: 0.5,
            decoy_share: 0.5,
            noise: 0.1,
            min_background: 4,
            max_background: 10,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() || self.labeled_domains == 0 || self.labeled_domains > self.domains.len() {
            return Err(Error::Config(format!(
                "need 1 <= labeled_domains <= {} domains, got {}",
                self.domains.len(),
                self.labeled_domains
            )));
        }
        if self.positive.is_empty() || self.negative.is_empty() || self.shared_background.is_empty() {
            return Err(Error::Config(
                "sentiment and background vocabularies must be non-empty".into(),
            ));
        }
        if self.labeled_sentences == 0 || self.pool_sentences == 0 || self.test_sentences_per_domain == 0 {
            return Err(Error::Config("sentence counts must be positive".into()));
        }
        if !(self.target_density > 0.0 && self.target_density <= 1.0)
            || !(0.0..=1.0).contains(&self.second_target)
            || !(0.0..=1.0).contains(&self.predicative_share)
            || !(0.0..=1.0).contains(&self.decoy_share)
            || !(0.0..=1.0).contains(&self.noise)
            || self.min_background > self.max_background
        {
            return Err(Error::Config(
                "probabilities must lie in [0, 1] and min_background <= max_background".into(),
            ));
        }
        if self.noise > 0.0 && (self.positive_synonyms.is_empty() || self.negative_synonyms.is_empty()) {
            return Err(Error::Config("noise > 0 needs synonym lists".into()));
        }
        for w in self.positive.iter().chain(&self.negative) {
            if !(w.score.abs() > 0.0 && w.score.abs() <= 1.0) {
                return Err(Error::Config(format!("score of {:?} outside (0, 1]", w.word)));
            }
        }
        // every surface word has exactly one role
        let mut owner: HashMap<String, String> = HashMap::new();
        let mut claim = |word: &str, role: String| -> Result<()> {
            for w in word.split_whitespace() {
                let w = w.to_lowercase();
                if let Some(prev) = owner.get(&w) {
                    if *prev != role {
                        return Err(Error::VocabularyCollision(format!("{w:?} is both {prev} and {role}")));
                    }
                } else {
                    owner.insert(w, role.clone());
                }
            }
            Ok(())
        };
        for w in TEMPLATE_WORDS
            .iter()
            .chain(&self.shared_background.iter().map(String::as_str).collect::<Vec<_>>())
        {
            claim(w, "background".into())?;
        }
        for w in self.positive.iter().chain(&self.negative) {
            claim(&w.word, "sentiment".into())?;
        }
        for w in self.positive_synonyms.iter().chain(&self.negative_synonyms) {
            claim(w, "sentiment synonym".into())?;
        }
        for d in &self.domains {
            if d.targets.is_empty() || d.background.is_empty() {
                return Err(Error::Config(format!(
                    "domain {} needs targets and background words",
                    d.name
                )));
            }
            for t in &d.targets {
                claim(t, format!("target of {}", d.name))?;
            }
            for b in &d.background {
                claim(b, format!("background of {}", d.name))?;
            }
        }
        Ok(())
    }

    pub fn labeled_domain_names(&self) -> Vec<&str> {
        self.domains[..self.labeled_domains]
            .iter()
            .map(|d| d.name.as_str())
            .collect()
    }

    pub fn unseen_domain_names(&self) -> Vec<&str> {
        self.domains[self.labeled_domains..]
            .iter()
            .map(|d| d.name.as_str())
            .collect()
    }

    pub fn lexicon(&self) -> Result<SentimentLexicon> {
        SentimentLexicon::from_reader(self.lexicon_tsv().as_bytes(), DEFAULT_THRESHOLD)
    }

    /// `word<TAB>score` rows for the in-lexicon sentiment words.
    pub fn lexicon_tsv(&self) -> String {
        self.positive
            .iter()
            .chain(&self.negative)
            .map(|w| format!("{}\t{}\n", w.word, w.score))
            .collect()
    }
}

/// Fixed glue words used by the templates.
const TEMPLATE_WORDS: &[&str] = &["the", "and", "but", "to", "visit", "felt"];

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub labeled: Vec<LabeledSentence>,
    pub pool: Vec<Sentence>,
    /// Held-out gold sets keyed by domain name, in spec order.
    pub tests: Vec<(String, Vec<LabeledSentence>)>,
}

impl SynthCorpus {
    pub fn test_all(&self) -> Vec<LabeledSentence> {
        self.tests.iter().flat_map(|(_, t)| t.iter().cloned()).collect()
    }
}

struct Builder<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn sentiment(&mut self, polarity: Polarity) -> String {
        let (lex, syn) = match polarity {
            Polarity::Positive => (&self.spec.positive, &self.spec.positive_synonyms),
            Polarity::Negative => (&self.spec.negative, &self.spec.negative_synonyms),
        };
        if self.spec.noise > 0.0 && self.rng.random_bool(self.spec.noise) {
            syn.choose(&mut self.rng).expect("validated non-empty").clone()
        } else {
            lex.choose(&mut self.rng).expect("validated non-empty").word.clone()
        }
    }

    fn polarity(&mut self) -> Polarity {
        if self.rng.random_bool(0.5) {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    fn background(&mut self, d: &SynthDomain, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| {
                if self.rng.random_bool(0.3) {
                    d.background.choose(&mut self.rng).expect("validated").clone()
                } else {
                    self.spec
                        .shared_background
                        .choose(&mut self.rng)
                        .expect("validated")
                        .clone()
                }
            })
            .collect()
    }

    /// One target clause; returns tokens and the target's token range inside them.
    fn clause(&mut self, d: &SynthDomain, polarity: Polarity) -> (Vec<String>, usize, usize) {
        let target: Vec<String> = d
            .targets
            .choose(&mut self.rng)
            .expect("validated")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let n = target.len();
        let sent = self.sentiment(polarity);
        if !self.rng.random_bool(self.spec.predicative_share) {
            // "<sentiment> <target>"
            let mut toks = vec![sent];
            toks.extend(target);
            (toks, 1, 1 + n)
        } else {
            // "the <target> felt <sentiment>"
            let mut toks = vec!["the".to_string()];
            toks.extend(target);
            toks.push("felt".into());
            toks.push(sent);
            (toks, 1, 1 + n)
        }
    }

    fn sentence(&mut self, d: &SynthDomain, id: String) -> LabeledSentence {
        let lo = self.spec.min_background;
        let hi = self.spec.max_background;
        let head = self.rng.random_range(lo..=hi) / 2 + 1;
        let mut tokens = self.background(d, head);
        let mut spans = Vec::new();
        if self.rng.random_bool(self.spec.target_density) {
            let p = self.polarity();
            let (clause, s, e) = self.clause(d, p);
            let off = tokens.len();
            tokens.extend(clause);
            spans.push(TargetSpan::gold(off + s, off + e, p));
            if self.rng.random_bool(self.spec.second_target) {
                tokens.push(if self.rng.random_bool(0.5) { "and" } else { "but" }.to_string());
                let p2 = self.polarity();
                let (clause, s, e) = self.clause(d, p2);
                let off = tokens.len();
                tokens.extend(clause);
                spans.push(TargetSpan::gold(off + s, off + e, p2));
            }
        } else if self.rng.random_bool(self.spec.decoy_share) {
            // "<sentiment> <background noun>"
            let p = self.polarity();
            let sent = self.sentiment(p);
            let noun = d.background.choose(&mut self.rng).expect("validated").clone();
            tokens.extend([sent, noun]);
        } else {
            // "it felt <sentiment> to visit"
            let p = self.polarity();
            let sent = self.sentiment(p);
            tokens.extend(["it".to_string(), "felt".into(), sent, "to".into(), "visit".into()]);
        }
        let tail = self.rng.random_range(lo..=hi) / 2 + 1;
        tokens.extend(self.background(d, tail));
        while crate::text::word_count(&tokens) < crate::corpus::MIN_WORDS {
            tokens.extend(self.background(d, 1));
        }
        let text = tokens.join(" ");
        let sentence = Sentence {
            text,
            tokens,
            domain: DomainLabel::new(&d.name),
            review_id: id,
            index_in_review: 0,
        };
        let mut ls = LabeledSentence::new(sentence, spans);
        for s in &mut ls.gold_spans {
            s.fill_surface(&ls.sentence);
        }
        ls
    }
}

/// Generate labeled, pool and per-domain test splits from `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        rng: stage_rng(spec.seed, "synth/labeled"),
    };
    let seen = &spec.domains[..spec.labeled_domains];
    let labeled = (0..spec.labeled_sentences)
        .map(|i| {
            let d = &seen[i % seen.len()];
            b.sentence(d, format!("labeled-{}-{i}", d.name))
        })
        .collect();

    b.rng = stage_rng(spec.seed, "synth/pool");
    let pool = (0..spec.pool_sentences)
        .map(|i| {
            let d = &spec.domains[i % spec.domains.len()];
            b.sentence(d, format!("pool-{}-{i}", d.name)).sentence
        })
        .collect();

    let tests = spec
        .domains
        .iter()
        .map(|d| {
            b.rng = stage_rng(spec.seed, &format!("synth/test/{}", d.name));
            let set = (0..spec.test_sentences_per_domain)
                .map(|i| b.sentence(d, format!("test-{}-{i}", d.name)))
                .collect();
            (d.name.clone(), set)
        })
        .collect();
    Ok(SynthCorpus { labeled, pool, tests })
}

/// Write `labeled.jsonl`, `pool.jsonl`, `test.jsonl`, `test/<domain>.jsonl`,
/// `lexicon.tsv`, `domains.txt` and the resolved `spec.json`.
pub fn write_corpus(dir: &Path, spec: &SynthSpec, corpus: &SynthCorpus) -> Result<()> {
    let test_dir = dir.join("test");
    fs::create_dir_all(&test_dir).map_err(|e| Error::io(&test_dir, e))?;
    let opts = WriteOptions::default();
    write_labeled(&dir.join("labeled.jsonl"), &corpus.labeled, opts)?;
    write_pool(&dir.join("pool.jsonl"), &corpus.pool)?;
    write_labeled(&dir.join("test.jsonl"), &corpus.test_all(), opts)?;
    for (name, set) in &corpus.tests {
        write_labeled(&test_dir.join(format!("{name}.jsonl")), set, opts)?;
    }
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("lexicon.tsv", spec.lexicon_tsv())?;
    write(
        "domains.txt",
        spec.domains.iter().map(|d| format!("{}\n", d.name)).collect(),
    )?;
    write("spec.json", serde_json::to_string_pretty(spec)? + "\n")
}

/// Target phrases per domain, for checking invariants.
pub fn target_vocabulary(spec: &SynthSpec) -> BTreeMap<&str, Vec<&str>> {
    spec.domains
        .iter()
        .map(|d| (d.name.as_str(), d.targets.iter().map(String::as_str).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            labeled_sentences: 60,
            pool_sentences: 120,
            test_sentences_per_domain: 20,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn default_spec_is_valid() {
        SynthSpec::default().validate().unwrap();
        assert_eq!(SynthSpec::default().unseen_domain_names().len(), 4);
    }

    #[test]
    fn collisions_are_rejected() {
        let mut spec = small();
        spec.domains[1].targets.push("pizza".into());
        assert!(matches!(generate(&spec), Err(Error::VocabularyCollision(_))));
        let mut spec = small();
        spec.domains[0].background.push("great".into());
        assert!(matches!(generate(&spec), Err(Error::VocabularyCollision(_))));
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.labeled, b.labeled);
        assert_eq!(a.pool, b.pool);
        let c = generate(&SynthSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.pool, c.pool);
    }

    #[test]
    fn gold_surfaces_come_from_domain_vocab() {
        let spec = small();
        let vocab = target_vocabulary(&spec);
        let c = generate(&spec).unwrap();
        for ls in c.labeled.iter().chain(c.test_all().iter()) {
            crate::tagger::encode_labels(ls).unwrap();
            for s in &ls.gold_spans {
                assert!(
                    vocab[ls.sentence.domain.as_str()].contains(&s.surface.as_str()),
                    "{}",
                    s.surface
                );
            }
            assert!(ls.sentence.word_count() >= crate::corpus::MIN_WORDS);
        }
        let seen = spec.labeled_domain_names();
        assert!(c.labeled.iter().all(|l| seen.contains(&l.sentence.domain.as_str())));
    }
}
