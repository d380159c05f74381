//! Review ingestion: record loading, review and sentence filters, domain
//! assignment, and the unlabeled sentence pool.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lexicon::SentimentLexicon;
use crate::seed::stage_rng;
use crate::text;

/// Inclusive word-count bounds for pool sentences.
pub const MIN_WORDS: usize = 10;
pub const MAX_WORDS: usize = 50;

const UNASSIGNED: &str = "unassigned";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub id: String,
    pub text: String,
    pub useful_count: u64,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainLabel(String);

impl DomainLabel {
    pub fn new(name: impl Into<String>) -> Self {
        DomainLabel(name.into())
    }

    pub fn unassigned() -> Self {
        DomainLabel(UNASSIGNED.to_string())
    }

    pub fn is_unassigned(&self) -> bool {
        self.0 == UNASSIGNED
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Stable identity of a sentence: the review it came from and its position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceId {
    pub review_id: String,
    pub index: usize,
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.review_id, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
    pub domain: DomainLabel,
    pub review_id: String,
    #[serde(rename = "index")]
    pub index_in_review: usize,
}

impl Sentence {
    /// Tokenize `text` with the standard word tokenizer.
    pub fn new(
        text: impl Into<String>,
        domain: DomainLabel,
        review_id: impl Into<String>,
        index_in_review: usize,
    ) -> Self {
        let text = text.into();
        let tokens = text::tokenize_words(&text);
        Sentence {
            text,
            tokens,
            domain,
            review_id: review_id.into(),
            index_in_review,
        }
    }

    pub fn id(&self) -> SentenceId {
        SentenceId {
            review_id: self.review_id.clone(),
            index: self.index_in_review,
        }
    }

    pub fn word_count(&self) -> usize {
        text::word_count(&self.tokens)
    }

    /// Char offsets of each token inside `text`.
    pub fn token_offsets(&self) -> Option<Vec<(usize, usize)>> {
        text::align_tokens(&self.text, &self.tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReviewFormat {
    /// Each review record carries its own `categories`.
    PreJoined,
    /// Categories come from a business file joined on `business_id`.
    TwoFile { business: PathBuf },
}

/// Streams reviews from newline-delimited JSON, skipping malformed records.
pub struct ReviewStream<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    skipped: usize,
    source: String,
    business: Option<HashMap<String, Vec<String>>>,
}

impl<R: BufRead> ReviewStream<R> {
    pub fn new(reader: R, source: impl Into<String>) -> Self {
        ReviewStream {
            lines: reader.lines(),
            line_no: 0,
            skipped: 0,
            source: source.into(),
            business: None,
        }
    }

    pub fn with_business(mut self, business: HashMap<String, Vec<String>>) -> Self {
        self.business = Some(business);
        self
    }

    /// Number of records skipped so far.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn parse(&self, line: &str) -> std::result::Result<Review, String> {
        let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("record is not an object")?;
        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .ok_or("missing string field `text`")?;
        if text.trim().is_empty() {
            return Err("empty `text`".into());
        }
        let useful_count = match obj.get("useful") {
            None | Some(Value::Null) => 0,
            Some(v) => v.as_u64().ok_or("`useful` must be a non-negative integer")?,
        };
        let id = obj
            .get("review_id")
            .or_else(|| obj.get("id"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("line-{}", self.line_no));
        let categories = match &self.business {
            Some(map) => obj
                .get("business_id")
                .and_then(Value::as_str)
                .and_then(|b| map.get(b))
                .cloned()
                .unwrap_or_default(),
            None => parse_categories(obj.get("categories"))?,
        };
        Ok(Review {
            id,
            text: text.to_string(),
            useful_count,
            categories,
        })
    }
}

impl<R: BufRead> Iterator for ReviewStream<R> {
    type Item = Review;

    fn next(&mut self) -> Option<Review> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.line_no += 1;
                    self.skipped += 1;
                    warn!("{}:{}: unreadable line: {e}", self.source, self.line_no);
                    continue;
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse(&line) {
                Ok(r) => return Some(r),
                Err(msg) => {
                    self.skipped += 1;
                    warn!("{}:{}: skipping malformed record: {msg}", self.source, self.line_no);
                }
            }
        }
    }
}

/// Yelp stores categories as a comma-separated string; arrays are also accepted.
fn parse_categories(v: Option<&Value>) -> std::result::Result<Vec<String>, String> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(s
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(|s| s.trim().to_string())
                    .ok_or_else(|| "`categories` entries must be strings".to_string())
            })
            .collect(),
        Some(_) => Err("`categories` must be a string array".into()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn load_business_categories(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    let mut map = HashMap::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line).ok().and_then(|v| {
            let id = v.get("business_id")?.as_str()?.to_string();
            let cats = parse_categories(v.get("categories")).ok()?;
            Some((id, cats))
        });
        match parsed {
            Some((id, cats)) => {
                map.insert(id, cats);
            }
            None => warn!("{}:{}: skipping malformed business record", path.display(), i + 1),
        }
    }
    Ok(map)
}

pub fn load_reviews(path: &Path, format: &ReviewFormat) -> Result<ReviewStream<BufReader<File>>> {
    let stream = ReviewStream::new(open(path)?, path.display().to_string());
    Ok(match format {
        ReviewFormat::PreJoined => stream,
        ReviewFormat::TwoFile { business } => stream.with_business(load_business_categories(business)?),
    })
}

/// Drops reviews rated not useful and reviews without business categories.
pub fn keep_review(review: &Review) -> bool {
    review.useful_count > 0 && !review.categories.is_empty()
}

pub fn filter_reviews<I: IntoIterator<Item = Review>>(reviews: I) -> impl Iterator<Item = Review> {
    reviews.into_iter().filter(keep_review)
}

/// First domain of `ordered_domains` that appears among the review's
/// categories (case-insensitive exact match), else `unassigned`.
pub fn assign_domain(review: &Review, ordered_domains: &[DomainLabel]) -> DomainLabel {
    let cats: Vec<String> = review.categories.iter().map(|c| c.to_lowercase()).collect();
    ordered_domains
        .iter()
        .find(|d| cats.iter().any(|c| *c == d.as_str().to_lowercase()))
        .cloned()
        .unwrap_or_else(DomainLabel::unassigned)
}

pub fn split_sentences(review: &Review, domain: &DomainLabel) -> Vec<Sentence> {
    text::split_sentences(&review.text)
        .into_iter()
        .enumerate()
        .map(|(i, s)| Sentence::new(s, domain.clone(), review.id.clone(), i))
        .filter(|s| !s.tokens.is_empty())
        .collect()
}

pub fn keep_sentence(sentence: &Sentence, lexicon: &SentimentLexicon) -> bool {
    let n = sentence.word_count();
    (MIN_WORDS..=MAX_WORDS).contains(&n) && lexicon.contains_sentiment_word(&sentence.tokens)
}

pub fn filter_sentences<'a, I>(sentences: I, lexicon: &'a SentimentLexicon) -> impl Iterator<Item = Sentence> + 'a
where
    I: IntoIterator<Item = Sentence>,
    I::IntoIter: 'a,
{
    sentences.into_iter().filter(move |s| keep_sentence(s, lexicon))
}

pub fn domain_histogram<'a, I>(sentences: I) -> BTreeMap<DomainLabel, usize>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut hist = BTreeMap::new();
    for s in sentences {
        *hist.entry(s.domain.clone()).or_insert(0) += 1;
    }
    hist
}

/// Ordered domain list: one name per line, `#` comments and blanks ignored.
pub fn load_domains(path: &Path) -> Result<Vec<DomainLabel>> {
    let mut out = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let name = line.trim();
        if !name.is_empty() && !name.starts_with('#') {
            out.push(DomainLabel::new(name));
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{} lists no domains", path.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub reviews_read: usize,
    pub reviews_skipped_malformed: usize,
    pub reviews_filtered: usize,
    pub reviews_unassigned: usize,
    pub sentences_split: usize,
    pub sentences_kept: usize,
    pub reviews_sampled_out: usize,
    pub histogram: BTreeMap<DomainLabel, usize>,
}

#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub max_sentences: Option<usize>,
    pub seed: u64,
}

struct Candidate {
    key: u64,
    order: usize,
    sentences: Vec<Sentence>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.key, self.order).cmp(&(other.key, other.order))
    }
}

/// Full review-to-pool pipeline. With `max_sentences` set, whole reviews are
/// kept by seeded bottom-k sampling on random keys under the sentence budget.
pub fn build_pool<I>(
    reviews: I,
    domains: &[DomainLabel],
    lexicon: &SentimentLexicon,
    cfg: &IngestConfig,
) -> (Vec<Sentence>, IngestStats)
where
    I: IntoIterator<Item = Review>,
{
    let mut rng = stage_rng(cfg.seed, "ingest-sample");
    let mut stats = IngestStats::default();
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
    let mut total = 0usize;
    for (order, review) in reviews.into_iter().enumerate() {
        stats.reviews_read += 1;
        if !keep_review(&review) {
            stats.reviews_filtered += 1;
            continue;
        }
        let domain = assign_domain(&review, domains);
        if domain.is_unassigned() {
            stats.reviews_unassigned += 1;
            continue;
        }
        let split = split_sentences(&review, &domain);
        stats.sentences_split += split.len();
        let kept: Vec<Sentence> = filter_sentences(split, lexicon).collect();
        if kept.is_empty() {
            continue;
        }
        total += kept.len();
        heap.push(Candidate {
            key: rng.random(),
            order,
            sentences: kept,
        });
        if let Some(cap) = cfg.max_sentences {
            while total > cap {
                let dropped = heap.pop().expect("total > 0 implies a candidate");
                total -= dropped.sentences.len();
                stats.reviews_sampled_out += 1;
            }
        }
    }
    let mut kept: Vec<Candidate> = heap.into_vec();
    kept.sort_by_key(|c| c.order);
    let sentences: Vec<Sentence> = kept.into_iter().flat_map(|c| c.sentences).collect();
    stats.sentences_kept = sentences.len();
    stats.histogram = domain_histogram(&sentences);
    (sentences, stats)
}

pub fn write_pool(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in sentences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pool(path: &Path) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sentence = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if s.tokens.is_empty() {
            return Err(Error::Record {
                path: path.display().to_string(),
                line: i + 1,
                message: "sentence has no tokens".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}
