//! Self-training with weak labels for multi-domain targeted sentiment
//! analysis.
//!
//! The pipeline: ingest a review corpus into a filtered sentence pool
//! ([`corpus`], [`lexicon`]), tag sentiment targets with an IO scheme
//! ([`tagger`]), select confident predictions as weak labels ([`weaklabel`]),
//! iterate training ([`selftrain`]) and score with exact-match per-domain
//! metrics ([`eval`]). [`synth`] generates planted-target corpora for
//! desk-scale experiments.

pub mod cli;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod seed;
pub mod selftrain;
pub mod synth;
pub mod tagger;
pub mod text;
pub mod weaklabel;

pub use error::{Error, Result};
