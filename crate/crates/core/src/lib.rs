//! Ranking-based translation of English sentences into programs of a typed DSL.
//!
//! A domain supplies a grammar, a word dictionary and example
//! (sentence, program) pairs. [`synth`] enumerates every program consistent
//! with a sentence, [`scoring`] ranks them with learned classifiers and a
//! weight vector, and [`training`] builds those models from the examples.

pub mod corpus;
pub mod domains;
pub mod eval;
pub mod dsl;
pub mod error;
pub mod lexicon;
pub mod nlp;
pub mod scoring;
pub mod stats;
pub mod synth;
pub mod training;

pub use error::{Error, Result};

use sha2::{Digest, Sha256};

/// Hex SHA-256 digest, used to tie model bundles to the assets they were
/// trained on.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
