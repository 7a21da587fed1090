//! Neighbourhood-based collaborative filtering with privacy-preserving
//! neighbour selection.
//!
//! The crate implements four selection strategies over a sparse star-rating
//! matrix (plain `kNN`, naive probabilistic selection `nPNS`, private
//! neighbour CF `PNCF`, and partitioned probabilistic neighbour selection
//! `PPNS`) together with the machinery needed to study them:
//!
//! * [`ratings`]: sparse rating matrix, MovieLens/CSV ingestion, transpose;
//! * [`similarity`]: cosine similarity, sorted candidate rows,
//!   exponential-mechanism selection weights and their sensitivity;
//! * [`wallenius`]: weighted sampling without replacement and the mean of
//!   the Wallenius non-central hypergeometric distribution;
//! * [`selection`]: the four neighbour-selection strategies;
//! * [`metrics`]: expected-similarity accuracy estimates and a brute-force
//!   allocation-optimality checker;
//! * [`predict`]: rating prediction and MAE evaluation;
//! * [`attack`]: a kNN-attack simulator (fake-profile injection);
//! * [`synth`]: deterministic synthetic corpora for experiments and tests.
//!
//! All stochastic operations are driven by explicit seeds through a portable
//! generator, so every experiment is bit-reproducible.

pub mod attack;
pub mod metrics;
pub mod predict;
pub mod ratings;
pub mod seeds;
pub mod selection;
pub mod similarity;
pub mod synth;
pub mod wallenius;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A line or record in an input file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// An argument or input violated an operation's preconditions.
    #[error("validation error: {0}")]
    Validation(String),
    /// The data admits no well-defined result; a manual override is needed.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
