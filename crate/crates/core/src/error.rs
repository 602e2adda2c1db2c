use std::path::PathBuf;

use crate::preferences::Preference;
use crate::{ContextId, TermId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("term out of range: {0}")]
    TermOutOfRange(TermId),

    #[error("context out of range: {0}")]
    ContextOutOfRange(ContextId),

    #[error("degenerate pair: term {0} paired with itself")]
    DegeneratePair(TermId),

    #[error("degenerate corpus: Z too small")]
    DegenerateCorpus,

    #[error("meaningless preference: {0}")]
    NotInDpref(String),

    #[error("insufficient pairs: need at least 2 scored pairs, got {0}")]
    InsufficientPairs(usize),

    #[error("duplicate scored pair ({0}, {1})")]
    DuplicatePair(TermId, TermId),

    #[error("non-finite score for pair ({0}, {1})")]
    NonFiniteScore(TermId, TermId),

    #[error("training size {m} exceeds preference count {available}")]
    SplitTooLarge { m: u64, available: u64 },

    #[error("need at least 2 documents to split, got {0}")]
    TooFewDocuments(usize),

    #[error("negative score gap {0}")]
    NegativeDelta(f64),

    #[error("contradictory preferences: {first:?} vs {second:?}")]
    Contradiction { first: Preference, second: Preference },

    #[error("empty preference set")]
    EmptyPreferences,

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("enumeration bound exceeded: {kind} with d = {d}")]
    EnumerationBound { kind: &'static str, d: usize },

    #[error("model has {model} weights but index has {index} contexts")]
    ModelMismatch { model: usize, index: usize },

    #[error("invalid weight {weight} for context {context}")]
    InvalidWeight { context: ContextId, weight: f64 },

    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),

    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),

    #[error("unsupported artifact: {0}")]
    Unsupported(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
