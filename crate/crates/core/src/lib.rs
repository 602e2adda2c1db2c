//! Semantic relatedness from corpus co-occurrence with learned, per-context
//! weights.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`] turns raw text into tokenized contexts and a term [`Dictionary`].
//! - [`index`] maps every term to the sorted list of contexts containing it.
//! - [`semantics`] scores term pairs with the (weighted) normalized semantic
//!   distance and classifies pair-of-pair preferences.
//! - [`preferences`] holds the preference data model, dataset synthesis and
//!   train/test sampling.
//! - [`trainer`] learns context weights from labeled preferences with
//!   multiplicative updates.
//! - [`eval`] computes accuracy, Spearman correlation, learning curves and
//!   interpretability reports.
//! - [`vcdim`] brute-forces VC dimensions of the two reference hypothesis
//!   classes over pair preferences.
//! - [`store`] persists indexes, models and datasets.

// `!(x > y)` is used deliberately so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod index;
pub mod porter;
pub mod preferences;
pub mod rng;
pub mod semantics;
pub mod store;
pub mod trainer;
pub mod vcdim;

pub use corpus::{Dictionary, Granularity, RawDocument, Tokenizer};
pub use error::{Error, Result};
pub use index::{ContextMeta, Index};
pub use preferences::{Label, Preference, ScoredPair, TermPair};
pub use semantics::{Relatedness, SemanticModel};
pub use trainer::{TrainReport, TrainerConfig};

/// Dense dictionary id of a term.
pub type TermId = u32;
/// Dense id of a context (sentence, paragraph or document).
pub type ContextId = u32;
