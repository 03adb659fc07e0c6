//! Augment, filter and retrain a small code-search retriever.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`] loads query/code pairs and persists augmentation maps.
//! * [`prompting`] renders the rewrite prompts and the query length bound.
//! * [`augmentor`] talks to a chat-completion backend (or a seeded mock)
//!   and turns responses into augmentation maps.
//! * [`baselines`] holds the word-edit query augmenter and the syntax-tree
//!   code transforms used for comparison.
//! * [`neural`] is the tokenizer, the bi-encoder, the cross-encoder and
//!   their training loops.
//! * [`filter`] scores augmentations with a trained cross-encoder and
//!   assembles the augmented training set.
//! * [`eval`] computes ranks, MRR, recall@k, alignment and uniformity.
//! * [`synth`] and [`pipeline`] generate the synthetic corpus and wire the
//!   stages together for experiments.

pub mod augmentor;
pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod filter;
pub mod neural;
pub mod pipeline;
pub mod prompting;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
