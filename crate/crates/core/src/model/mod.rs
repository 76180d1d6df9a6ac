//! Truncated nested hierarchical Dirichlet process: the global topic tree,
//! its stick-breaking branch weights, and per-document posteriors.

mod hyper;
mod infer;
mod io;
mod tree;

pub use hyper::Hyperparameters;
pub use infer::{infer_document, DocPosterior, InferenceConfig};
pub use io::{ModelFile, NodeRecord, MODEL_FORMAT};
pub use tree::{
    expected_stick_weights, expected_topic, predictive_word_prob, NodeId, Stick, TopicNode, TopicTree, TreeView,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("word index {index} is outside the vocabulary of {vocab_size} words")]
    WordOutOfRange { index: usize, vocab_size: usize },
    #[error("cannot infer a posterior for an empty document")]
    EmptyDocument,
    #[error("model vocabulary hash {model} does not match corpus vocabulary hash {corpus}")]
    VocabMismatch { model: String, corpus: String },
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
