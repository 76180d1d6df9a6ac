//! Hierarchical usage contexts for software exceptions.
//!
//! Interaction logs with embedded stack traces are cut into sessions and
//! fixed-length message windows, turned into a bag-of-words corpus, and fit
//! with a truncated nested hierarchical Dirichlet process topic tree. The
//! tree is trained by K-means initialization followed by stochastic
//! variational inference, evaluated by held-out perplexity, and queried for
//! the topic hierarchy surrounding an exception token.

pub mod context;
pub mod evalkit;
pub mod export;
pub mod ingest;
pub mod math;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synthgen;
pub mod training;

pub use ingest::{Corpus, CorpusDoc, TermVector, Vocabulary};
pub use model::{DocPosterior, Hyperparameters, InferenceConfig, NodeId, TopicNode, TopicTree};
