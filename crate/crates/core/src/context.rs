//! Usage context of a token: the tree nodes most responsible for it, each
//! with its parent, children and most probable words.

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Corpus, Vocabulary};
use crate::model::{expected_topic, InferenceConfig, ModelError, NodeId, TopicTree, TreeView};

/// Words listed per node.
pub const CONTEXT_TOP_WORDS: usize = 20;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("unknown token {token:?}; closest vocabulary entries: {suggestions:?}")]
    UnknownToken { token: String, suggestions: Vec<String> },
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("model and vocabulary disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextNode {
    pub node_id: NodeId,
    /// Position in the ranking, for the top-scoring nodes only.
    pub rank: Option<usize>,
    pub score: f64,
    pub top_words: Vec<(String, f64)>,
    pub parent_id: Option<NodeId>,
    pub child_ids: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextHierarchy {
    pub focus_token: String,
    /// Ranked nodes first, then their parents and children.
    pub nodes: Vec<ContextNode>,
}

impl ContextHierarchy {
    pub fn ranked(&self) -> impl Iterator<Item = &ContextNode> {
        self.nodes.iter().filter(|n| n.rank.is_some())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("context serializes");
        s.push('\n');
        s
    }

    /// Indented outline: every ranked node under its parent, with its
    /// children beneath it.
    pub fn to_text(&self) -> String {
        let by_id = |id: &NodeId| self.nodes.iter().find(|n| &n.node_id == id);
        let words = |n: &ContextNode, k: usize| n.top_words.iter().take(k).map(|(w, p)| format!("{w} ({p:.3})")).collect::<Vec<_>>().join(", ");
        let mut out = format!("context of {}\n", self.focus_token);
        for n in self.ranked() {
            out.push_str(&format!("\n#{} {}  score {:.6}\n", n.rank.unwrap_or(0), n.node_id, n.score));
            if let Some(p) = n.parent_id.as_ref().and_then(by_id) {
                out.push_str(&format!("  parent {}: {}\n", p.node_id, words(p, 8)));
            }
            out.push_str(&format!("    node {}: {}\n", n.node_id, words(n, CONTEXT_TOP_WORDS)));
            for c in n.child_ids.iter().filter_map(by_id) {
                out.push_str(&format!("      child {}: {}\n", c.node_id, words(c, 8)));
            }
        }
        out
    }
}

/// Up to `n` vocabulary entries closest to `token` by edit distance.
pub fn nearest_tokens(vocab: &Vocabulary, token: &str, n: usize) -> Vec<String> {
    let mut scored: Vec<(usize, &String)> = vocab.tokens().iter().map(|t| (strsim::levenshtein(token, t), t)).collect();
    scored.sort();
    scored.into_iter().take(n).map(|(_, t)| t.clone()).collect()
}

/// Per-node usage mass: the cached value if present, otherwise the average
/// posterior node weight over `corpus`.
pub fn usage_mass(tree: &TopicTree, corpus: &Corpus, config: &InferenceConfig) -> Result<Vec<f64>, ContextError> {
    if let Some(u) = tree.usage() {
        return Ok(u.to_vec());
    }
    let view = TreeView::new(tree);
    let mut usage = vec![0.0; tree.len()];
    let mut n = 0.0;
    for doc in corpus.docs.iter().filter(|d| !d.terms.is_empty()) {
        let post = view.infer(&doc.terms, config)?;
        for (&k, &w) in post.nodes.iter().zip(&post.node_weights) {
            usage[k] += w;
        }
        n += 1.0;
    }
    Ok(usage.into_iter().map(|u| if n > 0.0 { u / n } else { 0.0 }).collect())
}

/// Scores every node by `E[theta_k][token] * usage_k`, keeps the `top_k`
/// best and adds their parents and children.
pub fn exception_context(tree: &TopicTree, corpus: &Corpus, token: &str, top_k: usize) -> Result<ContextHierarchy, ContextError> {
    if top_k == 0 {
        return Err(ContextError::ZeroTopK);
    }
    if corpus.vocab.len() != tree.vocab_size() {
        return Err(ContextError::Mismatch(format!("model has {} words, corpus vocabulary {}", tree.vocab_size(), corpus.vocab.len())));
    }
    let w = corpus.vocab.index_of(token).ok_or_else(|| ContextError::UnknownToken {
        token: token.to_string(),
        suggestions: nearest_tokens(&corpus.vocab, token, 5),
    })?;
    let usage = usage_mass(tree, corpus, &InferenceConfig::default())?;
    let topics: Vec<Vec<f64>> = tree.nodes().iter().map(expected_topic).collect();
    let scores: Vec<f64> = topics.iter().zip(&usage).map(|(t, u)| t[w] * u).collect();

    let mut order: Vec<usize> = tree.preorder();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(top_k);

    let describe = |k: usize, rank: Option<usize>| {
        let node = tree.node(k);
        let mut words: Vec<(usize, f64)> = topics[k].iter().copied().enumerate().collect();
        words.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ContextNode {
            node_id: node.id.clone(),
            rank,
            score: scores[k],
            top_words: words
                .into_iter()
                .take(CONTEXT_TOP_WORDS)
                .map(|(i, p)| (corpus.vocab.token(i).unwrap_or_default().to_string(), p))
                .collect(),
            parent_id: node.parent().map(|p| tree.node(p).id.clone()),
            child_ids: node.children().iter().map(|&c| tree.node(c).id.clone()).collect(),
        }
    };
    let mut included: Vec<usize> = order.clone();
    let mut nodes: Vec<ContextNode> = order.iter().enumerate().map(|(r, &k)| describe(k, Some(r + 1))).collect();
    for &k in &order {
        let node = tree.node(k);
        for n in node.parent().into_iter().chain(node.children().iter().copied()) {
            if !included.contains(&n) {
                included.push(n);
                nodes.push(describe(n, None));
            }
        }
    }
    Ok(ContextHierarchy { focus_token: token.to_string(), nodes })
}
