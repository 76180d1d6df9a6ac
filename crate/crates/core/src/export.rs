//! Rendering of a topic tree as Graphviz DOT or nested JSON.

use std::fmt::Write as _;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Vocabulary;
use crate::model::{expected_stick_weights, expected_topic, Hyperparameters, ModelError, NodeId, Stick, TopicTree};

pub const TREE_FORMAT: &str = "nhdp-tree/1";
/// Words shown per node.
pub const EXPORT_TOP_WORDS: usize = 8;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("prune threshold must lie in [0, 1), got {0}")]
    BadThreshold(f64),
    #[error("unknown export format {0:?} (expected dot or json)")]
    BadFormat(String),
    #[error("vocabulary has {vocab} entries but the model has {model} words")]
    VocabMismatch { vocab: usize, model: usize },
    #[error("malformed tree document: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            _ => Err(ExportError::BadFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportNode {
    pub id: NodeId,
    /// Expected weight of the edge from the parent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<f64>,
    pub top_words: Vec<(String, f64)>,
    pub lambda: Vec<f64>,
    /// `(a, b)` of the stick of every exported child, in child order.
    pub sticks: Vec<[f64; 2]>,
    pub children: Vec<ExportNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportDocument {
    pub format: String,
    pub vocab_size: usize,
    pub hyper: Hyperparameters,
    pub root: ExportNode,
}

/// Arena indices of the nodes that survive pruning, in preorder. A node is
/// dropped, with its descendants, when its subtree usage mass is below
/// `prune_below`; the root always stays. Without cached usage nothing is
/// pruned.
pub fn kept_nodes(tree: &TopicTree, prune_below: f64) -> Result<Vec<bool>, ExportError> {
    if !(0.0..1.0).contains(&prune_below) {
        return Err(ExportError::BadThreshold(prune_below));
    }
    let mut keep = vec![true; tree.len()];
    if prune_below == 0.0 {
        return Ok(keep);
    }
    let Some(mass) = tree.subtree_usage() else {
        warn!("model has no usage mass; exporting without pruning");
        return Ok(keep);
    };
    for i in tree.preorder().into_iter().skip(1) {
        let parent = tree.node(i).parent().expect("non-root node");
        keep[i] = keep[parent] && mass[i] >= prune_below;
    }
    Ok(keep)
}

fn token_label(vocab: Option<&Vocabulary>, w: usize) -> String {
    vocab.and_then(|v| v.token(w)).map(str::to_string).unwrap_or_else(|| format!("#{w}"))
}

fn top_words(tree: &TopicTree, k: usize, vocab: Option<&Vocabulary>, n: usize) -> Vec<(String, f64)> {
    let mut words: Vec<(usize, f64)> = expected_topic(tree.node(k)).into_iter().enumerate().collect();
    words.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    words.into_iter().take(n).map(|(w, p)| (token_label(vocab, w), p)).collect()
}

fn check_vocab(tree: &TopicTree, vocab: Option<&Vocabulary>) -> Result<(), ExportError> {
    match vocab {
        Some(v) if v.len() != tree.vocab_size() => Err(ExportError::VocabMismatch { vocab: v.len(), model: tree.vocab_size() }),
        _ => Ok(()),
    }
}

pub fn export_tree(tree: &TopicTree, vocab: Option<&Vocabulary>, format: ExportFormat, prune_below: f64) -> Result<String, ExportError> {
    match format {
        ExportFormat::Dot => export_dot(tree, vocab, prune_below),
        ExportFormat::Json => export_json(tree, vocab, prune_below),
    }
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Digraph with one box per node (id, usage and top words, one per line)
/// and edges labelled with expected stick weights.
pub fn export_dot(tree: &TopicTree, vocab: Option<&Vocabulary>, prune_below: f64) -> Result<String, ExportError> {
    check_vocab(tree, vocab)?;
    let keep = kept_nodes(tree, prune_below)?;
    let usage = tree.usage();
    let mut out = String::from("digraph topics {\n  node [shape=box, fontname=\"monospace\"];\n");
    for i in tree.preorder().into_iter().filter(|&i| keep[i]) {
        let node = tree.node(i);
        let mut label = node.id.to_string();
        if let Some(u) = usage {
            let _ = write!(label, "  usage {:.4}", u[i]);
        }
        for (w, p) in top_words(tree, i, vocab, EXPORT_TOP_WORDS) {
            let _ = write!(label, "\n{w} {p:.4}");
        }
        let _ = writeln!(out, "  {} [label={}];", dot_quote(&node.id.to_string()), dot_quote(&label));
        let weights = expected_stick_weights(&node.sticks);
        for (pos, &c) in node.children().iter().enumerate() {
            if keep[c] {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label={}];",
                    dot_quote(&node.id.to_string()),
                    dot_quote(&tree.node(c).id.to_string()),
                    dot_quote(&format!("{:.4}", weights[pos]))
                );
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn export_document(tree: &TopicTree, vocab: Option<&Vocabulary>, prune_below: f64) -> Result<ExportDocument, ExportError> {
    check_vocab(tree, vocab)?;
    let keep = kept_nodes(tree, prune_below)?;
    let usage = tree.usage();
    fn build(tree: &TopicTree, i: usize, edge: Option<f64>, keep: &[bool], usage: Option<&[f64]>, vocab: Option<&Vocabulary>) -> ExportNode {
        let node = tree.node(i);
        let weights = expected_stick_weights(&node.sticks);
        let kids: Vec<(usize, usize)> = node.children().iter().copied().enumerate().filter(|&(_, c)| keep[c]).collect();
        ExportNode {
            id: node.id.clone(),
            edge_weight: edge,
            usage: usage.map(|u| u[i]),
            top_words: top_words(tree, i, vocab, EXPORT_TOP_WORDS),
            lambda: node.lambda.clone(),
            sticks: kids.iter().map(|&(pos, _)| [node.sticks[pos].a, node.sticks[pos].b]).collect(),
            children: kids.iter().map(|&(pos, c)| build(tree, c, Some(weights[pos]), keep, usage, vocab)).collect(),
        }
    }
    Ok(ExportDocument {
        format: TREE_FORMAT.to_string(),
        vocab_size: tree.vocab_size(),
        hyper: tree.hyper().clone(),
        root: build(tree, 0, None, &keep, usage, vocab),
    })
}

pub fn export_json(tree: &TopicTree, vocab: Option<&Vocabulary>, prune_below: f64) -> Result<String, ExportError> {
    let mut s = serde_json::to_string_pretty(&export_document(tree, vocab, prune_below)?).expect("export serializes");
    s.push('\n');
    Ok(s)
}

/// Rebuilds a tree from [`export_json`] output. Children are renumbered in
/// order, so a pruned export comes back with contiguous ids.
pub fn import_json(text: &str) -> Result<TopicTree, ExportError> {
    let doc: ExportDocument = serde_json::from_str(text).map_err(|e| ExportError::Parse(e.to_string()))?;
    if doc.format != TREE_FORMAT {
        return Err(ExportError::Parse(format!("unsupported format {:?}", doc.format)));
    }
    let mut tree = TopicTree::new(doc.hyper.clone(), doc.root.lambda.clone())?;
    if tree.vocab_size() != doc.vocab_size {
        return Err(ExportError::Parse("vocab_size disagrees with topic length".into()));
    }
    let mut usage = vec![doc.root.usage];
    let mut stack = vec![(&doc.root, 0usize)];
    while let Some((node, idx)) = stack.pop() {
        if node.sticks.len() != node.children.len() {
            return Err(ExportError::Parse(format!("node {} has {} sticks for {} children", node.id, node.sticks.len(), node.children.len())));
        }
        for (child, &[a, b]) in node.children.iter().zip(&node.sticks) {
            let c = tree.add_child(idx, child.lambda.clone(), Stick::new(a, b))?;
            usage.push(child.usage);
            stack.push((child, c));
        }
    }
    if let Some(u) = usage.into_iter().collect::<Option<Vec<f64>>>() {
        tree.set_usage(u)?;
    }
    Ok(tree)
}
