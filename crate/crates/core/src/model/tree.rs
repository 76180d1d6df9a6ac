use std::fmt;
use std::str::FromStr;

use crate::math::digamma;

use super::{DocPosterior, Hyperparameters, ModelError};

/// Path of child positions from the root; the root is the empty path.
/// Rendered as `r`, `r.0`, `r.0.3`, ...
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeId(pub Vec<usize>);

impl NodeId {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, position: usize) -> Self {
        let mut p = self.0.clone();
        p.push(position);
        Self(p)
    }

    pub fn parent(&self) -> Option<Self> {
        let (_, head) = self.0.split_last()?;
        Some(Self(head.to_vec()))
    }

    /// True when `self` lies on the path from the root to `other` (inclusive).
    pub fn is_ancestor_of(&self, other: &NodeId) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("r")?;
        for p in &self.0 {
            write!(f, ".{p}")?;
        }
        Ok(())
    }
}

impl serde::Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for NodeId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Format(format!("bad node id {s:?}"));
        let mut parts = s.split('.');
        if parts.next() != Some("r") {
            return Err(bad());
        }
        parts.map(|p| p.parse().map_err(|_| bad())).collect::<Result<_, _>>().map(NodeId)
    }
}

/// Variational `Beta(a, b)` over one stick-breaking proportion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stick {
    pub a: f64,
    pub b: f64,
}

impl Stick {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicNode {
    pub id: NodeId,
    /// Variational Dirichlet parameters of the node's topic.
    pub lambda: Vec<f64>,
    /// One stick per child, in child order.
    pub sticks: Vec<Stick>,
    parent: Option<usize>,
    children: Vec<usize>,
}

impl TopicNode {
    pub fn parent(&self) -> Option<usize> {
        self.parent
    }

    /// Arena indices of the children, in child order.
    pub fn children(&self) -> &[usize] {
        &self.children
    }

    pub fn depth(&self) -> usize {
        self.id.depth()
    }
}

/// Expected topic `lambda / sum(lambda)`.
pub fn expected_topic(node: &TopicNode) -> Vec<f64> {
    let total: f64 = node.lambda.iter().sum();
    node.lambda.iter().map(|l| l / total).collect()
}

/// Stick-breaking weights `E[V_i] * prod_{j<i} (1 - E[V_j])`, followed by
/// the residual mass left for unrepresented children.
pub fn expected_stick_weights(sticks: &[Stick]) -> Vec<f64> {
    let mut remaining = 1.0;
    let mut out = Vec::with_capacity(sticks.len() + 1);
    for s in sticks {
        let v = s.mean();
        out.push(remaining * v);
        remaining *= 1.0 - v;
    }
    out.push(remaining);
    out
}

/// The global topic tree. Nodes live in an arena where every parent
/// precedes its children; index 0 is the root. Equality is structural and
/// ignores arena order.
#[derive(Debug, Clone)]
pub struct TopicTree {
    hyper: Hyperparameters,
    vocab_size: usize,
    nodes: Vec<TopicNode>,
    usage: Option<Vec<f64>>,
}

impl TopicTree {
    pub fn new(hyper: Hyperparameters, root_lambda: Vec<f64>) -> Result<Self, ModelError> {
        hyper.validate()?;
        let vocab_size = root_lambda.len();
        if vocab_size == 0 {
            return Err(ModelError::InvalidTree("empty vocabulary".into()));
        }
        check_lambda(&root_lambda, vocab_size)?;
        Ok(Self {
            hyper,
            vocab_size,
            nodes: vec![TopicNode {
                id: NodeId::root(),
                lambda: root_lambda,
                sticks: Vec::new(),
                parent: None,
                children: Vec::new(),
            }],
            usage: None,
        })
    }

    /// Tree whose topics are all exactly uniform; full truncation when
    /// `full` is set, otherwise a lone root.
    pub fn uniform(hyper: Hyperparameters, vocab_size: usize, full: bool) -> Result<Self, ModelError> {
        let mut tree = Self::new(hyper, vec![1.0; vocab_size])?;
        if full {
            let mut frontier = vec![0];
            while let Some(parent) = frontier.pop() {
                let k = tree.hyper.max_children(tree.nodes[parent].depth());
                for _ in 0..k {
                    frontier.push(tree.add_child(parent, vec![1.0; vocab_size], Stick::new(1.0, tree.hyper.alpha))?);
                }
            }
        }
        Ok(tree)
    }

    /// Appends a child under `parent`, enforcing depth and branching caps.
    pub fn add_child(&mut self, parent: usize, lambda: Vec<f64>, stick: Stick) -> Result<usize, ModelError> {
        check_lambda(&lambda, self.vocab_size)?;
        check_stick(stick)?;
        let p = self
            .nodes
            .get(parent)
            .ok_or_else(|| ModelError::InvalidTree(format!("no node {parent}")))?;
        let depth = p.depth();
        if p.children.len() >= self.hyper.max_children(depth) {
            return Err(ModelError::InvalidTree(format!(
                "node {} already has the maximum {} children",
                p.id,
                self.hyper.max_children(depth)
            )));
        }
        let id = p.id.child(p.children.len());
        let index = self.nodes.len();
        self.nodes.push(TopicNode {
            id,
            lambda,
            sticks: Vec::new(),
            parent: Some(parent),
            children: Vec::new(),
        });
        let p = &mut self.nodes[parent];
        p.children.push(index);
        p.sticks.push(stick);
        self.usage = None;
        Ok(index)
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn set_hyper(&mut self, hyper: Hyperparameters) -> Result<(), ModelError> {
        hyper.validate()?;
        for n in &self.nodes {
            if n.children.len() > hyper.max_children(n.depth()) {
                return Err(ModelError::InvalidTree(format!("node {} exceeds the new truncation", n.id)));
            }
        }
        self.hyper = hyper;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TopicNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &TopicNode {
        &self.nodes[index]
    }

    pub(crate) fn node_mut(&mut self, index: usize) -> &mut TopicNode {
        &mut self.nodes[index]
    }

    pub fn find(&self, id: &NodeId) -> Option<usize> {
        let mut cur = 0;
        for &pos in &id.0 {
            cur = *self.nodes[cur].children.get(pos)?;
        }
        Some(cur)
    }

    /// Arena indices in depth-first preorder.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(self.nodes[i].children.iter().rev());
        }
        order
    }

    /// Per-node average posterior mass over a corpus, if it has been computed.
    pub fn usage(&self) -> Option<&[f64]> {
        self.usage.as_deref()
    }

    pub fn set_usage(&mut self, usage: Vec<f64>) -> Result<(), ModelError> {
        if usage.len() != self.nodes.len() || usage.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
            return Err(ModelError::InvalidTree("usage must be one nonnegative value per node".into()));
        }
        self.usage = Some(usage);
        Ok(())
    }

    /// Usage mass of each node plus all of its descendants.
    pub fn subtree_usage(&self) -> Option<Vec<f64>> {
        let usage = self.usage.as_ref()?;
        let mut out = usage.clone();
        for i in (1..self.nodes.len()).rev() {
            let p = self.nodes[i].parent.expect("non-root has a parent");
            out[p] += out[i];
        }
        Some(out)
    }

    pub fn view(&self) -> TreeView<'_> {
        TreeView::new(self)
    }

    /// Rebuilds a tree from records in any order that lists parents first.
    pub fn from_records(
        hyper: Hyperparameters,
        records: Vec<(NodeId, Vec<f64>, Vec<Stick>)>,
    ) -> Result<Self, ModelError> {
        let mut records = records;
        records.sort_by(|a, b| a.0.cmp(&b.0));
        let mut iter = records.into_iter();
        let (root_id, root_lambda, root_sticks) =
            iter.next().ok_or_else(|| ModelError::InvalidTree("no nodes".into()))?;
        if root_id != NodeId::root() {
            return Err(ModelError::InvalidTree("first node must be the root".into()));
        }
        let mut tree = Self::new(hyper, root_lambda)?;
        let mut pending = vec![root_sticks];
        for (id, lambda, sticks) in iter {
            let parent_id = id.parent().expect("non-root id");
            let parent = tree
                .find(&parent_id)
                .ok_or_else(|| ModelError::InvalidTree(format!("node {id} has no parent in the file")))?;
            let position = *id.0.last().unwrap();
            if position != tree.nodes[parent].children.len() {
                return Err(ModelError::InvalidTree(format!("node {id} skips a sibling position")));
            }
            let stick = *pending[parent]
                .get(position)
                .ok_or_else(|| ModelError::InvalidTree(format!("parent of {id} lacks a stick for it")))?;
            tree.add_child(parent, lambda, stick)?;
            pending.push(sticks);
        }
        for (i, sticks) in pending.iter().enumerate() {
            if sticks.len() != tree.nodes[i].children.len() {
                return Err(ModelError::InvalidTree(format!(
                    "node {} has {} sticks but {} children",
                    tree.nodes[i].id,
                    sticks.len(),
                    tree.nodes[i].children.len()
                )));
            }
        }
        Ok(tree)
    }
}

impl PartialEq for TopicTree {
    fn eq(&self, other: &Self) -> bool {
        if self.hyper != other.hyper || self.vocab_size != other.vocab_size || self.len() != other.len() {
            return false;
        }
        let (a, b) = (self.preorder(), other.preorder());
        let same_nodes = a.iter().zip(&b).all(|(&i, &j)| {
            let (x, y) = (&self.nodes[i], &other.nodes[j]);
            x.id == y.id && x.lambda == y.lambda && x.sticks == y.sticks
        });
        let same_usage = match (&self.usage, &other.usage) {
            (None, None) => true,
            (Some(u), Some(v)) => a.iter().zip(&b).all(|(&i, &j)| u[i] == v[j]),
            _ => false,
        };
        same_nodes && same_usage
    }
}

fn check_lambda(lambda: &[f64], vocab_size: usize) -> Result<(), ModelError> {
    if lambda.len() != vocab_size {
        return Err(ModelError::InvalidTree(format!("topic has {} entries, expected {vocab_size}", lambda.len())));
    }
    if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(ModelError::InvalidTree("topic parameters must be positive and finite".into()));
    }
    Ok(())
}

fn check_stick(stick: Stick) -> Result<(), ModelError> {
    if !(stick.a > 0.0 && stick.b > 0.0 && stick.a.is_finite() && stick.b.is_finite()) {
        return Err(ModelError::InvalidTree(format!("stick parameters must be positive, got {stick:?}")));
    }
    Ok(())
}

/// Floor on a document-level branch prior `beta * p_j`.
pub(crate) const CHILD_PRIOR_FLOOR: f64 = 1e-4;

/// Read-only expectations of a frozen tree, laid out word-major so that a
/// document touches one contiguous row per distinct word.
pub struct TreeView<'a> {
    pub(crate) tree: &'a TopicTree,
    pub(crate) n_nodes: usize,
    /// `E[ln theta_kw]` at `w * n_nodes + k`.
    pub(crate) elog_theta: Vec<f64>,
    /// `E[theta_kw]` at `w * n_nodes + k`.
    pub(crate) mean_theta: Vec<f64>,
    /// Dirichlet prior `beta * p_j` over each node's children.
    pub(crate) child_prior: Vec<Vec<f64>>,
}

impl<'a> TreeView<'a> {
    pub fn new(tree: &'a TopicTree) -> Self {
        let n = tree.nodes.len();
        let v = tree.vocab_size;
        let mut elog_theta = vec![0.0; n * v];
        let mut mean_theta = vec![0.0; n * v];
        for (k, node) in tree.nodes.iter().enumerate() {
            let total: f64 = node.lambda.iter().sum();
            let dg_total = digamma(total);
            for (w, &l) in node.lambda.iter().enumerate() {
                elog_theta[w * n + k] = digamma(l) - dg_total;
                mean_theta[w * n + k] = l / total;
            }
        }
        let beta = tree.hyper.beta;
        let child_prior = tree
            .nodes
            .iter()
            .map(|node| {
                let weights = expected_stick_weights(&node.sticks);
                let kept = 1.0 - weights[weights.len() - 1];
                weights[..node.sticks.len()]
                    .iter()
                    .map(|w| {
                        let p = if kept > 0.0 { w / kept } else { 1.0 / node.sticks.len() as f64 };
                        (beta * p).max(CHILD_PRIOR_FLOOR)
                    })
                    .collect()
            })
            .collect();
        Self {
            tree,
            n_nodes: n,
            elog_theta,
            mean_theta,
            child_prior,
        }
    }

    pub fn tree(&self) -> &TopicTree {
        self.tree
    }

    pub(crate) fn mean_row(&self, word: usize) -> &[f64] {
        &self.mean_theta[word * self.n_nodes..(word + 1) * self.n_nodes]
    }

    pub(crate) fn elog_row(&self, word: usize) -> &[f64] {
        &self.elog_theta[word * self.n_nodes..(word + 1) * self.n_nodes]
    }

    pub fn word_prob(&self, post: &DocPosterior, word: usize) -> Result<f64, ModelError> {
        if word >= self.tree.vocab_size {
            return Err(ModelError::WordOutOfRange { index: word, vocab_size: self.tree.vocab_size });
        }
        let row = self.mean_row(word);
        Ok(post.nodes.iter().zip(&post.node_weights).map(|(&k, &w)| w * row[k]).sum())
    }
}

/// `p(w) = sum_k weight_k * E[theta_k][w]` for a document posterior.
pub fn predictive_word_prob(tree: &TopicTree, post: &DocPosterior, word: usize) -> Result<f64, ModelError> {
    if word >= tree.vocab_size {
        return Err(ModelError::WordOutOfRange { index: word, vocab_size: tree.vocab_size });
    }
    Ok(post
        .nodes
        .iter()
        .zip(&post.node_weights)
        .map(|(&k, &w)| {
            let lambda = &tree.nodes[k].lambda;
            w * lambda[word] / lambda.iter().sum::<f64>()
        })
        .sum())
}
