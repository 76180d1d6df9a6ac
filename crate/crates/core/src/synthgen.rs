//! Forward sampler for the tree model: draws a ground-truth topic tree and
//! documents from it, to serve as an oracle for training and evaluation.

use rand::distr::Distribution;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use serde::Serialize;

use crate::ingest::{Corpus, CorpusDoc, TermVector, Vocabulary};
use crate::math::{sample_beta, sample_dirichlet};
use crate::model::{Hyperparameters, ModelError, NodeId, Stick, TopicTree};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthNode {
    pub id: NodeId,
    /// Exact word distribution of the node.
    pub topic: Vec<f64>,
    /// Stick-breaking weights of the children followed by the residual.
    pub child_weights: Vec<f64>,
    #[serde(skip)]
    pub parent: Option<usize>,
    #[serde(skip)]
    pub children: Vec<usize>,
}

/// A sampled tree with exact distributions, plus the true node usage of
/// every document drawn from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub vocab_size: usize,
    pub hyper: Hyperparameters,
    pub nodes: Vec<TruthNode>,
    /// Per document, the probability of each node (indexed like `nodes`).
    pub doc_assignments: Vec<Vec<f64>>,
}

/// One sampled document with its latent variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDoc {
    pub words: Vec<usize>,
    /// Node that emitted each word.
    pub word_nodes: Vec<usize>,
    /// Per node, the probability of stopping there (1 for leaves).
    pub stop_probs: Vec<f64>,
    /// Per node, the document's weights over its children.
    pub branch_weights: Vec<Vec<f64>>,
    /// Per node, the probability that a word of this document lands there.
    pub usage: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Corpus restricted to words that occur at least once.
    pub corpus: Corpus,
    /// Ground truth projected onto the corpus vocabulary.
    pub truth: GroundTruth,
    /// Original word index of every corpus vocabulary entry.
    pub original_index: Vec<usize>,
}

impl GroundTruth {
    pub fn children(&self, node: usize) -> &[usize] {
        &self.nodes[node].children
    }

    pub fn depth(&self, node: usize) -> usize {
        self.nodes[node].id.depth()
    }

    /// Indices of nodes at `depth`.
    pub fn level(&self, depth: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.depth(i) == depth).collect()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].children.is_empty()).collect()
    }

    /// Keeps only the listed word indices (in that order) and renormalizes
    /// every topic over them.
    pub fn restrict_vocab(&self, keep: &[usize]) -> GroundTruth {
        let mut out = self.clone();
        out.vocab_size = keep.len();
        for node in &mut out.nodes {
            let projected: Vec<f64> = keep.iter().map(|&w| node.topic[w]).collect();
            let total: f64 = projected.iter().sum();
            node.topic = if total > 0.0 {
                projected.iter().map(|p| p / total).collect()
            } else {
                vec![1.0 / keep.len() as f64; keep.len()]
            };
        }
        out
    }

    /// A variational tree whose expected topics and branch weights equal
    /// the truth: `lambda = concentration * topic + floor`.
    pub fn to_topic_tree(&self, concentration: f64) -> Result<TopicTree, ModelError> {
        let lam = |i: usize| -> Vec<f64> { self.nodes[i].topic.iter().map(|p| concentration * p + 1e-12).collect() };
        let mut tree = TopicTree::new(self.hyper.clone(), lam(0))?;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((truth_idx, tree_idx)) = stack.pop() {
            let node = &self.nodes[truth_idx];
            let mut remaining = 1.0;
            for (pos, &child) in node.children.iter().enumerate() {
                let w = node.child_weights[pos];
                let v = (w / remaining).clamp(1e-9, 1.0 - 1e-9);
                remaining -= w;
                let stick = Stick::new(concentration * v, concentration * (1.0 - v));
                let idx = tree.add_child(tree_idx, lam(child), stick)?;
                stack.push((child, idx));
            }
        }
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("ground truth serializes");
        s.push('\n');
        s
    }
}

/// Draws a full tree of the given truncation: every topic from a symmetric
/// `Dirichlet(eta)`, every node's child weights from `Beta(1, alpha)` sticks.
pub fn sample_global_tree(hyper: &Hyperparameters, vocab_size: usize, seed: u64) -> GroundTruth {
    let mut rng = rng_for(seed, &[0x7ee]);
    let eta = vec![hyper.eta; vocab_size];
    let mut nodes = vec![TruthNode {
        id: NodeId::root(),
        topic: sample_dirichlet(&mut rng, &eta),
        child_weights: Vec::new(),
        parent: None,
        children: Vec::new(),
    }];
    let mut i = 0;
    while i < nodes.len() {
        let k = hyper.max_children(nodes[i].id.depth());
        let mut remaining = 1.0;
        let mut weights = Vec::with_capacity(k + 1);
        for pos in 0..k {
            let v = sample_beta(&mut rng, 1.0, hyper.alpha);
            weights.push(remaining * v);
            remaining *= 1.0 - v;
            let child = TruthNode {
                id: nodes[i].id.child(pos),
                topic: sample_dirichlet(&mut rng, &eta),
                child_weights: Vec::new(),
                parent: Some(i),
                children: Vec::new(),
            };
            let idx = nodes.len();
            nodes.push(child);
            nodes[i].children.push(idx);
        }
        weights.push(remaining);
        nodes[i].child_weights = weights;
        i += 1;
    }
    GroundTruth {
        vocab_size,
        hyper: hyper.clone(),
        nodes,
        doc_assignments: Vec::new(),
    }
}

/// Draws one document: per-node stop probabilities from
/// `Beta(gamma1, gamma2)`, per-node child weights from a Dirichlet scaled by
/// `beta` around the global weights, then for every word a root-to-node
/// walk followed by a draw from that node's topic.
pub fn sample_document<R: Rng + ?Sized>(truth: &GroundTruth, hyper: &Hyperparameters, n_words: usize, rng: &mut R) -> SampledDoc {
    let n = truth.nodes.len();
    let mut stop_probs = vec![1.0; n];
    let mut branch_weights = vec![Vec::new(); n];
    for (i, node) in truth.nodes.iter().enumerate() {
        let k = node.children.len();
        if k == 0 {
            continue;
        }
        stop_probs[i] = sample_beta(rng, hyper.gamma1, hyper.gamma2);
        let kept: f64 = node.child_weights[..k].iter().sum();
        let conc: Vec<f64> = node.child_weights[..k]
            .iter()
            .map(|w| (hyper.beta * w / kept).max(1e-12))
            .collect();
        branch_weights[i] = sample_dirichlet(rng, &conc);
    }

    let mut usage = vec![0.0; n];
    let mut reach = vec![0.0; n];
    reach[0] = 1.0;
    for i in 0..n {
        usage[i] = reach[i] * stop_probs[i];
        for (pos, &c) in truth.nodes[i].children.iter().enumerate() {
            reach[c] = reach[i] * (1.0 - stop_probs[i]) * branch_weights[i][pos];
        }
    }

    let samplers: Vec<Option<WeightedIndex<f64>>> = truth
        .nodes
        .iter()
        .map(|node| WeightedIndex::new(&node.topic).ok())
        .collect();
    let mut words = Vec::with_capacity(n_words);
    let mut word_nodes = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        let mut at = 0;
        loop {
            let kids = &truth.nodes[at].children;
            if kids.is_empty() || rng.random::<f64>() < stop_probs[at] {
                break;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = kids[kids.len() - 1];
            for (pos, &c) in kids.iter().enumerate() {
                acc += branch_weights[at][pos];
                if u < acc {
                    next = c;
                    break;
                }
            }
            at = next;
        }
        let w = match &samplers[at] {
            Some(s) => s.sample(rng),
            None => rng.random_range(0..truth.vocab_size),
        };
        words.push(w);
        word_nodes.push(at);
    }
    SampledDoc {
        words,
        word_nodes,
        stop_probs,
        branch_weights,
        usage,
    }
}

/// Draws `n_docs` documents of `n_words` words each. Document `d` uses its
/// own random stream derived from `(seed, d)`. Words that never occur are
/// dropped from the vocabulary and the ground truth is projected to match.
pub fn sample_corpus(truth: &GroundTruth, hyper: &Hyperparameters, n_docs: usize, n_words: usize, seed: u64) -> Result<SynthCorpus, ModelError> {
    if n_docs == 0 || n_words == 0 {
        return Err(ModelError::InvalidHyper("a synthetic corpus needs at least one document and one word".into()));
    }
    let mut raw_docs = Vec::with_capacity(n_docs);
    let mut usage = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let mut rng = rng_for(seed, &[0xd0c, d as u64]);
        let doc = sample_document(truth, hyper, n_words, &mut rng);
        raw_docs.push(doc.words);
        usage.push(doc.usage);
    }

    let v = truth.vocab_size;
    let mut total = vec![0u64; v];
    let mut df = vec![0u64; v];
    let vectors: Vec<TermVector> = raw_docs.iter().map(|w| TermVector::from_indices(w.iter().copied())).collect();
    for tv in &vectors {
        for &(w, c) in tv.entries() {
            total[w] += u64::from(c);
            df[w] += 1;
        }
    }
    let keep: Vec<usize> = (0..v).filter(|&w| total[w] > 0).collect();
    let mut remap = vec![usize::MAX; v];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let vocab = Vocabulary::from_columns(
        keep.iter().map(|w| format!("w{w}")).collect(),
        keep.iter().map(|&w| df[w]).collect(),
        keep.iter().map(|&w| total[w]).collect(),
    )
    .expect("synthetic tokens are unique");
    let docs = vectors
        .into_iter()
        .enumerate()
        .map(|(d, tv)| CorpusDoc {
            id: format!("d{d}"),
            terms: TermVector::from_counts(tv.entries().iter().map(|&(w, c)| (remap[w], c))),
        })
        .collect();

    let mut projected = truth.restrict_vocab(&keep);
    projected.doc_assignments = usage;
    Ok(SynthCorpus {
        corpus: Corpus { vocab, docs },
        truth: projected,
        original_index: keep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::total_variation;

    fn hyper(truncation: Vec<usize>) -> Hyperparameters {
        Hyperparameters { eta: 0.05, alpha: 5.0, beta: 0.5, gamma1: 1.0, gamma2: 1.0, truncation }
    }

    #[test]
    fn tree_shape_and_normalization() {
        let t = sample_global_tree(&hyper(vec![3, 3, 3]), 50, 13);
        assert_eq!(t.nodes.len(), 1 + 3 + 9 + 27);
        for n in &t.nodes {
            assert!((n.topic.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((n.child_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(t, sample_global_tree(&hyper(vec![3, 3, 3]), 50, 13));
        assert_ne!(t, sample_global_tree(&hyper(vec![3, 3, 3]), 50, 14));
    }

    #[test]
    fn huge_eta_gives_uniform_topics() {
        let h = Hyperparameters { eta: 1e6, ..hyper(vec![2, 2]) };
        let t = sample_global_tree(&h, 100, 1);
        for n in &t.nodes {
            assert!(total_variation(&n.topic, &[0.01; 100]) < 1e-3);
        }
    }

    #[test]
    fn tiny_eta_peak_frequency_matches_beta_marginal() {
        // At most one coordinate can exceed 1/2, so P(max >= 1/2) = V * P(Beta(eta, (V-1) eta) >= 1/2).
        let (eta, v) = (0.01, 100usize);
        let exact = v as f64 * (1.0 - statrs::function::beta::beta_reg(eta, (v as f64 - 1.0) * eta, 0.5));
        let h = Hyperparameters { eta, ..hyper(vec![3, 3]) };
        let (mut peaked, mut total) = (0usize, 0usize);
        for seed in 0..200 {
            for n in &sample_global_tree(&h, v, seed).nodes {
                total += 1;
                if n.topic.iter().cloned().fold(0.0, f64::max) >= 0.5 {
                    peaked += 1;
                }
            }
        }
        let freq = peaked as f64 / total as f64;
        let sd = (exact * (1.0 - exact) / total as f64).sqrt();
        assert!((freq - exact).abs() < 4.0 * sd, "{freq} vs {exact}");
    }

    #[test]
    fn stay_probability_extremes() {
        let mut rng = rng_for(2, &[]);
        let t = sample_global_tree(&hyper(vec![2, 2, 2]), 20, 3);
        let sticky = Hyperparameters { gamma1: 1e6, gamma2: 1.0, ..t.hyper.clone() };
        let doc = sample_document(&t, &sticky, 500, &mut rng);
        assert!(doc.word_nodes.iter().filter(|&&k| k == 0).count() >= 495);
        let slippery = Hyperparameters { gamma1: 1.0, gamma2: 1e6, ..t.hyper.clone() };
        let doc = sample_document(&t, &slippery, 500, &mut rng);
        assert!(doc.word_nodes.iter().filter(|&&k| t.depth(k) == 3).count() >= 495);
    }

    #[test]
    fn chain_tree_level_occupancy_telescopes() {
        let h = Hyperparameters { truncation: vec![1, 1, 1], ..hyper(vec![]) };
        let t = sample_global_tree(&h, 10, 4);
        for seed in 0..5 {
            let mut rng = rng_for(seed, &[]);
            let doc = sample_document(&t, &h, 10_000, &mut rng);
            let mut remaining = 1.0;
            for (depth, &node) in [0usize, 1, 2, 3].iter().enumerate() {
                let u = if depth == 3 { 1.0 } else { doc.stop_probs[node] };
                let expected = remaining * u;
                remaining *= 1.0 - u;
                let observed = doc.word_nodes.iter().filter(|&&k| k == node).count() as f64 / 10_000.0;
                assert!((observed - expected).abs() < 0.02, "depth {depth}: {observed} vs {expected}");
            }
        }
    }

    #[test]
    fn corpus_has_exact_lengths_and_is_reproducible() {
        let t = sample_global_tree(&hyper(vec![3, 3]), 40, 9);
        let a = sample_corpus(&t, &t.hyper, 300, 50, 5).unwrap();
        assert_eq!(a.corpus.len(), 300);
        assert!(a.corpus.docs.iter().all(|d| d.terms.length() == 50));
        assert!(a.truth.doc_assignments.iter().all(|u| (u.iter().sum::<f64>() - 1.0).abs() < 1e-9));
        assert!(a.corpus.docs.iter().all(|d| d.terms.max_index().unwrap() < a.corpus.vocab.len()));
        let b = sample_corpus(&t, &t.hyper, 300, 50, 5).unwrap();
        assert_eq!(a.corpus.to_text(), b.corpus.to_text());
        assert!(sample_corpus(&t, &t.hyper, 0, 50, 5).is_err());
    }

    #[test]
    fn single_node_marginal_converges() {
        let h = Hyperparameters { truncation: vec![], ..hyper(vec![]) };
        let t = sample_global_tree(&Hyperparameters { eta: 1.0, ..h.clone() }, 30, 8);
        let s = sample_corpus(&t, &h, 400, 100, 1).unwrap();
        let total_words = 40_000.0;
        let mut freq = vec![0.0; s.corpus.vocab.len()];
        for d in &s.corpus.docs {
            for &(w, c) in d.terms.entries() {
                freq[w] += f64::from(c) / total_words;
            }
        }
        assert!(total_variation(&freq, &s.truth.nodes[0].topic) <= 3.0 / f64::sqrt(total_words));
    }

    #[test]
    fn truth_converts_to_matching_topic_tree() {
        let t = sample_global_tree(&hyper(vec![2, 2]), 15, 21);
        let tree = t.to_topic_tree(1e6).unwrap();
        assert_eq!(tree.len(), t.nodes.len());
        for (i, n) in t.nodes.iter().enumerate() {
            let idx = tree.find(&n.id).unwrap();
            let got = crate::model::expected_topic(tree.node(idx));
            assert!(total_variation(&got, &n.topic) < 1e-6, "node {i}");
            let w = crate::model::expected_stick_weights(&tree.node(idx).sticks);
            for (a, b) in w.iter().zip(&n.child_weights) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
