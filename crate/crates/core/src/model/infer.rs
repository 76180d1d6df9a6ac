use std::collections::BTreeMap;

use crate::ingest::TermVector;
use crate::math::{beta_expected_logs, digamma, log_sum_exp, neg_kl_beta, neg_kl_dirichlet};

use super::{ModelError, NodeId, TopicTree, TreeView};

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    /// Upper bound on coordinate-ascent sweeps.
    pub max_iters: usize,
    /// Stop once the relative ELBO change of a sweep falls below this.
    pub rel_tol: f64,
    /// Children kept per selected node at each depth when choosing the
    /// document's subtree. `None` lets every document use the whole tree.
    pub select_width: Option<Vec<usize>>,
    /// Keep per-word responsibilities in the posterior (training needs them).
    pub keep_responsibilities: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            rel_tol: 1e-4,
            select_width: Some(vec![4, 3, 2]),
            keep_responsibilities: false,
        }
    }
}

impl InferenceConfig {
    pub fn with_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    pub fn full_tree(mut self) -> Self {
        self.select_width = None;
        self
    }
}

/// Variational posterior of one document against a frozen tree.
///
/// Only nodes of the document's selected subtree appear; all vectors are
/// parallel to `nodes`, which lists parents before children.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPosterior {
    /// Arena indices of the selected nodes.
    pub nodes: Vec<usize>,
    /// Posterior expected probability that a fresh word of this document is
    /// drawn from each node. Sums to one.
    pub node_weights: Vec<f64>,
    /// `Beta(a, b)` over the stop probability of each node that has selected
    /// children; `None` where the document cannot descend further.
    pub level_switch: Vec<Option<(f64, f64)>>,
    /// Dirichlet parameters over each node's selected children.
    pub branch_params: Vec<Vec<f64>>,
    /// Expected number of the document's words assigned to each node.
    pub expected_counts: Vec<f64>,
    /// `(word index, responsibility row over nodes)` per distinct word.
    pub responsibilities: Option<Vec<(usize, Vec<f64>)>>,
    /// Document ELBO after every sweep.
    pub elbo_trace: Vec<f64>,
}

impl DocPosterior {
    pub fn elbo(&self) -> f64 {
        *self.elbo_trace.last().expect("at least one sweep")
    }

    pub fn node_weight_map(&self, tree: &TopicTree) -> BTreeMap<NodeId, f64> {
        self.nodes
            .iter()
            .zip(&self.node_weights)
            .map(|(&k, &w)| (tree.node(k).id.clone(), w))
            .collect()
    }
}

/// The document's selected subtree in local indices.
struct LocalTree {
    nodes: Vec<usize>,
    parent: Vec<Option<usize>>,
    /// Position of each node among its parent's selected children.
    slot: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// Document-level Dirichlet prior over each node's selected children.
    prior: Vec<Vec<f64>>,
}

impl LocalTree {
    fn is_internal(&self, i: usize) -> bool {
        !self.children[i].is_empty()
    }
}

fn select_subtree(view: &TreeView<'_>, doc: &TermVector, widths: Option<&[usize]>) -> LocalTree {
    let tree = view.tree;
    let n = tree.len();
    let chosen_children: Vec<Vec<usize>> = match widths {
        None => tree.nodes().iter().map(|node| (0..node.children().len()).collect()).collect(),
        Some(widths) => {
            // Best document log-likelihood anywhere in each node's subtree.
            let mut best = vec![0.0; n];
            for &(w, c) in doc.entries() {
                let row = view.elog_row(w);
                for k in 0..n {
                    best[k] += f64::from(c) * row[k];
                }
            }
            for k in (1..n).rev() {
                let p = tree.node(k).parent().unwrap();
                if best[k] > best[p] {
                    best[p] = best[k];
                }
            }
            tree.nodes()
                .iter()
                .map(|node| {
                    let width = widths.get(node.depth()).copied().unwrap_or(usize::MAX);
                    let mut slots: Vec<usize> = (0..node.children().len()).collect();
                    if slots.len() > width {
                        slots.sort_by(|&x, &y| {
                            best[node.children()[y]].total_cmp(&best[node.children()[x]]).then(x.cmp(&y))
                        });
                        slots.truncate(width);
                        slots.sort_unstable();
                    }
                    slots
                })
                .collect()
        }
    };

    let mut local = LocalTree {
        nodes: vec![0],
        parent: vec![None],
        slot: vec![0],
        children: vec![Vec::new()],
        prior: Vec::new(),
    };
    let mut i = 0;
    while i < local.nodes.len() {
        let k = local.nodes[i];
        for (s, &child_slot) in chosen_children[k].iter().enumerate() {
            let li = local.nodes.len();
            local.nodes.push(tree.node(k).children()[child_slot]);
            local.parent.push(Some(i));
            local.slot.push(s);
            local.children.push(Vec::new());
            local.children[i].push(li);
        }
        i += 1;
    }
    local.prior = local
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let kids = &chosen_children[k];
            debug_assert_eq!(kids.len(), local.children[i].len());
            kids.iter().map(|&slot| view.child_prior[k][slot]).collect()
        })
        .collect();
    local
}

/// Expected log prior probability of landing on each local node.
fn log_path_prior(local: &LocalTree, stay: &[(f64, f64)], branch: &[Vec<f64>], use_means: bool) -> Vec<f64> {
    let a = local.nodes.len();
    let mut elog_stay = vec![0.0; a];
    let mut elog_move = vec![0.0; a];
    let mut elog_branch: Vec<Vec<f64>> = vec![Vec::new(); a];
    for i in 0..a {
        if !local.is_internal(i) {
            continue;
        }
        let (g1, g2) = stay[i];
        let nu = &branch[i];
        let total: f64 = nu.iter().sum();
        if use_means {
            elog_stay[i] = (g1 / (g1 + g2)).ln();
            elog_move[i] = (g2 / (g1 + g2)).ln();
            elog_branch[i] = nu.iter().map(|x| (x / total).ln()).collect();
        } else {
            let (s, m) = beta_expected_logs(g1, g2);
            elog_stay[i] = s;
            elog_move[i] = m;
            let dg_total = digamma(total);
            elog_branch[i] = nu.iter().map(|&x| digamma(x) - dg_total).collect();
        }
    }
    let mut base = vec![0.0; a];
    let mut out = vec![0.0; a];
    for i in 0..a {
        if let Some(p) = local.parent[i] {
            base[i] = base[p] + elog_move[p] + elog_branch[p][local.slot[i]];
        }
        out[i] = base[i] + if local.is_internal(i) { elog_stay[i] } else { 0.0 };
    }
    out
}

/// Coordinate-ascent posterior of `doc` under a frozen tree.
///
/// A subtree is chosen first (see [`InferenceConfig::select_width`]); then
/// each sweep updates the word responsibilities followed by the stop and
/// branch parameters in closed form, so the document ELBO never decreases
/// from one sweep to the next.
pub fn infer_document(tree: &TopicTree, doc: &TermVector, config: &InferenceConfig) -> Result<DocPosterior, ModelError> {
    tree.view().infer(doc, config)
}

impl TreeView<'_> {
    pub fn infer(&self, doc: &TermVector, config: &InferenceConfig) -> Result<DocPosterior, ModelError> {
        if doc.is_empty() {
            return Err(ModelError::EmptyDocument);
        }
        if let Some(max) = doc.max_index() {
            if max >= self.tree.vocab_size() {
                return Err(ModelError::WordOutOfRange { index: max, vocab_size: self.tree.vocab_size() });
            }
        }
        let hyper = self.tree.hyper();
        let local = select_subtree(self, doc, config.select_width.as_deref());
        let a = local.nodes.len();
        let words = doc.entries();
        let m = words.len();

        let mut elog = vec![0.0; m * a];
        for (r, &(w, _)) in words.iter().enumerate() {
            let row = self.elog_row(w);
            for (i, &k) in local.nodes.iter().enumerate() {
                elog[r * a + i] = row[k];
            }
        }

        let mut stay: Vec<(f64, f64)> = vec![(hyper.gamma1, hyper.gamma2); a];
        let mut branch: Vec<Vec<f64>> = local.prior.clone();
        let mut phi = vec![0.0; m * a];
        let mut counts = vec![0.0; a];
        let mut subtree = vec![0.0; a];
        let mut elbo_trace = Vec::with_capacity(config.max_iters.max(1));
        let mut scratch = vec![0.0; a];

        for sweep in 0..config.max_iters.max(1) {
            let prior = log_path_prior(&local, &stay, &branch, sweep == 0);

            counts.iter_mut().for_each(|c| *c = 0.0);
            for (r, &(_, n)) in words.iter().enumerate() {
                let row = &elog[r * a..(r + 1) * a];
                for i in 0..a {
                    scratch[i] = prior[i] + row[i];
                }
                let norm = log_sum_exp(&scratch);
                let out = &mut phi[r * a..(r + 1) * a];
                for i in 0..a {
                    out[i] = (scratch[i] - norm).exp();
                    counts[i] += f64::from(n) * out[i];
                }
            }

            subtree.copy_from_slice(&counts);
            for i in (1..a).rev() {
                let p = local.parent[i].unwrap();
                subtree[p] += subtree[i];
            }
            for i in 0..a {
                if local.is_internal(i) {
                    stay[i] = (hyper.gamma1 + counts[i], hyper.gamma2 + (subtree[i] - counts[i]).max(0.0));
                    for (s, &c) in local.children[i].iter().enumerate() {
                        branch[i][s] = local.prior[i][s] + subtree[c];
                    }
                }
            }

            let elbo = document_elbo(&local, words, &elog, &phi, &stay, &branch, hyper.gamma1, hyper.gamma2);
            let converged = elbo_trace
                .last()
                .is_some_and(|&prev: &f64| ((elbo - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < config.rel_tol);
            elbo_trace.push(elbo);
            if converged {
                break;
            }
        }

        let mut node_weights = vec![0.0; a];
        let mut reach = vec![0.0; a];
        reach[0] = 1.0;
        for i in 0..a {
            if local.is_internal(i) {
                let (g1, g2) = stay[i];
                let p_stay = g1 / (g1 + g2);
                node_weights[i] = reach[i] * p_stay;
                let total: f64 = branch[i].iter().sum();
                for (s, &c) in local.children[i].iter().enumerate() {
                    reach[c] = reach[i] * (1.0 - p_stay) * branch[i][s] / total;
                }
            } else {
                node_weights[i] = reach[i];
            }
        }

        let level_switch = (0..a).map(|i| local.is_internal(i).then_some(stay[i])).collect();
        let responsibilities = config.keep_responsibilities.then(|| {
            words
                .iter()
                .enumerate()
                .map(|(r, &(w, _))| (w, phi[r * a..(r + 1) * a].to_vec()))
                .collect()
        });

        Ok(DocPosterior {
            nodes: local.nodes,
            node_weights,
            level_switch,
            branch_params: branch,
            expected_counts: counts,
            responsibilities,
            elbo_trace,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn document_elbo(
    local: &LocalTree,
    words: &[(usize, u32)],
    elog: &[f64],
    phi: &[f64],
    stay: &[(f64, f64)],
    branch: &[Vec<f64>],
    gamma1: f64,
    gamma2: f64,
) -> f64 {
    let a = local.nodes.len();
    let prior = log_path_prior(local, stay, branch, false);
    let mut total = 0.0;
    for (r, &(_, n)) in words.iter().enumerate() {
        let mut word_term = 0.0;
        for i in 0..a {
            let p = phi[r * a + i];
            if p > 0.0 {
                word_term += p * (prior[i] + elog[r * a + i] - p.ln());
            }
        }
        total += f64::from(n) * word_term;
    }
    for i in 0..a {
        if local.is_internal(i) {
            let (g1, g2) = stay[i];
            total += neg_kl_beta(gamma1, gamma2, g1, g2);
            total += neg_kl_dirichlet(&local.prior[i], &branch[i]);
        }
    }
    total
}
