use log::{debug, info};
use rand::seq::SliceRandom;

use crate::ingest::{Corpus, TermVector};
use crate::model::{DocPosterior, Hyperparameters, InferenceConfig, Stick, TopicTree, TreeView};
use crate::rng::rng_for;

use super::init::build_init_tree_scaled;
use super::seed::{grow_covering, SEED_SUBSET_FLOOR};
use super::{KMeansTreeSpec, TrainError, TrainSchedule};

/// Below this many documents the validation slice is the whole corpus.
const SMALL_CORPUS: usize = 20;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressRecord {
    pub epoch: usize,
    pub batch: usize,
    /// Global update counter `t`.
    pub step: usize,
    pub rho: f64,
    /// Mean document ELBO per word over the batch, before the update.
    pub batch_elbo: f64,
    /// Mean document ELBO per word over the validation slice, after it.
    pub validation_elbo: f64,
}

impl ProgressRecord {
    pub const TSV_HEADER: &'static str = "epoch\tbatch\tstep\trho\tbatch_elbo\tvalidation_elbo";

    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}", self.epoch, self.batch, self.step, self.rho, self.batch_elbo, self.validation_elbo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub progress: Vec<ProgressRecord>,
    pub converged: bool,
    pub epochs: usize,
    pub seed_docs: usize,
    pub train_docs: usize,
    pub validation_docs: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub tree: TopicTree,
    pub report: TrainReport,
}

/// `rho_t = (t + tau)^(-kappa)`, clamped into `(0, 1]`.
pub fn step_size(t: usize, tau: f64, kappa: f64) -> f64 {
    (t as f64 + tau).max(1.0).powf(-kappa)
}

pub fn train(corpus: &Corpus, hyper: &Hyperparameters, spec: &KMeansTreeSpec, schedule: &TrainSchedule, seed: u64) -> Result<Trained, TrainError> {
    train_with_progress(corpus, hyper, spec, schedule, seed, &mut |_| {})
}

/// Fits a tree to `corpus`, reporting every mini-batch to `on_progress`.
pub fn train_with_progress(
    corpus: &Corpus,
    hyper: &Hyperparameters,
    spec: &KMeansTreeSpec,
    schedule: &TrainSchedule,
    seed: u64,
    on_progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<Trained, TrainError> {
    hyper.validate()?;
    spec.validate(hyper)?;
    schedule.validate()?;
    let v = corpus.vocab.len();
    let docs: Vec<&TermVector> = corpus.docs.iter().map(|d| &d.terms).collect();
    if docs.is_empty() {
        return Err(TrainError::Config("cannot train on an empty corpus".into()));
    }
    if let Some((i, d)) = docs.iter().enumerate().find(|(_, d)| d.is_empty() || d.max_index().is_some_and(|m| m >= v)) {
        return Err(TrainError::Config(format!("document {i} is empty or uses words outside the vocabulary ({} distinct)", d.distinct())));
    }

    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng_for(seed, &[0x7a1]));
    let (train_idx, valid_idx) = if docs.len() < SMALL_CORPUS {
        (order.clone(), order)
    } else {
        let n_valid = ((docs.len() as f64 * schedule.validation_fraction).round() as usize).max(1);
        let (valid, train) = order.split_at(n_valid);
        (train.to_vec(), valid.to_vec())
    };

    let train_docs: Vec<TermVector> = train_idx.iter().map(|&i| docs[i].clone()).collect();
    let mut present = vec![false; v];
    for d in &train_docs {
        for &(w, _) in d.entries() {
            present[w] = true;
        }
    }
    let (seed_subset, _) = grow_covering(&train_docs, &present, seed, SEED_SUBSET_FLOOR);
    let seed_docs: Vec<TermVector> = seed_subset.iter().map(|&i| train_docs[i].clone()).collect();
    let scale = train_docs.len() as f64 / seed_docs.len() as f64;
    let mut tree = build_init_tree_scaled(&seed_docs, spec, hyper, v, scale)?;
    info!(
        "initial tree: {} nodes from {} seed documents; {} training, {} validation documents",
        tree.len(),
        seed_docs.len(),
        train_docs.len(),
        valid_idx.len()
    );

    let local = InferenceConfig { keep_responsibilities: true, ..schedule.local.clone() };
    let score_cfg = InferenceConfig { keep_responsibilities: false, ..schedule.local.clone() };
    let mut progress = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut epochs = 0;
    let mut t = 0;

    'epochs: for epoch in 0..schedule.max_epochs {
        epochs = epoch + 1;
        let mut batch_order: Vec<usize> = (0..train_docs.len()).collect();
        batch_order.shuffle(&mut rng_for(seed, &[0xe90c, epoch as u64]));
        for (b, batch) in batch_order.chunks(schedule.batch_size).enumerate() {
            let rho = step_size(t, schedule.tau, schedule.kappa);
            let (stats, batch_elbo) = collect_batch(&tree, &train_docs, batch, &local)?;
            let last_good = tree.clone();
            apply_update(&mut tree, &stats, train_docs.len() as f64 / batch.len() as f64, rho);
            if !tree_is_finite(&tree) || !batch_elbo.is_finite() {
                return Err(TrainError::Divergence { epoch, batch: b, last_good: Box::new(last_good) });
            }
            let validation_elbo = mean_elbo(&tree, valid_idx.iter().map(|&i| docs[i]), &score_cfg)?;
            if !validation_elbo.is_finite() {
                return Err(TrainError::Divergence { epoch, batch: b, last_good: Box::new(last_good) });
            }
            let record = ProgressRecord { epoch, batch: b, step: t, rho, batch_elbo, validation_elbo };
            debug!("{}", record.to_tsv());
            on_progress(&record);
            progress.push(record);
            history.push(validation_elbo);
            t += 1;
            if has_converged(&history, schedule.convergence_window, schedule.convergence_tol) {
                converged = true;
                break 'epochs;
            }
        }
    }

    let usage = mean_usage(&tree, &train_docs, &score_cfg)?;
    tree.set_usage(usage)?;
    Ok(Trained {
        tree,
        report: TrainReport {
            progress,
            converged,
            epochs,
            seed_docs: seed_docs.len(),
            train_docs: train_docs.len(),
            validation_docs: valid_idx.len(),
        },
    })
}

/// Sufficient statistics of one mini-batch.
struct BatchStats {
    /// Expected word counts per node; `None` for nodes no document touched.
    words: Vec<Option<Vec<f64>>>,
    /// Per node and child, summed fraction of document words below the child.
    occupancy: Vec<Vec<f64>>,
}

fn collect_batch(tree: &TopicTree, docs: &[TermVector], batch: &[usize], cfg: &InferenceConfig) -> Result<(BatchStats, f64), TrainError> {
    let view = TreeView::new(tree);
    let mut stats = BatchStats {
        words: vec![None; tree.len()],
        occupancy: tree.nodes().iter().map(|n| vec![0.0; n.children().len()]).collect(),
    };
    let (mut elbo, mut words) = (0.0, 0.0);
    for &d in batch {
        let doc = &docs[d];
        let post = view.infer(doc, cfg)?;
        elbo += post.elbo();
        words += doc.length() as f64;
        accumulate(tree, doc, &post, &mut stats);
    }
    Ok((stats, elbo / words))
}

fn accumulate(tree: &TopicTree, doc: &TermVector, post: &DocPosterior, stats: &mut BatchStats) {
    let v = tree.vocab_size();
    let rows = post.responsibilities.as_ref().expect("training keeps responsibilities");
    for (w, row) in rows {
        let count = f64::from(doc.count(*w));
        for (li, &r) in row.iter().enumerate() {
            if r > 0.0 {
                stats.words[post.nodes[li]].get_or_insert_with(|| vec![0.0; v])[*w] += count * r;
            }
        }
    }

    let mut below = post.expected_counts.clone();
    for li in (1..post.nodes.len()).rev() {
        let node = tree.node(post.nodes[li]);
        let parent = node.parent().expect("non-root node");
        let lp = post.nodes[..li].iter().rposition(|&k| k == parent).expect("parents precede children");
        below[lp] += below[li];
    }
    let total = doc.length() as f64;
    for li in 1..post.nodes.len() {
        let node = tree.node(post.nodes[li]);
        let pos = *node.id.0.last().expect("non-root node");
        stats.occupancy[node.parent().expect("non-root node")][pos] += below[li] / total;
    }
}

fn apply_update(tree: &mut TopicTree, stats: &BatchStats, scale: f64, rho: f64) {
    let Hyperparameters { eta, alpha, .. } = *tree.hyper();
    for k in 0..tree.len() {
        let node = tree.node_mut(k);
        match &stats.words[k] {
            Some(counts) => {
                for (l, &c) in node.lambda.iter_mut().zip(counts) {
                    *l = (1.0 - rho) * *l + rho * (eta + scale * c);
                }
            }
            None => {
                for l in &mut node.lambda {
                    *l = (1.0 - rho) * *l + rho * eta;
                }
            }
        }
        let occ = &stats.occupancy[k];
        let mut after: f64 = occ.iter().sum();
        for (stick, &m) in node.sticks.iter_mut().zip(occ) {
            after -= m;
            let target = Stick::new(1.0 + scale * m, alpha + scale * after.max(0.0));
            stick.a = (1.0 - rho) * stick.a + rho * target.a;
            stick.b = (1.0 - rho) * stick.b + rho * target.b;
        }
    }
}

fn tree_is_finite(tree: &TopicTree) -> bool {
    tree.nodes().iter().all(|n| {
        n.lambda.iter().all(|l| l.is_finite() && *l > 0.0) && n.sticks.iter().all(|s| s.a.is_finite() && s.b.is_finite() && s.a > 0.0 && s.b > 0.0)
    })
}

fn mean_elbo<'a>(tree: &TopicTree, docs: impl Iterator<Item = &'a TermVector>, cfg: &InferenceConfig) -> Result<f64, TrainError> {
    let view = TreeView::new(tree);
    let (mut elbo, mut words) = (0.0, 0.0);
    for doc in docs {
        elbo += view.infer(doc, cfg)?.elbo();
        words += doc.length() as f64;
    }
    Ok(elbo / words)
}

fn mean_usage(tree: &TopicTree, docs: &[TermVector], cfg: &InferenceConfig) -> Result<Vec<f64>, TrainError> {
    let view = TreeView::new(tree);
    let mut usage = vec![0.0; tree.len()];
    for doc in docs {
        let post = view.infer(doc, cfg)?;
        for (&k, &w) in post.nodes.iter().zip(&post.node_weights) {
            usage[k] += w;
        }
    }
    let n = docs.len() as f64;
    Ok(usage.into_iter().map(|u| u / n).collect())
}

/// Compares the mean of the last `window` values with the mean of the
/// `window` before them.
fn has_converged(history: &[f64], window: usize, tol: f64) -> bool {
    if history.len() < 2 * window {
        return false;
    }
    let n = history.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let current = mean(&history[n - window..]);
    let previous = mean(&history[n - 2 * window..n - window]);
    (current - previous).abs() <= tol * previous.abs()
}
