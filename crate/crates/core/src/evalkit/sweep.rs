use rand::seq::SliceRandom;

use crate::ingest::{Corpus, TermVector};
use crate::math::mean_and_stddev;
use crate::model::{Hyperparameters, InferenceConfig, TopicTree, TreeView};
use crate::rng::rng_for;
use crate::training::{train, KMeansTreeSpec, TrainSchedule};

use super::EvalError;

/// A node counts as a topic of a document when its weight reaches this.
pub const ACTIVATION_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepParam {
    Beta,
    /// Sweeps `gamma1` with `gamma2 = sum - gamma1`.
    Gamma1 { sum: f64 },
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Gamma1 { .. } => "gamma1",
        }
    }

    pub fn apply(&self, base: &Hyperparameters, value: f64) -> Result<Hyperparameters, EvalError> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(EvalError::Config(format!("grid value {value} must be positive")));
        }
        let mut h = base.clone();
        match *self {
            SweepParam::Beta => h.beta = value,
            SweepParam::Gamma1 { sum } => {
                if value >= sum {
                    return Err(EvalError::Config(format!("gamma1 = {value} leaves no room for gamma2 under gamma1 + gamma2 = {sum}")));
                }
                h.gamma1 = value;
                h.gamma2 = sum - value;
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPoint {
    pub param: &'static str,
    pub value: f64,
    pub hyper: Hyperparameters,
    /// Mean active topics per document for levels 1 (root) and below.
    pub mean_topics_per_doc: Vec<f64>,
    pub stddev_topics_per_doc: Vec<f64>,
    pub docs_evaluated: usize,
}

/// Per level (root = level 1), mean and sample stddev over documents of
/// the number of nodes whose weight reaches [`ACTIVATION_THRESHOLD`].
pub fn topics_per_level(tree: &TopicTree, docs: &[TermVector], config: &InferenceConfig) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let levels = tree.hyper().max_depth() + 1;
    let view = TreeView::new(tree);
    let mut per_level: Vec<Vec<f64>> = vec![Vec::with_capacity(docs.len()); levels];
    for doc in docs {
        let post = view.infer(doc, config)?;
        let mut counts = vec![0.0; levels];
        for (&k, &w) in post.nodes.iter().zip(&post.node_weights) {
            if w >= ACTIVATION_THRESHOLD {
                counts[tree.node(k).depth()] += 1.0;
            }
        }
        for (l, c) in counts.into_iter().enumerate() {
            per_level[l].push(c);
        }
    }
    Ok(per_level.iter().map(|v| mean_and_stddev(v)).unzip())
}

/// Trains one model per grid value on the same seeded subset of at most
/// `subset_size` documents and reports active topics per level.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    corpus: &Corpus,
    base: &Hyperparameters,
    param: SweepParam,
    grid: &[f64],
    spec: &KMeansTreeSpec,
    schedule: &TrainSchedule,
    subset_size: Option<usize>,
    seed: u64,
) -> Result<Vec<SensitivityPoint>, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::Empty("empty corpus".into()));
    }
    let hypers = grid.iter().map(|&v| param.apply(base, v)).collect::<Result<Vec<_>, _>>()?;
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut rng_for(seed, &[0x5e]));
    idx.truncate(subset_size.unwrap_or(corpus.len()).clamp(1, corpus.len()));
    idx.sort_unstable();
    let subset = Corpus {
        vocab: corpus.vocab.clone(),
        docs: idx.iter().map(|&i| corpus.docs[i].clone()).collect(),
    };
    let docs = subset.term_vectors();

    let mut points = Vec::with_capacity(grid.len());
    for (&value, hyper) in grid.iter().zip(hypers) {
        let trained = train(&subset, &hyper, spec, schedule, seed)?;
        let (mean, sd) = topics_per_level(&trained.tree, &docs, &schedule.local)?;
        log::info!("{} = {value}: topics per level {mean:?}", param.name());
        points.push(SensitivityPoint {
            param: param.name(),
            value,
            hyper,
            mean_topics_per_doc: mean,
            stddev_topics_per_doc: sd,
            docs_evaluated: docs.len(),
        });
    }
    Ok(points)
}

/// CSV with columns `param,value,beta,gamma1,gamma2,docs` followed by
/// `level{l}_mean,level{l}_stddev` for every level.
pub fn sweep_csv(points: &[SensitivityPoint]) -> String {
    let levels = points.iter().map(|p| p.mean_topics_per_doc.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["param", "value", "beta", "gamma1", "gamma2", "docs"].map(String::from).to_vec();
    for l in 1..=levels {
        header.push(format!("level{l}_mean"));
        header.push(format!("level{l}_stddev"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for p in points {
        let mut row = vec![
            p.param.to_string(),
            p.value.to_string(),
            p.hyper.beta.to_string(),
            p.hyper.gamma1.to_string(),
            p.hyper.gamma2.to_string(),
            p.docs_evaluated.to_string(),
        ];
        for l in 0..levels {
            row.push(p.mean_topics_per_doc.get(l).copied().unwrap_or(0.0).to_string());
            row.push(p.stddev_topics_per_doc.get(l).copied().unwrap_or(0.0).to_string());
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}
