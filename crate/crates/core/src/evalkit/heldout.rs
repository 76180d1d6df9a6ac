use log::warn;

use crate::ingest::TermVector;
use crate::math::LOG_PROB_FLOOR;
use crate::model::{InferenceConfig, TopicTree, TreeView};
use crate::rng::derive_seed;

use super::{split_observed_heldout, EvalError};

/// Anything that can predict held-out words from a document's observed part.
pub trait Predictor {
    /// Probability of every distinct word of `heldout`, in entry order,
    /// given `observed`.
    fn heldout_probs(&self, observed: &TermVector, heldout: &TermVector) -> Result<Vec<f64>, EvalError>;
}

/// Document completion with a topic tree: infer the posterior from the
/// observed words, then score with `sum_k weight_k * E[theta_k]`.
pub struct TreePredictor<'a> {
    view: TreeView<'a>,
    config: InferenceConfig,
}

impl<'a> TreePredictor<'a> {
    pub fn new(tree: &'a TopicTree, config: InferenceConfig) -> Self {
        Self { view: TreeView::new(tree), config }
    }
}

impl Predictor for TreePredictor<'_> {
    fn heldout_probs(&self, observed: &TermVector, heldout: &TermVector) -> Result<Vec<f64>, EvalError> {
        let post = self.view.infer(observed, &self.config)?;
        heldout.entries().iter().map(|&(w, _)| Ok(self.view.word_prob(&post, w)?)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean log probability per held-out word.
    pub predictive_log_likelihood: f64,
    pub perplexity: f64,
    pub heldout_token_count: u64,
    /// Held-out words whose probability was raised to the floor.
    pub floor_hits: u64,
    pub documents: usize,
    /// Perplexity of every run aggregated into this report.
    pub per_run_values: Vec<f64>,
    /// Sample standard deviation of `per_run_values` (0 for one run).
    pub stddev: f64,
}

pub fn perplexity(log_likelihood: f64) -> f64 {
    (-log_likelihood).exp()
}

/// Splits every document of at least two words into observed and held-out
/// parts, each with its own seed stream. Returns the pairs and the number
/// of documents skipped for being too short.
pub fn heldout_pairs(docs: &[TermVector], r_dp: f64, seed: u64) -> Result<(Vec<(TermVector, TermVector)>, usize), EvalError> {
    let mut pairs = Vec::with_capacity(docs.len());
    let mut skipped = 0;
    for (i, doc) in docs.iter().enumerate() {
        match split_observed_heldout(doc, r_dp, derive_seed(seed, &[i as u64])) {
            Ok(pair) => pairs.push(pair),
            Err(EvalError::TooShort(len)) => {
                warn!("skipping test document {i} of length {len}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((pairs, skipped))
}

/// Mean held-out log probability per word over all pairs, documents being
/// independent. Probabilities below `exp(-700)` are floored and counted.
/// Per-document sums are added in sorted order, so the result does not
/// depend on the order of `pairs`.
pub fn predictive_log_likelihood<P: Predictor + ?Sized>(model: &P, pairs: &[(TermVector, TermVector)]) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty("no observed/held-out pairs".into()));
    }
    let mut per_doc = Vec::with_capacity(pairs.len());
    let (mut tokens, mut floor_hits) = (0u64, 0u64);
    for (observed, heldout) in pairs {
        if observed.is_empty() || heldout.is_empty() {
            return Err(EvalError::Empty("a pair has an empty side".into()));
        }
        let probs = model.heldout_probs(observed, heldout)?;
        let mut doc_sum = 0.0;
        for (&(_, c), &p) in heldout.entries().iter().zip(&probs) {
            let lp = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
            let lp = if lp >= LOG_PROB_FLOOR {
                lp
            } else {
                floor_hits += u64::from(c);
                LOG_PROB_FLOOR
            };
            doc_sum += f64::from(c) * lp;
        }
        tokens += heldout.length();
        per_doc.push(doc_sum);
    }
    per_doc.sort_by(f64::total_cmp);
    let ll = per_doc.iter().sum::<f64>() / tokens as f64;
    if floor_hits > 0 {
        warn!("{floor_hits} held-out words had probability below the floor");
    }
    let ppl = perplexity(ll);
    Ok(EvalReport {
        predictive_log_likelihood: ll,
        perplexity: ppl,
        heldout_token_count: tokens,
        floor_hits,
        documents: pairs.len(),
        per_run_values: vec![ppl],
        stddev: 0.0,
    })
}

pub const EVAL_CSV_HEADER: &str = "r_td,r_dp,test_docs,skipped_docs,heldout_tokens,floor_hits,log_likelihood,perplexity,stddev";

/// One-row CSV summary of a held-out evaluation.
pub fn eval_csv(report: &EvalReport, r_td: f64, r_dp: f64, skipped_docs: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVAL_CSV_HEADER.split(',')).expect("in-memory write");
    w.write_record([
        r_td.to_string(),
        r_dp.to_string(),
        (report.documents + skipped_docs).to_string(),
        skipped_docs.to_string(),
        report.heldout_token_count.to_string(),
        report.floor_hits.to_string(),
        report.predictive_log_likelihood.to_string(),
        report.perplexity.to_string(),
        report.stddev.to_string(),
    ])
    .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparameters;
    use proptest::prelude::*;

    /// Fixed probabilities per word regardless of the observed part.
    struct Table(Vec<f64>);

    impl Predictor for Table {
        fn heldout_probs(&self, _: &TermVector, h: &TermVector) -> Result<Vec<f64>, EvalError> {
            Ok(h.entries().iter().map(|&(w, _)| self.0[w]).collect())
        }
    }

    fn pair(o: &[(usize, u32)], h: &[(usize, u32)]) -> (TermVector, TermVector) {
        (TermVector::from_counts(o.iter().copied()), TermVector::from_counts(h.iter().copied()))
    }

    #[test]
    fn certain_model_has_unit_perplexity() {
        let r = predictive_log_likelihood(&Table(vec![1.0, 1.0]), &[pair(&[(0, 1)], &[(1, 3)])]).unwrap();
        assert_eq!(r.predictive_log_likelihood, 0.0);
        assert_eq!(r.perplexity, 1.0);
    }

    #[test]
    fn uniform_tree_gives_vocabulary_size() {
        for v in [4usize, 50, 200] {
            let hyper = Hyperparameters { truncation: vec![2, 2], ..Default::default() };
            let tree = TopicTree::uniform(hyper, v, true).unwrap();
            let pairs = vec![pair(&[(0, 2), (v - 1, 1)], &[(1, 1), (2, 4)]), pair(&[(3, 1)], &[(v - 1, 2)])];
            let r = predictive_log_likelihood(&TreePredictor::new(&tree, InferenceConfig::default()), &pairs).unwrap();
            assert!((r.perplexity - v as f64).abs() <= 1e-9 * v as f64, "{}", r.perplexity);
        }
    }

    #[test]
    fn zero_probabilities_hit_the_floor() {
        let r = predictive_log_likelihood(&Table(vec![0.0, 0.5]), &[pair(&[(1, 1)], &[(0, 2), (1, 1)])]).unwrap();
        assert_eq!(r.floor_hits, 2);
        assert!(((r.predictive_log_likelihood) - (2.0 * LOG_PROB_FLOOR + 0.5f64.ln()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicating_documents_keeps_likelihood() {
        let table = Table(vec![0.2, 0.3, 0.5]);
        let pairs = vec![pair(&[(0, 1)], &[(1, 2)]), pair(&[(1, 1)], &[(0, 1), (2, 3)])];
        let twice: Vec<_> = pairs.iter().chain(&pairs).cloned().collect();
        let a = predictive_log_likelihood(&table, &pairs).unwrap().predictive_log_likelihood;
        let b = predictive_log_likelihood(&table, &twice).unwrap().predictive_log_likelihood;
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(predictive_log_likelihood(&Table(vec![1.0]), &[]).is_err());
    }

    proptest! {
        #[test]
        fn perplexity_two_routes(ll in -50.0f64..0.0, n in 1usize..200) {
            // Geometric mean of n equal per-word probabilities exp(ll).
            let p = ll.exp();
            let geo = (0..n).map(|_| p.ln()).sum::<f64>() / n as f64;
            let inverse_geo = 1.0 / geo.exp();
            prop_assert!((perplexity(ll) - inverse_geo).abs() <= 1e-9 * inverse_geo);
        }

        #[test]
        fn document_order_is_irrelevant(probs in proptest::collection::vec(0.01f64..1.0, 5), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let pairs: Vec<_> = (0..8).map(|i| pair(&[(i % 5, 1)], &[((i * 3) % 5, 1 + i as u32), ((i + 1) % 5, 2)])).collect();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::rng::rng_for(seed, &[]));
            let table = Table(probs);
            prop_assert_eq!(
                predictive_log_likelihood(&table, &pairs).unwrap().predictive_log_likelihood,
                predictive_log_likelihood(&table, &shuffled).unwrap().predictive_log_likelihood
            );
        }
    }
}
