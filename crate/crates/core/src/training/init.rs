use crate::ingest::TermVector;
use crate::model::{Hyperparameters, Stick, TopicTree};
use crate::rng::derive_seed;

use super::kmeans::{kmeans_dense_best, normalized_rows};
use super::{KMeansTreeSpec, TrainError};

/// Builds the initial tree by recursive K-means over `docs`. Every node's
/// topic is `eta + counts` of its cluster; children are ordered by cluster
/// size (largest first) and at most `truncation[depth]` of them are kept.
/// Clusters of fewer than two documents become leaves.
pub fn build_init_tree(docs: &[TermVector], spec: &KMeansTreeSpec, hyper: &Hyperparameters, vocab_size: usize) -> Result<TopicTree, TrainError> {
    build_init_tree_scaled(docs, spec, hyper, vocab_size, 1.0)
}

/// As [`build_init_tree`], with counts multiplied by `scale` so that the
/// seed subset speaks for a larger corpus.
pub fn build_init_tree_scaled(docs: &[TermVector], spec: &KMeansTreeSpec, hyper: &Hyperparameters, vocab_size: usize, scale: f64) -> Result<TopicTree, TrainError> {
    hyper.validate()?;
    spec.validate(hyper)?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(TrainError::Config(format!("count scale must be positive, got {scale}")));
    }
    let rows = normalized_rows(docs, vocab_size)?;
    let smoothed = |members: &[usize]| -> Vec<f64> {
        let mut lambda = vec![hyper.eta; vocab_size];
        for &d in members {
            for &(w, c) in docs[d].entries() {
                lambda[w] += scale * f64::from(c);
            }
        }
        lambda
    };

    let all: Vec<usize> = (0..docs.len()).collect();
    let mut tree = TopicTree::new(hyper.clone(), smoothed(&all))?;
    let mut stack = vec![(0usize, all)];
    while let Some((node, members)) = stack.pop() {
        let depth = tree.node(node).depth();
        if depth >= hyper.max_depth() || members.len() < 2 {
            continue;
        }
        let sub: Vec<Vec<f64>> = members.iter().map(|&d| rows[d].clone()).collect();
        let path: Vec<u64> = tree.node(node).id.0.iter().map(|&p| p as u64).collect();
        let result = kmeans_dense_best(&sub, spec.branching[depth], spec.max_iters, spec.restarts, derive_seed(spec.seed, &path))?;

        let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); result.k()];
        for (&d, &a) in members.iter().zip(&result.assignments) {
            clusters[a].push(d);
        }
        clusters.retain(|c| !c.is_empty());
        if clusters.len() < 2 {
            continue;
        }
        clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        clusters.truncate(hyper.max_children(depth));

        let sizes: Vec<f64> = clusters.iter().map(|c| scale * c.len() as f64).collect();
        for (pos, cluster) in clusters.into_iter().enumerate() {
            let after: f64 = sizes[pos + 1..].iter().sum();
            let stick = Stick::new(1.0 + sizes[pos], hyper.alpha + after);
            let child = tree.add_child(node, smoothed(&cluster), stick)?;
            stack.push((child, cluster));
        }
    }
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::total_variation;
    use crate::model::expected_topic;
    use crate::synthgen::{sample_corpus, sample_global_tree};

    fn spec(branching: Vec<usize>) -> KMeansTreeSpec {
        KMeansTreeSpec { depth: branching.len(), branching, max_iters: 30, restarts: 3, seed: 4 }
    }

    #[test]
    fn single_doc_gives_root_only() {
        let hyper = Hyperparameters { truncation: vec![2], ..Default::default() };
        let docs = vec![TermVector::from_counts([(0, 3), (2, 1)])];
        let tree = build_init_tree(&docs, &spec(vec![2]), &hyper, 3).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.node(0).lambda, vec![3.1, 0.1, 1.1]);
    }

    #[test]
    fn spec_must_dominate_truncation() {
        let hyper = Hyperparameters { truncation: vec![3, 2], ..Default::default() };
        let docs = vec![TermVector::from_counts([(0, 1)]); 4];
        assert!(build_init_tree(&docs, &spec(vec![2, 2]), &hyper, 1).is_err());
        assert!(build_init_tree(&docs, &spec(vec![3]), &hyper, 1).is_err());
        assert!(build_init_tree(&docs, &spec(vec![3, 2]), &hyper, 1).is_ok());
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let hyper = Hyperparameters { eta: 0.01, alpha: 1.0, beta: 0.05, gamma1: 0.01, gamma2: 10.0, truncation: vec![2] };
        let truth = sample_global_tree(&hyper, 60, 31);
        let synth = sample_corpus(&truth, &hyper, 400, 60, 2).unwrap();
        let docs = synth.corpus.term_vectors();
        let tree = build_init_tree(&docs, &spec(vec![2]), &hyper, synth.corpus.vocab.len()).unwrap();
        assert_eq!(tree.len(), 3);
        let learned: Vec<Vec<f64>> = tree.node(0).children().iter().map(|&c| expected_topic(tree.node(c))).collect();
        let true_topics: Vec<&Vec<f64>> = synth.truth.level(1).iter().map(|&i| &synth.truth.nodes[i].topic).collect();
        let straight = total_variation(&learned[0], true_topics[0]).max(total_variation(&learned[1], true_topics[1]));
        let crossed = total_variation(&learned[0], true_topics[1]).max(total_variation(&learned[1], true_topics[0]));
        assert!(straight.min(crossed) <= 0.2, "{straight} {crossed}");
    }

    #[test]
    fn lambdas_positive_and_deterministic() {
        let hyper = Hyperparameters { truncation: vec![3, 2], ..Default::default() };
        let truth = sample_global_tree(&hyper, 40, 8);
        let synth = sample_corpus(&truth, &hyper, 200, 30, 8).unwrap();
        let docs = synth.corpus.term_vectors();
        let v = synth.corpus.vocab.len();
        let tree = build_init_tree(&docs, &spec(vec![4, 3]), &hyper, v).unwrap();
        assert!(tree.nodes().iter().all(|n| n.lambda.iter().all(|&l| l > 0.0)));
        assert!(tree.nodes().iter().all(|n| n.children().len() <= hyper.max_children(n.depth())));
        assert!(tree.len() > 1);
        assert_eq!(tree, build_init_tree(&docs, &spec(vec![4, 3]), &hyper, v).unwrap());
    }
}
