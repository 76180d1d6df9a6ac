use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ingest::{Corpus, TermVector};
use crate::rng::rng_for;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Share of documents used for training.
    pub r_td: f64,
    /// Share of each test document's words that are observed.
    pub r_dp: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, r) in [("r_td", self.r_td), ("r_dp", self.r_dp)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(EvalError::Split(format!("{name} must lie in (0, 1), got {r}")));
            }
        }
        Ok(())
    }
}

/// Random partition of the corpus into `round(r_td * M)` training documents
/// and the rest. Both sides keep the corpus vocabulary.
pub fn split_train_test(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus), EvalError> {
    spec.validate()?;
    let m = corpus.len();
    let n_train = (spec.r_td * m as f64).round() as usize;
    if n_train == 0 || n_train >= m {
        return Err(EvalError::Split(format!("r_td = {} leaves an empty side for {m} documents", spec.r_td)));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng_for(spec.seed, &[0x7d]));
    let (mut train, mut test) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    let pick = |idx: &[usize]| Corpus {
        vocab: corpus.vocab.clone(),
        docs: idx.iter().map(|&i| corpus.docs[i].clone()).collect(),
    };
    Ok((pick(&train), pick(&test)))
}

/// Shuffles the document's word occurrences and puts the first
/// `round(r_dp * F)` of them (at least one, at most `F - 1`) on the
/// observed side.
pub fn split_observed_heldout(doc: &TermVector, r_dp: f64, seed: u64) -> Result<(TermVector, TermVector), EvalError> {
    if !(r_dp > 0.0 && r_dp < 1.0) {
        return Err(EvalError::Split(format!("r_dp must lie in (0, 1), got {r_dp}")));
    }
    let f = doc.length();
    if f < 2 {
        return Err(EvalError::TooShort(f));
    }
    let mut words = doc.occurrences();
    words.shuffle(&mut rng_for(seed, &[0xd9]));
    let n_obs = ((r_dp * f as f64).round() as usize).clamp(1, f as usize - 1);
    let heldout = words.split_off(n_obs);
    Ok((TermVector::from_indices(words), TermVector::from_indices(heldout)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CorpusDoc, Vocabulary};
    use proptest::prelude::*;

    fn corpus(m: usize) -> Corpus {
        Corpus {
            vocab: Vocabulary::from_columns(vec!["a".into()], vec![1], vec![1]).unwrap(),
            docs: (0..m).map(|i| CorpusDoc { id: format!("d{i}"), terms: TermVector::from_counts([(0, 1)]) }).collect(),
        }
    }

    #[test]
    fn ten_docs_nine_one() {
        let spec = SplitSpec { r_td: 0.9, r_dp: 0.9, seed: 1 };
        let (train, test) = split_train_test(&corpus(10), &spec).unwrap();
        assert_eq!((train.len(), test.len()), (9, 1));
        let (again, _) = split_train_test(&corpus(10), &spec).unwrap();
        assert_eq!(train.docs, again.docs);
    }

    #[test]
    fn degenerate_splits_fail() {
        assert!(split_train_test(&corpus(1), &SplitSpec { r_td: 0.9, r_dp: 0.5, seed: 0 }).is_err());
        assert!(split_train_test(&corpus(10), &SplitSpec { r_td: 0.01, r_dp: 0.5, seed: 0 }).is_err());
        assert!(split_train_test(&corpus(10), &SplitSpec { r_td: 1.0, r_dp: 0.5, seed: 0 }).is_err());
    }

    #[test]
    fn word_split_sizes() {
        let doc = TermVector::from_counts([(0, 4), (1, 3), (2, 3)]);
        let (o, h) = split_observed_heldout(&doc, 0.9, 3).unwrap();
        assert_eq!((o.length(), h.length()), (9, 1));
        let (o, h) = split_observed_heldout(&TermVector::from_counts([(0, 4)]), 0.5, 3).unwrap();
        assert_eq!(o, TermVector::from_counts([(0, 2)]));
        assert_eq!(h, TermVector::from_counts([(0, 2)]));
        assert!(matches!(split_observed_heldout(&TermVector::from_counts([(0, 1)]), 0.5, 3), Err(EvalError::TooShort(1))));
    }

    proptest! {
        #[test]
        fn partitions_conserve(m in 2usize..60, r in 0.05f64..0.95, seed in any::<u64>()) {
            let c = corpus(m);
            let c = Corpus { docs: c.docs.into_iter().enumerate().map(|(i, mut d)| { d.id = format!("x{i}"); d }).collect(), ..c };
            if let Ok((train, test)) = split_train_test(&c, &SplitSpec { r_td: r, r_dp: 0.5, seed }) {
                let mut ids: Vec<String> = train.docs.iter().chain(&test.docs).map(|d| d.id.clone()).collect();
                ids.sort();
                ids.dedup();
                prop_assert_eq!(ids.len(), m);
                prop_assert_eq!(train.len(), (r * m as f64).round() as usize);
            }
        }

        #[test]
        fn word_split_recombines(counts in proptest::collection::vec((0usize..20, 1u32..6), 1..10), r in 0.05f64..0.95, seed in any::<u64>()) {
            let doc = TermVector::from_counts(counts);
            prop_assume!(doc.length() >= 2);
            let (o, h) = split_observed_heldout(&doc, r, seed).unwrap();
            prop_assert!(!o.is_empty() && !h.is_empty());
            let recombined = TermVector::from_indices(o.occurrences().into_iter().chain(h.occurrences()));
            prop_assert_eq!(recombined, doc);
        }
    }
}
