use rand::seq::SliceRandom;

use crate::ingest::{TermVector, Vocabulary};
use crate::rng::rng_for;

use super::TrainError;

/// Minimum size of the seed subset, capped by the corpus size.
pub const SEED_SUBSET_FLOOR: usize = 1000;

/// Grows a random subset of documents until every vocabulary word occurs in
/// it at least once and it holds at least `min(SEED_SUBSET_FLOOR, M)`
/// documents. Indices come back in selection order.
pub fn select_seed_subset(docs: &[TermVector], vocab: &Vocabulary, seed: u64) -> Result<Vec<usize>, TrainError> {
    select_seed_subset_with_floor(docs, vocab, seed, SEED_SUBSET_FLOOR)
}

pub fn select_seed_subset_with_floor(docs: &[TermVector], vocab: &Vocabulary, seed: u64, floor: usize) -> Result<Vec<usize>, TrainError> {
    let v = vocab.len();
    if let Some((d, w)) = docs.iter().enumerate().find_map(|(d, t)| t.max_index().filter(|&w| w >= v).map(|w| (d, w))) {
        return Err(TrainError::Config(format!("document {d} uses word {w} outside the vocabulary of {v}")));
    }
    let (chosen, missing) = grow_covering(docs, &vec![true; v], seed, floor);
    if !missing.is_empty() {
        let examples = missing.iter().take(5).map(|&w| vocab.token(w).unwrap_or_default().to_string()).collect();
        return Err(TrainError::Coverage { missing: missing.len(), examples });
    }
    Ok(chosen)
}

/// Adds documents in seeded random order until every word flagged in
/// `required` is covered and the floor is met. Returns the selection and
/// the required words still uncovered.
pub(crate) fn grow_covering(docs: &[TermVector], required: &[bool], seed: u64, floor: usize) -> (Vec<usize>, Vec<usize>) {
    let mut covered: Vec<bool> = required.iter().map(|r| !r).collect();
    let mut uncovered = required.iter().filter(|&&r| r).count();
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng_for(seed, &[0x5eed]));
    let floor = floor.min(docs.len());

    let mut chosen = Vec::new();
    for &d in &order {
        if uncovered == 0 && chosen.len() >= floor {
            break;
        }
        chosen.push(d);
        for &(w, _) in docs[d].entries() {
            if w < covered.len() && !covered[w] {
                covered[w] = true;
                uncovered -= 1;
            }
        }
    }
    let missing = (0..covered.len()).filter(|&w| !covered[w]).collect();
    (chosen, missing)
}
