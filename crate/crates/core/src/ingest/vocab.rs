use std::collections::{BTreeMap, HashMap, HashSet};

use sha2::{Digest, Sha256};

use super::{IngestError, WindowDoc};

/// Bijective token <-> index map with corpus statistics per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    token_to_index: HashMap<String, usize>,
    doc_frequency: Vec<u64>,
    total_count: Vec<u64>,
}

impl Vocabulary {
    /// Builds a vocabulary from parallel per-index columns. Fails on
    /// duplicate tokens or mismatched column lengths.
    pub fn from_columns(tokens: Vec<String>, doc_frequency: Vec<u64>, total_count: Vec<u64>) -> Result<Self, IngestError> {
        if tokens.len() != doc_frequency.len() || tokens.len() != total_count.len() {
            return Err(IngestError::Config("vocabulary columns differ in length".into()));
        }
        let mut token_to_index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_index.insert(t.clone(), i).is_some() {
                return Err(IngestError::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            index_to_token: tokens,
            token_to_index,
            doc_frequency,
            total_count,
        })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn doc_frequency(&self, index: usize) -> u64 {
        self.doc_frequency[index]
    }

    pub fn total_count(&self, index: usize) -> u64 {
        self.total_count[index]
    }

    /// Content hash over the ordered token list; models record it so they
    /// are never scored against a differently indexed corpus.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.index_to_token {
            hasher.update(t.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Sparse term-frequency vector. Entries are sorted by index and every
/// stored count is at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TermVector {
    entries: Vec<(usize, u32)>,
    length: u64,
}

impl TermVector {
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(counts: I) -> Self {
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for (i, c) in counts {
            if c > 0 {
                *merged.entry(i).or_insert(0) += c;
            }
        }
        let entries: Vec<(usize, u32)> = merged.into_iter().collect();
        let length = entries.iter().map(|&(_, c)| u64::from(c)).sum();
        Self { entries, length }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        Self::from_counts(indices.into_iter().map(|i| (i, 1)))
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    /// Total number of word occurrences.
    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, index: usize) -> u32 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0, |pos| self.entries[pos].1)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(i, _)| i)
    }

    /// Every occurrence as its own index, in index order.
    pub fn occurrences(&self) -> Vec<usize> {
        self.entries
            .iter()
            .flat_map(|&(i, c)| std::iter::repeat(i).take(c as usize))
            .collect()
    }

    /// Dense copy scaled to unit L1 norm.
    pub fn l1_normalized_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        if self.length == 0 {
            return out;
        }
        let total = self.length as f64;
        for &(i, c) in &self.entries {
            out[i] = f64::from(c) / total;
        }
        out
    }
}

/// Keeps tokens whose corpus frequency is at least `min_count` and whose
/// document frequency is at most `max_doc_fraction` of the documents.
/// Indices follow descending frequency, ties broken lexicographically.
pub fn build_vocabulary(docs: &[WindowDoc], min_count: u64, max_doc_fraction: f64) -> Result<Vocabulary, IngestError> {
    if min_count < 1 {
        return Err(IngestError::Config("min_count must be at least 1".into()));
    }
    if !(max_doc_fraction > 0.0 && max_doc_fraction <= 1.0) {
        return Err(IngestError::Config("max_doc_fraction must lie in (0, 1]".into()));
    }
    let mut total: HashMap<&str, u64> = HashMap::new();
    let mut df: HashMap<&str, u64> = HashMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for t in &doc.tokens {
            *total.entry(t.as_str()).or_insert(0) += 1;
            if seen.insert(t.as_str()) {
                *df.entry(t.as_str()).or_insert(0) += 1;
            }
        }
    }
    let n_docs = docs.len() as f64;
    let mut kept: Vec<(&str, u64, u64)> = total
        .into_iter()
        .map(|(t, c)| (t, c, df[t]))
        .filter(|&(_, c, d)| c >= min_count && d as f64 <= max_doc_fraction * n_docs)
        .collect();
    if kept.is_empty() {
        return Err(IngestError::EmptyVocabulary { min_count, max_doc_fraction });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = kept.iter().map(|k| k.0.to_string()).collect();
    let doc_frequency = kept.iter().map(|k| k.2).collect();
    let total_count = kept.iter().map(|k| k.1).collect();
    Vocabulary::from_columns(tokens, doc_frequency, total_count)
}

/// Counts the in-vocabulary tokens of a window; unknown tokens are dropped.
pub fn to_term_vector(doc: &WindowDoc, vocab: &Vocabulary) -> TermVector {
    TermVector::from_indices(doc.tokens.iter().filter_map(|t| vocab.index_of(t)))
}
