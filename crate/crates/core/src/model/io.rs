use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Hyperparameters, ModelError, NodeId, Stick, TopicTree};

pub const MODEL_FORMAT: &str = "nhdp-model/1";

/// One node of a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub lambda: Vec<f64>,
    pub stick_params: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<f64>,
}

/// On-disk model: hyperparameters, the hash of the vocabulary it was
/// trained against, and a flat preorder list of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub hyper: Hyperparameters,
    pub nodes: Vec<NodeRecord>,
}

impl ModelFile {
    pub fn from_tree(tree: &TopicTree, vocab_hash: &str) -> Self {
        let usage = tree.usage();
        let nodes = tree
            .preorder()
            .into_iter()
            .map(|i| {
                let n = tree.node(i);
                NodeRecord {
                    id: n.id.to_string(),
                    lambda: n.lambda.clone(),
                    stick_params: n.sticks.iter().map(|s| [s.a, s.b]).collect(),
                    usage: usage.map(|u| u[i]),
                }
            })
            .collect();
        Self {
            format: MODEL_FORMAT.to_string(),
            vocab_hash: vocab_hash.to_string(),
            vocab_size: tree.vocab_size(),
            hyper: tree.hyper().clone(),
            nodes,
        }
    }

    pub fn to_tree(&self) -> Result<TopicTree, ModelError> {
        if self.format != MODEL_FORMAT {
            return Err(ModelError::Format(format!("unsupported format {:?}", self.format)));
        }
        let mut records = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let id: NodeId = n.id.parse()?;
            let sticks = n.stick_params.iter().map(|&[a, b]| Stick::new(a, b)).collect();
            records.push((id, n.lambda.clone(), sticks));
        }
        let tree = TopicTree::from_records(self.hyper.clone(), records)?;
        if tree.vocab_size() != self.vocab_size {
            return Err(ModelError::Format("vocab_size disagrees with topic length".into()));
        }
        let usage: Option<Vec<f64>> = self.nodes.iter().map(|n| n.usage).collect();
        let mut tree = tree;
        if let Some(usage_by_record) = usage {
            let mut by_index = vec![0.0; tree.len()];
            for (n, u) in self.nodes.iter().zip(usage_by_record) {
                let idx = tree.find(&n.id.parse()?).expect("node was just inserted");
                by_index[idx] = u;
            }
            tree.set_usage(by_index)?;
        }
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Loads a model and, when `vocab_hash` is given, rejects files trained
    /// on a different vocabulary.
    pub fn load(path: &Path, vocab_hash: Option<&str>) -> Result<(Self, TopicTree), ModelError> {
        let file = Self::from_json(&fs::read_to_string(path)?)?;
        if let Some(expected) = vocab_hash {
            if file.vocab_hash != expected {
                return Err(ModelError::VocabMismatch { model: file.vocab_hash.clone(), corpus: expected.to_string() });
            }
        }
        let tree = file.to_tree()?;
        Ok((file, tree))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> TopicTree {
        let hyper = Hyperparameters { truncation: vec![2, 1], ..Default::default() };
        let mut t = TopicTree::new(hyper, vec![1.5, 0.25, 3.0]).unwrap();
        let a = t.add_child(0, vec![0.1, 0.2, 0.3], Stick::new(2.0, 3.0)).unwrap();
        t.add_child(0, vec![1.0 / 3.0, 2.0, 5.0], Stick::new(1.0, 0.5)).unwrap();
        t.add_child(a, vec![7.0, 1e-9, 1e9], Stick::new(0.7, 0.3)).unwrap();
        t
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut t = tree();
        t.set_usage(vec![0.5, 0.2, 0.2, 0.1]).unwrap();
        let file = ModelFile::from_tree(&t, "abc");
        let back = ModelFile::from_json(&file.to_json()).unwrap().to_tree().unwrap();
        assert_eq!(back, t);
        assert_eq!(file.nodes.iter().map(|n| n.id.as_str()).collect::<Vec<_>>(), ["r", "r.0", "r.0.0", "r.1"]);
    }

    #[test]
    fn vocab_hash_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ModelFile::from_tree(&tree(), "abc").save(&path).unwrap();
        assert!(ModelFile::load(&path, Some("abc")).is_ok());
        assert!(matches!(ModelFile::load(&path, Some("xyz")), Err(ModelError::VocabMismatch { .. })));
    }

    #[test]
    fn structural_errors_are_reported() {
        let mut file = ModelFile::from_tree(&tree(), "abc");
        file.nodes[0].stick_params.pop();
        assert!(file.to_tree().is_err());
        let mut file = ModelFile::from_tree(&tree(), "abc");
        file.nodes[2].id = "r.0.5".into();
        assert!(file.to_tree().is_err());
    }
}
