use serde::{Deserialize, Serialize};

use super::ModelError;

/// Prior settings of the tree model.
///
/// `eta` is the symmetric Dirichlet concentration of every topic, `alpha`
/// the concentration of the global branch sticks, `beta` the concentration
/// of each document's re-weighting of those branches, and
/// `gamma1`/`gamma2` the Beta prior of the per-node stop probability.
/// `truncation[d]` caps the number of children of a node at depth `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub truncation: Vec<usize>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            eta: 0.1,
            alpha: 5.0,
            beta: 0.5,
            gamma1: 1.0,
            gamma2: 1.0,
            truncation: vec![20, 10, 5],
        }
    }
}

impl Hyperparameters {
    pub fn max_depth(&self) -> usize {
        self.truncation.len()
    }

    /// Child cap for a node at `depth`; zero below the deepest level.
    pub fn max_children(&self, depth: usize) -> usize {
        self.truncation.get(depth).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidHyper(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.truncation.iter().any(|&k| k == 0) {
            return Err(ModelError::InvalidHyper("truncation entries must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let h = Hyperparameters::default();
        h.validate().unwrap();
        assert_eq!(h.max_depth(), 3);
        assert_eq!(h.max_children(2), 5);
        assert_eq!(h.max_children(3), 0);
    }

    #[test]
    fn rejects_bad_values() {
        let mut h = Hyperparameters { beta: 0.0, ..Default::default() };
        assert!(h.validate().is_err());
        h.beta = 1.0;
        h.truncation = vec![3, 0];
        assert!(h.validate().is_err());
        h.truncation = vec![];
        h.gamma1 = f64::NAN;
        assert!(h.validate().is_err());
    }
}
