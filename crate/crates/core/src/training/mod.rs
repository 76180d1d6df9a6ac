//! Model fitting: seed-subset selection, recursive K-means initialization
//! and stochastic variational updates over shuffled mini-batches.

mod init;
mod kmeans;
mod seed;
mod svi;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Hyperparameters, InferenceConfig, ModelError, TopicTree};

pub use init::{build_init_tree, build_init_tree_scaled};
pub use kmeans::{kmeans_l1, kmeans_l1_best, l1_distance, l1_objective, lower_median_centroid, KMeansResult};
pub use seed::{select_seed_subset, select_seed_subset_with_floor, SEED_SUBSET_FLOOR};
pub use svi::{step_size, train, train_with_progress, ProgressRecord, TrainReport, Trained};

/// Seeded K-means restarts per split: the first from farthest-point
/// seeding, the rest from random centers.
pub const DEFAULT_KMEANS_RESTARTS: usize = 5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error("documents do not cover {missing} vocabulary words (e.g. {examples:?}); corpus and vocabulary disagree")]
    Coverage { missing: usize, examples: Vec<String> },
    #[error("objective diverged at epoch {epoch}, batch {batch}; last good tree kept")]
    Divergence { epoch: usize, batch: usize, last_good: Box<TopicTree> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Shape of the K-means tree used for initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansTreeSpec {
    pub depth: usize,
    /// Clusters requested per level.
    pub branching: Vec<usize>,
    pub max_iters: usize,
    /// Seeded K-means runs per split; the lowest objective wins.
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansTreeSpec {
    /// The smallest spec that dominates `hyper`'s truncation.
    pub fn for_hyper(hyper: &Hyperparameters, seed: u64) -> Self {
        let depth = hyper.max_depth().max(1);
        let branching = (0..depth).map(|l| hyper.truncation.get(l).copied().unwrap_or(2).max(2)).collect();
        Self { depth, branching, max_iters: 30, restarts: DEFAULT_KMEANS_RESTARTS, seed }
    }

    pub fn validate(&self, hyper: &Hyperparameters) -> Result<(), TrainError> {
        if self.depth < 1 || self.branching.len() != self.depth {
            return Err(TrainError::Config(format!("k-means tree depth {} needs one branching entry per level, got {:?}", self.depth, self.branching)));
        }
        if self.branching.iter().any(|&b| b < 2) {
            return Err(TrainError::Config(format!("branching entries must be at least 2, got {:?}", self.branching)));
        }
        if self.depth < hyper.max_depth() {
            return Err(TrainError::Config(format!("k-means tree depth {} is shallower than the model depth {}", self.depth, hyper.max_depth())));
        }
        for (l, (&b, &k)) in self.branching.iter().zip(&hyper.truncation).enumerate() {
            if b < k {
                return Err(TrainError::Config(format!("level {} branching {b} is below the truncation {k}", l + 1)));
            }
        }
        if self.restarts == 0 {
            return Err(TrainError::Config("k-means needs at least one restart".into()));
        }
        Ok(())
    }
}

/// Mini-batch schedule and stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub batch_size: usize,
    /// Step size `(t + tau)^(-kappa)`.
    pub kappa: f64,
    pub tau: f64,
    pub max_epochs: usize,
    /// Number of validation checks averaged by the stopping rule.
    pub convergence_window: usize,
    /// Relative change of the averaged validation ELBO that stops training.
    pub convergence_tol: f64,
    /// Share of documents held out for the stopping rule.
    pub validation_fraction: f64,
    /// Settings of the per-document step.
    pub local: InferenceConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            batch_size: 256,
            kappa: 0.6,
            tau: 64.0,
            max_epochs: 20,
            convergence_window: 5,
            convergence_tol: 1e-4,
            validation_fraction: 0.05,
            local: InferenceConfig::default(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.kappa > 0.5 && self.kappa <= 1.0) {
            return bad(format!("kappa must lie in (0.5, 1], got {}", self.kappa));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be a finite non-negative number, got {}", self.tau));
        }
        if self.max_epochs == 0 || self.convergence_window == 0 {
            return bad("max_epochs and convergence_window must be at least 1".into());
        }
        if !(self.convergence_tol >= 0.0) {
            return bad(format!("convergence tolerance must be non-negative, got {}", self.convergence_tol));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation fraction must lie in (0, 1), got {}", self.validation_fraction));
        }
        if self.local.max_iters == 0 {
            return bad("local inference needs at least one sweep".into());
        }
        Ok(())
    }
}
