//! Held-out evaluation by document completion, learning curves and
//! hyperparameter sensitivity sweeps.

mod curve;
mod heldout;
mod split;
mod sweep;

use thiserror::Error;

use crate::model::ModelError;
use crate::training::TrainError;

pub use curve::{curve_csv, perplexity_curve, CurvePoint, CURVE_CSV_HEADER};
pub use heldout::{eval_csv, heldout_pairs, EVAL_CSV_HEADER, perplexity, predictive_log_likelihood, EvalReport, Predictor, TreePredictor};
pub use split::{split_observed_heldout, split_train_test, SplitSpec};
pub use sweep::{sensitivity_sweep, sweep_csv, SensitivityPoint, SweepParam, ACTIVATION_THRESHOLD};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid split: {0}")]
    Split(String),
    #[error("document of length {0} cannot be split into observed and held-out parts")]
    TooShort(u64),
    #[error("nothing to evaluate: {0}")]
    Empty(String),
    #[error("invalid parameter: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
