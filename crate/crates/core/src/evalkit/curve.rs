use log::{info, warn};
use rand::seq::SliceRandom;

use crate::ingest::Corpus;
use crate::math::mean_and_stddev;
use crate::model::Hyperparameters;
use crate::rng::{derive_seed, rng_for};
use crate::training::{train, KMeansTreeSpec, TrainSchedule};

use super::{heldout_pairs, predictive_log_likelihood, split_train_test, EvalError, SplitSpec, TreePredictor};

pub const CURVE_CSV_HEADER: &str = "fraction,mean_perplexity,stddev_perplexity,runs,failed_runs";

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    /// Mean perplexity over successful runs (NaN if every run failed).
    pub mean: f64,
    /// Sample standard deviation over successful runs.
    pub stddev: f64,
    pub values: Vec<f64>,
    pub failed_runs: usize,
}

/// For every fraction, trains `runs` models on independent random subsets
/// of that share of the training split and scores each on the same
/// held-out pairs. A failing run is logged and counted, not fatal.
#[allow(clippy::too_many_arguments)]
pub fn perplexity_curve(
    corpus: &Corpus,
    split: &SplitSpec,
    fractions: &[f64],
    runs: usize,
    hyper: &Hyperparameters,
    spec: &KMeansTreeSpec,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<Vec<CurvePoint>, EvalError> {
    if runs == 0 {
        return Err(EvalError::Config("runs must be at least 1".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0 || **f == 1.0)) {
        return Err(EvalError::Config(format!("fraction {f} outside (0, 1]")));
    }
    let (train_set, test_set) = split_train_test(corpus, split)?;
    let (pairs, _) = heldout_pairs(&test_set.term_vectors(), split.r_dp, split.seed)?;

    let mut points = Vec::with_capacity(fractions.len());
    for (fi, &fraction) in fractions.iter().enumerate() {
        let n = ((fraction * train_set.len() as f64).round() as usize).clamp(1, train_set.len());
        let mut values = Vec::with_capacity(runs);
        let mut failed = 0;
        for run in 0..runs {
            let run_seed = derive_seed(seed, &[fi as u64, run as u64]);
            let mut idx: Vec<usize> = (0..train_set.len()).collect();
            idx.shuffle(&mut rng_for(run_seed, &[0x5b]));
            idx.truncate(n);
            idx.sort_unstable();
            let subset = Corpus {
                vocab: train_set.vocab.clone(),
                docs: idx.iter().map(|&i| train_set.docs[i].clone()).collect(),
            };
            let run_spec = KMeansTreeSpec { seed: run_seed, ..spec.clone() };
            let outcome = train(&subset, hyper, &run_spec, schedule, run_seed)
                .map_err(EvalError::from)
                .and_then(|t| predictive_log_likelihood(&TreePredictor::new(&t.tree, schedule.local.clone()), &pairs));
            match outcome {
                Ok(report) => values.push(report.perplexity),
                Err(e) => {
                    warn!("fraction {fraction}, run {run} failed: {e}");
                    failed += 1;
                }
            }
        }
        let (mean, stddev) = if values.is_empty() { (f64::NAN, f64::NAN) } else { mean_and_stddev(&values) };
        info!("fraction {fraction}: mean perplexity {mean:.4}, stddev {stddev:.4}");
        points.push(CurvePoint { fraction, mean, stddev, values, failed_runs: failed });
    }
    Ok(points)
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_CSV_HEADER.split(',')).expect("in-memory write");
    for p in points {
        let row = [p.fraction.to_string(), p.mean.to_string(), p.stddev.to_string(), (p.values.len() + p.failed_runs).to_string(), p.failed_runs.to_string()];
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}
