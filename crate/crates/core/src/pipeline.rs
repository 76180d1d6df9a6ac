//! End-to-end run driven by a TOML file: corpus, training, held-out
//! evaluation and export, with a provenance record.
//!
//! ```toml
//! seed = 42                 # required; every random stream derives from it
//! corpus = "corpus.txt"     # required unless an [ingest] section is given
//! output = "out"            # default "nhdp-out", relative to the config file
//!
//! [ingest]                  # build the corpus from trace logs instead
//! inputs = ["logs/a.jsonl"]
//! gap_secs = 300
//! window = 50
//! min_count = 5
//! max_doc_fraction = 0.5
//!
//! [model]                   # eta, alpha, beta, gamma1, gamma2, truncation
//! truncation = [20, 10, 5]
//!
//! [train]                   # batch_size, kappa, tau, max_epochs, convergence_window,
//! batch_size = 256          # convergence_tol, validation_fraction, local_iters,
//!                           # full_tree, kmeans_iters, kmeans_restarts
//! [eval]
//! r_td = 0.9
//! r_dp = 0.9
//!
//! [export]
//! prune = 0.0
//! ```

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evalkit::{eval_csv, heldout_pairs, predictive_log_likelihood, split_train_test, EvalReport, SplitSpec, TreePredictor};
use crate::export::export_dot;
use crate::ingest::{ingest_logs, Corpus, IngestOptions};
use crate::model::{Hyperparameters, InferenceConfig, ModelFile};
use crate::rng::derive_seed;
use crate::training::{train, KMeansTreeSpec, TrainReport, TrainSchedule};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
}

fn stage<T, E: Into<BoxError>>(name: &'static str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage { stage: name, source: e.into() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub ingest: Option<IngestSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub export: ExportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub inputs: Vec<PathBuf>,
    #[serde(default = "defaults::gap_secs")]
    pub gap_secs: u64,
    #[serde(default = "defaults::window")]
    pub window: usize,
    #[serde(default = "defaults::min_tail")]
    pub min_tail: usize,
    #[serde(default = "defaults::min_count")]
    pub min_count: u64,
    #[serde(default = "defaults::max_doc_fraction")]
    pub max_doc_fraction: f64,
}

mod defaults {
    use crate::ingest::IngestOptions;

    pub fn gap_secs() -> u64 {
        IngestOptions::default().gap_secs
    }
    pub fn window() -> usize {
        IngestOptions::default().window
    }
    pub fn min_tail() -> usize {
        IngestOptions::default().min_tail
    }
    pub fn min_count() -> u64 {
        IngestOptions::default().min_count
    }
    pub fn max_doc_fraction() -> f64 {
        IngestOptions::default().max_doc_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub truncation: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let h = Hyperparameters::default();
        Self { eta: h.eta, alpha: h.alpha, beta: h.beta, gamma1: h.gamma1, gamma2: h.gamma2, truncation: h.truncation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub kappa: f64,
    pub tau: f64,
    pub max_epochs: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub validation_fraction: f64,
    pub local_iters: usize,
    pub full_tree: bool,
    pub kmeans_iters: usize,
    pub kmeans_restarts: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let s = TrainSchedule::default();
        Self {
            batch_size: s.batch_size,
            kappa: s.kappa,
            tau: s.tau,
            max_epochs: s.max_epochs,
            convergence_window: s.convergence_window,
            convergence_tol: s.convergence_tol,
            validation_fraction: s.validation_fraction,
            local_iters: s.local.max_iters,
            full_tree: false,
            kmeans_iters: 30,
            kmeans_restarts: crate::training::DEFAULT_KMEANS_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub r_td: f64,
    pub r_dp: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { r_td: 0.9, r_dp: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub prune: f64,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.message().to_string()))?;
        if config.corpus.is_none() && config.ingest.is_none() {
            return Err(PipelineError::Config("missing field `corpus` (or an [ingest] section)".into()));
        }
        if config.corpus.is_some() && config.ingest.is_some() {
            return Err(PipelineError::Config("give either `corpus` or an [ingest] section, not both".into()));
        }
        Ok(config)
    }

    pub fn hyper(&self) -> Hyperparameters {
        let m = &self.model;
        Hyperparameters { eta: m.eta, alpha: m.alpha, beta: m.beta, gamma1: m.gamma1, gamma2: m.gamma2, truncation: m.truncation.clone() }
    }

    pub fn schedule(&self) -> TrainSchedule {
        let t = &self.train;
        let base = InferenceConfig::default().with_iters(t.local_iters);
        TrainSchedule {
            batch_size: t.batch_size,
            kappa: t.kappa,
            tau: t.tau,
            max_epochs: t.max_epochs,
            convergence_window: t.convergence_window,
            convergence_tol: t.convergence_tol,
            validation_fraction: t.validation_fraction,
            local: if t.full_tree { base.full_tree() } else { base },
        }
    }

    pub fn kmeans_spec(&self) -> KMeansTreeSpec {
        KMeansTreeSpec {
            max_iters: self.train.kmeans_iters,
            restarts: self.train.kmeans_restarts,
            ..KMeansTreeSpec::for_hyper(&self.hyper(), self.seeds().kmeans)
        }
    }

    pub fn split(&self) -> SplitSpec {
        SplitSpec { r_td: self.eval.r_td, r_dp: self.eval.r_dp, seed: self.seeds().split }
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            root: self.seed,
            split: derive_seed(self.seed, &[1]),
            train: derive_seed(self.seed, &[2]),
            kmeans: derive_seed(self.seed, &[3]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub root: u64,
    pub split: u64,
    pub train: u64,
    pub kmeans: u64,
}

#[derive(Debug, Clone, Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    seeds: Seeds,
    vocab_hash: String,
    documents: usize,
    train_documents: usize,
    test_documents: usize,
    config: &'a PipelineConfig,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub output_dir: PathBuf,
    pub eval: EvalReport,
    pub train: TrainReport,
}

/// Runs the pipeline described by the TOML file at `config_path`. Relative
/// paths in the file resolve against its directory; `output_override`
/// replaces the configured output directory.
pub fn run_pipeline(config_path: &Path, output_override: Option<&Path>) -> Result<PipelineOutcome, PipelineError> {
    let bytes = stage("config", fs::read(config_path))?;
    let text = stage("config", String::from_utf8(bytes.clone()))?;
    let config = PipelineConfig::from_toml(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out = match output_override {
        Some(p) => p.to_path_buf(),
        None => base.join(config.output.clone().unwrap_or_else(|| PathBuf::from("nhdp-out"))),
    };
    stage("output", fs::create_dir_all(&out))?;

    let corpus = match (&config.corpus, &config.ingest) {
        (Some(path), _) => {
            let file = stage("corpus", fs::File::open(base.join(path)))?;
            stage("corpus", Corpus::read_from(BufReader::new(file)))?
        }
        (None, Some(section)) => {
            let options = IngestOptions {
                gap_secs: section.gap_secs,
                window: section.window,
                min_tail: section.min_tail,
                min_count: section.min_count,
                max_doc_fraction: section.max_doc_fraction,
            };
            let readers = stage("ingest", section.inputs.iter().map(|p| fs::File::open(base.join(p)).map(BufReader::new)).collect::<Result<Vec<_>, _>>())?;
            let (corpus, summary) = stage("ingest", ingest_logs(readers, &options))?;
            log::info!("ingested {summary:?}");
            corpus
        }
        (None, None) => unreachable!("validated in from_toml"),
    };
    stage("corpus", fs::write(out.join("corpus.txt"), corpus.to_text()))?;

    let split = config.split();
    let (train_set, test_set) = stage("split", split_train_test(&corpus, &split))?;
    let hyper = config.hyper();
    let schedule = config.schedule();
    let trained = stage("train", train(&train_set, &hyper, &config.kmeans_spec(), &schedule, config.seeds().train))?;
    let vocab_hash = corpus.vocab.fingerprint();
    stage("train", ModelFile::from_tree(&trained.tree, &vocab_hash).save(&out.join("model.json")))?;

    let (pairs, skipped) = stage("eval", heldout_pairs(&test_set.term_vectors(), split.r_dp, split.seed))?;
    let report = stage("eval", predictive_log_likelihood(&TreePredictor::new(&trained.tree, schedule.local.clone()), &pairs))?;
    stage("eval", fs::write(out.join("eval.csv"), eval_csv(&report, split.r_td, split.r_dp, skipped)))?;

    let dot = stage("export", export_dot(&trained.tree, Some(&corpus.vocab), config.export.prune))?;
    stage("export", fs::write(out.join("tree.dot"), dot))?;

    let provenance = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: hex::encode(Sha256::digest(&bytes)),
        seeds: config.seeds(),
        vocab_hash,
        documents: corpus.len(),
        train_documents: train_set.len(),
        test_documents: test_set.len(),
        config: &config,
    };
    let mut prov = serde_json::to_string_pretty(&provenance).expect("provenance serializes");
    prov.push('\n');
    stage("provenance", fs::write(out.join("provenance.json"), prov))?;

    Ok(PipelineOutcome { output_dir: out, eval: report, train: trained.report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_corpus_names_the_field() {
        let err = PipelineConfig::from_toml("seed = 1\n").unwrap_err().to_string();
        assert!(err.contains("`corpus`"), "{err}");
        let err = PipelineConfig::from_toml("corpus = \"c.txt\"\n").unwrap_err().to_string();
        assert!(err.contains("`seed`"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml("seed = 1\ncorpus = \"c\"\n[train]\nbatchsize = 3\n").is_err());
        assert!(PipelineConfig::from_toml("seed = 1\ncorpus = \"c\"\nextra = 2\n").is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let c = PipelineConfig::from_toml("seed = 3\ncorpus = \"c\"\n[model]\nbeta = 0.25\ntruncation = [4, 2]\n[train]\nbatch_size = 16\nfull_tree = true\n").unwrap();
        assert_eq!(c.hyper().beta, 0.25);
        assert_eq!(c.hyper().truncation, vec![4, 2]);
        assert_eq!(c.hyper().eta, Hyperparameters::default().eta);
        assert_eq!(c.schedule().batch_size, 16);
        assert!(c.schedule().local.select_width.is_none());
        assert_eq!(c.kmeans_spec().branching, vec![4, 2]);
    }
}
