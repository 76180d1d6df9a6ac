use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use nhdp_core::context::exception_context;
use nhdp_core::evalkit::{
    curve_csv, eval_csv, heldout_pairs, perplexity_curve, predictive_log_likelihood, sensitivity_sweep, split_train_test, sweep_csv, SplitSpec,
    SweepParam, TreePredictor,
};
use nhdp_core::export::{export_tree, ExportFormat};
use nhdp_core::ingest::{ingest_logs, Corpus, IngestOptions};
use nhdp_core::model::{Hyperparameters, InferenceConfig, ModelFile, TopicTree};
use nhdp_core::pipeline::run_pipeline;
use nhdp_core::synthgen::{sample_corpus, sample_global_tree};
use nhdp_core::training::{train_with_progress, KMeansTreeSpec, ProgressRecord, TrainSchedule};

#[derive(Parser)]
#[command(name = "nhdp", version, about = "Topic hierarchies of interaction logs with embedded stack traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus from JSON-lines trace logs.
    Ingest(IngestArgs),
    /// Sample a synthetic corpus and its ground truth.
    Synth(SynthArgs),
    /// Fit a topic tree; prints one progress line per mini-batch.
    #[command(after_help = "Progress columns (tab-separated): epoch, batch, step, rho, batch_elbo, validation_elbo")]
    Train(TrainArgs),
    /// Held-out perplexity of a model on the test side of a split.
    #[command(after_help = concat!("CSV columns: ", "r_td,r_dp,test_docs,skipped_docs,heldout_tokens,floor_hits,log_likelihood,perplexity,stddev"))]
    Eval(EvalArgs),
    /// Perplexity against the share of training documents seen.
    #[command(after_help = concat!("CSV columns: ", "fraction,mean_perplexity,stddev_perplexity,runs,failed_runs"))]
    Curve(CurveArgs),
    /// Active topics per document and level across a hyperparameter grid.
    #[command(after_help = "CSV columns: param,value,beta,gamma1,gamma2,docs, then level<l>_mean,level<l>_stddev for l = 1 (root) .. depth + 1")]
    Sweep(SweepArgs),
    /// Topic hierarchy around a token, usually an exception id.
    Context(ContextArgs),
    /// Render a model as DOT or JSON.
    Export(ExportArgs),
    /// Run ingest or load, train, evaluate and export from a TOML config.
    Run(RunArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Log files (JSON lines).
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 300)]
    gap_secs: u64,
    #[arg(long, default_value_t = 50)]
    window: usize,
    /// Trailing windows shorter than this merge into the previous one.
    #[arg(long, default_value_t = 5)]
    min_tail: usize,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long = "max-doc-frac", default_value_t = 0.5)]
    max_doc_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma2: f64,
    /// Maximum children per node at each depth, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "20,10,5")]
    trunc: Vec<usize>,
}

impl HyperArgs {
    fn hyper(&self) -> Hyperparameters {
        Hyperparameters { eta: self.eta, alpha: self.alpha, beta: self.beta, gamma1: self.gamma1, gamma2: self.gamma2, truncation: self.trunc.clone() }
    }
}

#[derive(Args, Clone)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 0.6)]
    kappa: f64,
    #[arg(long, default_value_t = 64.0)]
    tau: f64,
    #[arg(long, default_value_t = 20)]
    max_epochs: usize,
    /// Per-document coordinate-ascent sweeps.
    #[arg(long, default_value_t = 30)]
    local_iters: usize,
    /// Let every document use the whole tree instead of a selected subtree.
    #[arg(long)]
    full_tree: bool,
    /// Seeded K-means restarts per split during initialization.
    #[arg(long, default_value_t = nhdp_core::training::DEFAULT_KMEANS_RESTARTS)]
    kmeans_restarts: usize,
}

impl ScheduleArgs {
    fn schedule(&self) -> TrainSchedule {
        let local = InferenceConfig::default().with_iters(self.local_iters);
        TrainSchedule {
            batch_size: self.batch,
            kappa: self.kappa,
            tau: self.tau,
            max_epochs: self.max_epochs,
            local: if self.full_tree { local.full_tree() } else { local },
            ..TrainSchedule::default()
        }
    }

    fn spec(&self, hyper: &Hyperparameters, seed: u64) -> KMeansTreeSpec {
        KMeansTreeSpec { restarts: self.kmeans_restarts, ..KMeansTreeSpec::for_hyper(hyper, seed) }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    vocab: usize,
    #[arg(long, default_value_t = 5000)]
    docs: usize,
    #[arg(long, default_value_t = 50)]
    words: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    seed: u64,
    /// Output directory for corpus.txt and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    seed: u64,
    /// Train only on the training side of the split that `eval --r-td <R> --seed <S>` holds out.
    #[arg(long, requires = "split_seed")]
    r_td: Option<f64>,
    /// Split seed paired with `--r-td` (the `--seed` given to `eval`).
    #[arg(long, requires = "r_td")]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    r_td: f64,
    #[arg(long, default_value_t = 0.9)]
    r_dp: f64,
    #[arg(long)]
    seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    fractions: String,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0.9)]
    r_td: f64,
    #[arg(long, default_value_t = 0.9)]
    r_dp: f64,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `beta` or `gamma1`.
    #[arg(long)]
    param: String,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    grid: String,
    /// For gamma1 sweeps, gamma2 = gamma_sum - gamma1.
    #[arg(long, default_value_t = 2.0)]
    gamma_sum: f64,
    /// Train and count on a seeded subset of this many documents.
    #[arg(long)]
    subset: Option<usize>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ContextArgs {
    token: String,
    #[arg(long)]
    model: PathBuf,
    /// Corpus the model was trained on (supplies the vocabulary).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus for word labels; without it words show as `#index`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "dot")]
    format: String,
    /// Drop nodes whose subtree usage mass is below this.
    #[arg(long, default_value_t = 0.0)]
    prune: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `start:stop:step` (inclusive of `stop`) or `a,b,c`.
fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 1 {
        return s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?} in {s:?}"))).collect();
    }
    let [start, stop, step] = parts[..] else {
        bail!("range {s:?} must look like start:stop:step");
    };
    let (start, stop, step): (f64, f64, f64) = (start.parse()?, stop.parse()?, step.parse()?);
    if !(step > 0.0) || stop < start {
        bail!("range {s:?} needs a positive step and stop >= start");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    Corpus::read_from(BufReader::new(file)).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_model(path: &Path, corpus: Option<&Corpus>) -> Result<TopicTree> {
    let hash = corpus.map(|c| c.vocab.fingerprint());
    let (_, tree) = ModelFile::load(path, hash.as_deref()).with_context(|| format!("loading model {}", path.display()))?;
    Ok(tree)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest(a) => {
            let options = IngestOptions { gap_secs: a.gap_secs, window: a.window, min_tail: a.min_tail, min_count: a.min_count, max_doc_fraction: a.max_doc_fraction };
            let readers = a
                .inputs
                .iter()
                .map(|p| fs::File::open(p).map(BufReader::new).with_context(|| format!("opening {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let (corpus, summary) = ingest_logs(readers, &options)?;
            info!(
                "{} events ({} malformed lines), {} sessions, {} windows, {} documents, {} words",
                summary.events,
                summary.malformed_lines,
                summary.sessions,
                summary.windows,
                summary.documents,
                corpus.vocab.len()
            );
            emit(Some(&a.out), &corpus.to_text())?;
        }
        Command::Synth(a) => {
            let hyper = a.hyper.hyper();
            hyper.validate()?;
            let truth = sample_global_tree(&hyper, a.vocab, a.seed);
            let synth = sample_corpus(&truth, &hyper, a.docs, a.words, a.seed)?;
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            emit(Some(&a.out.join("corpus.txt")), &synth.corpus.to_text())?;
            emit(Some(&a.out.join("truth.json")), &synth.truth.to_json())?;
            info!("{} documents over {} of {} words, {} true nodes", synth.corpus.len(), synth.corpus.vocab.len(), a.vocab, synth.truth.nodes.len());
        }
        Command::Train(a) => {
            let mut corpus = read_corpus(&a.corpus)?;
            if let (Some(r_td), Some(seed)) = (a.r_td, a.split_seed) {
                // r_dp does not affect the document split.
                corpus = split_train_test(&corpus, &SplitSpec { r_td, r_dp: 0.5, seed })?.0;
            }
            let hyper = a.hyper.hyper();
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{}", ProgressRecord::TSV_HEADER)?;
            let trained = train_with_progress(&corpus, &hyper, &a.schedule.spec(&hyper, a.seed), &a.schedule.schedule(), a.seed, &mut |r| {
                let _ = writeln!(stdout, "{}", r.to_tsv());
            })?;
            ModelFile::from_tree(&trained.tree, &corpus.vocab.fingerprint()).save(&a.out)?;
            info!("{} nodes, {} epochs, converged: {}", trained.tree.len(), trained.report.epochs, trained.report.converged);
        }
        Command::Eval(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let tree = load_model(&a.model, Some(&corpus))?;
            let split = SplitSpec { r_td: a.r_td, r_dp: a.r_dp, seed: a.seed };
            let (_, test) = split_train_test(&corpus, &split)?;
            let (pairs, skipped) = heldout_pairs(&test.term_vectors(), a.r_dp, a.seed)?;
            let report = predictive_log_likelihood(&TreePredictor::new(&tree, InferenceConfig::default()), &pairs)?;
            emit(a.out.as_deref(), &eval_csv(&report, a.r_td, a.r_dp, skipped))?;
        }
        Command::Curve(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let hyper = a.hyper.hyper();
            let fractions = parse_range(&a.fractions)?;
            let split = SplitSpec { r_td: a.r_td, r_dp: a.r_dp, seed: a.seed };
            let points = perplexity_curve(&corpus, &split, &fractions, a.runs, &hyper, &a.schedule.spec(&hyper, a.seed), &a.schedule.schedule(), a.seed)?;
            emit(a.out.as_deref(), &curve_csv(&points))?;
        }
        Command::Sweep(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let param = match a.param.as_str() {
                "beta" => SweepParam::Beta,
                "gamma1" => SweepParam::Gamma1 { sum: a.gamma_sum },
                other => bail!("unknown sweep parameter {other:?} (expected beta or gamma1)"),
            };
            let grid = parse_range(&a.grid)?;
            let hyper = a.hyper.hyper();
            let points = sensitivity_sweep(&corpus, &hyper, param, &grid, &a.schedule.spec(&hyper, a.seed), &a.schedule.schedule(), a.subset, a.seed)?;
            emit(a.out.as_deref(), &sweep_csv(&points))?;
        }
        Command::Context(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let tree = load_model(&a.model, Some(&corpus))?;
            let ctx = exception_context(&tree, &corpus, &a.token, a.top_k)?;
            emit(None, &if a.json { ctx.to_json() } else { ctx.to_text() })?;
        }
        Command::Export(a) => {
            let corpus = a.corpus.as_deref().map(read_corpus).transpose()?;
            let tree = load_model(&a.model, corpus.as_ref())?;
            let format: ExportFormat = a.format.parse()?;
            emit(a.out.as_deref(), &export_tree(&tree, corpus.as_ref().map(|c| &c.vocab), format, a.prune)?)?;
        }
        Command::Run(a) => {
            let outcome = run_pipeline(&a.config, a.out.as_deref())?;
            info!("wrote {}; held-out perplexity {:.4}", outcome.output_dir.display(), outcome.eval.perplexity);
        }
    }
    Ok(())
}
