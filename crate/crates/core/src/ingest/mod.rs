//! Corpus formation: interaction logs become sessions, fixed-length message
//! windows, a filtered vocabulary, and sparse term-frequency documents.

mod corpus;
mod event;
mod session;
mod stacktrace;
mod vocab;

pub use corpus::{build_corpus, escape_field, unescape_field, Corpus, CorpusDoc};
pub use event::{parse_log, Event, EventKind, ParsedLog};
pub use session::{event_token, sessionize, windowize, Session, WindowDoc, WindowSource};
pub use stacktrace::{canonicalize_stack_trace, StackTraceToken};
pub use vocab::{build_vocabulary, to_term_vector, TermVector, Vocabulary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{malformed} of {total} lines are malformed; this does not look like a trace log")]
    Format { malformed: usize, total: usize },
    #[error("vocabulary is empty after filtering (min_count={min_count}, max_doc_fraction={max_doc_fraction})")]
    EmptyVocabulary { min_count: u64, max_doc_fraction: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus file line {line}: {msg}")]
    CorpusSyntax { line: usize, msg: String },
}

/// Default inter-event gap (seconds) that closes a session.
pub const DEFAULT_GAP_SECS: u64 = 300;
/// Default number of messages per window.
pub const DEFAULT_WINDOW: usize = 50;
/// A trailing window shorter than this is merged into its predecessor.
pub const DEFAULT_MIN_TAIL: usize = 5;
pub const DEFAULT_MIN_COUNT: u64 = 5;
pub const DEFAULT_MAX_DOC_FRACTION: f64 = 0.5;

/// Settings for turning raw logs into a corpus.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub gap_secs: u64,
    pub window: usize,
    pub min_tail: usize,
    pub min_count: u64,
    pub max_doc_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            gap_secs: DEFAULT_GAP_SECS,
            window: DEFAULT_WINDOW,
            min_tail: DEFAULT_MIN_TAIL,
            min_count: DEFAULT_MIN_COUNT,
            max_doc_fraction: DEFAULT_MAX_DOC_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestSummary {
    pub events: usize,
    pub malformed_lines: usize,
    pub sessions: usize,
    pub windows: usize,
    pub documents: usize,
}

/// Parses every log, then sessionizes, windows and vectorizes the union.
pub fn ingest_logs<R: std::io::BufRead>(logs: impl IntoIterator<Item = R>, options: &IngestOptions) -> Result<(Corpus, IngestSummary), IngestError> {
    let mut events = Vec::new();
    let mut summary = IngestSummary::default();
    for log in logs {
        let parsed = parse_log(log)?;
        summary.malformed_lines += parsed.malformed_lines.len();
        events.extend(parsed.events);
    }
    summary.events = events.len();
    let sessions = sessionize(&events, options.gap_secs)?;
    summary.sessions = sessions.len();
    let mut windows = Vec::new();
    for s in &sessions {
        windows.extend(windowize(s, options.window, options.min_tail)?);
    }
    summary.windows = windows.len();
    let vocab = build_vocabulary(&windows, options.min_count, options.max_doc_fraction)?;
    let corpus = build_corpus(&windows, vocab);
    summary.documents = corpus.len();
    Ok((corpus, summary))
}
