use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};

/// A stack trace reduced to the parts that identify the fault.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StackTraceToken {
    pub exception_type: String,
    pub frame_signatures: Vec<String>,
    /// `<exception type>@<16 hex digits>`; the vocabulary token for the trace.
    pub canonical_id: String,
}

const FALLBACK_TYPE: &str = "UnparsedTrace";

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Za-z_][\w.$`+<>]*)(?::|$)").unwrap());
static FRAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^at\s+(.+)$").unwrap());
// " in C:\src\File.cs:line 12" and similar source-location suffixes.
static CSHARP_LOCATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+in\s+\S.*$").unwrap());
// "(File.java:123)", "(Native Method)", "(Unknown Source)"
static JAVA_LOCATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\([^()]*(?:\.\w+:\d+|Source|Method)\)").unwrap());
static HEX_ADDRESS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\+?\[?0x[0-9a-fA-F]+\]?").unwrap());
static LINE_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?::line\s*\d+|:\d+(?::\d+)?)").unwrap());
static PATH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?:[A-Za-z]:\\|/)[^\s()"']*[\\/][^\s()"']*"#).unwrap());
static WHITESPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

fn scrub(text: &str) -> String {
    let text = HEX_ADDRESS.replace_all(text, "");
    let text = PATH.replace_all(&text, "");
    let text = LINE_NUMBER.replace_all(&text, "");
    WHITESPACE.replace_all(text.trim(), " ").into_owned()
}

fn normalize_frame(frame: &str) -> String {
    let frame = CSHARP_LOCATION.replace(frame, "");
    let frame = JAVA_LOCATION.replace_all(&frame, "()");
    scrub(&frame)
}

fn digest_hex(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Reduces a raw trace to its exception type and ordered frame names.
/// File paths, line numbers, hex addresses and the exception message are
/// dropped, so recurrences of one fault map to one token. Text that does not
/// look like a trace hashes its normalized form instead.
pub fn canonicalize_stack_trace(raw: &str) -> StackTraceToken {
    let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let header = lines.first().and_then(|h| HEADER.captures(h)).map(|c| c[1].to_string());
    let frames: Vec<String> = lines
        .iter()
        .skip(1)
        .filter_map(|l| FRAME.captures(l).map(|c| normalize_frame(&c[1])))
        .filter(|f| !f.is_empty())
        .collect();

    match header {
        Some(exception_type) if !frames.is_empty() => {
            let mut parts = vec![exception_type.as_str()];
            parts.extend(frames.iter().map(String::as_str));
            let canonical_id = format!("{exception_type}@{}", digest_hex(&parts));
            StackTraceToken {
                exception_type,
                frame_signatures: frames,
                canonical_id,
            }
        }
        _ => {
            let normalized: Vec<String> = lines.iter().map(|l| scrub(l)).collect();
            let parts: Vec<&str> = normalized.iter().map(String::as_str).collect();
            StackTraceToken {
                exception_type: FALLBACK_TYPE.to_string(),
                frame_signatures: Vec::new(),
                canonical_id: format!("{FALLBACK_TYPE}@{}", digest_hex(&parts)),
            }
        }
    }
}
