use std::io::{BufRead, Write};

use super::{to_term_vector, IngestError, TermVector, Vocabulary, WindowDoc};

const MAGIC: &str = "#nhdp-corpus v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDoc {
    pub id: String,
    pub terms: TermVector,
}

/// A vocabulary plus the term vectors of every retained document.
///
/// On disk this is plain text: a magic line, `vocab <n>` followed by one
/// `index<TAB>token<TAB>total_count<TAB>doc_frequency` line per token, then
/// `docs <m>` followed by one `doc_id index:count ...` line per document.
/// Tokens and ids escape `\`, tab, newline, carriage return and space.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub docs: Vec<CorpusDoc>,
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            ' ' => out.push_str("\\s"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            's' => ' ',
            _ => return None,
        });
    }
    Some(out)
}

/// Converts windows to term vectors, dropping windows left empty by the
/// vocabulary filter.
pub fn build_corpus(windows: &[WindowDoc], vocab: Vocabulary) -> Corpus {
    let mut docs = Vec::with_capacity(windows.len());
    let mut dropped = 0usize;
    for w in windows {
        let terms = to_term_vector(w, &vocab);
        if terms.is_empty() {
            dropped += 1;
            continue;
        }
        let s = &w.source;
        docs.push(CorpusDoc {
            id: format!("{}/{}/{}", s.user_id, s.session_index, s.window_index),
            terms,
        });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} window(s) with no in-vocabulary tokens");
    }
    Corpus { vocab, docs }
}

fn syntax(line: usize, msg: impl Into<String>) -> IngestError {
    IngestError::CorpusSyntax { line, msg: msg.into() }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn term_vectors(&self) -> Vec<TermVector> {
        self.docs.iter().map(|d| d.terms.clone()).collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "vocab {}", self.vocab.len())?;
        for (i, t) in self.vocab.tokens().iter().enumerate() {
            writeln!(out, "{i}\t{}\t{}\t{}", escape_field(t), self.vocab.total_count(i), self.vocab.doc_frequency(i))?;
        }
        writeln!(out, "docs {}", self.docs.len())?;
        for d in &self.docs {
            write!(out, "{}", escape_field(&d.id))?;
            for &(i, c) in d.terms.entries() {
                write!(out, " {i}:{c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("corpus text is utf-8")
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, IngestError> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String), IngestError> {
            match lines.next() {
                Some((n, line)) => Ok((n, line?)),
                None => Err(syntax(0, format!("unexpected end of file, expected {what}"))),
            }
        };
        let (n, magic) = next("header")?;
        if magic.trim_end() != MAGIC {
            return Err(syntax(n, "missing corpus header"));
        }
        let count = |n: usize, line: &str, key: &str| -> Result<usize, IngestError> {
            line.strip_prefix(key)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| syntax(n, format!("expected `{key}<count>`")))
        };
        let (n, line) = next("vocab count")?;
        let vocab_len = count(n, &line, "vocab ")?;
        let mut tokens = Vec::with_capacity(vocab_len);
        let mut totals = Vec::with_capacity(vocab_len);
        let mut dfs = Vec::with_capacity(vocab_len);
        for expected in 0..vocab_len {
            let (n, line) = next("vocabulary entry")?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(syntax(n, "vocabulary entry needs 4 tab-separated fields"));
            }
            let index: usize = fields[0].parse().map_err(|_| syntax(n, "bad index"))?;
            if index != expected {
                return Err(syntax(n, format!("expected index {expected}, found {index}")));
            }
            tokens.push(unescape_field(fields[1]).ok_or_else(|| syntax(n, "bad escape in token"))?);
            totals.push(fields[2].parse().map_err(|_| syntax(n, "bad total count"))?);
            dfs.push(fields[3].parse().map_err(|_| syntax(n, "bad document frequency"))?);
        }
        let vocab = Vocabulary::from_columns(tokens, dfs, totals)?;
        let (n, line) = next("docs count")?;
        let doc_len = count(n, &line, "docs ")?;
        let mut docs = Vec::with_capacity(doc_len);
        for _ in 0..doc_len {
            let (n, line) = next("document")?;
            let mut parts = line.split(' ');
            let id = parts
                .next()
                .and_then(unescape_field)
                .ok_or_else(|| syntax(n, "bad document id"))?;
            let mut counts = Vec::new();
            for p in parts.filter(|p| !p.is_empty()) {
                let (i, c) = p.split_once(':').ok_or_else(|| syntax(n, format!("bad entry {p:?}")))?;
                let i: usize = i.parse().map_err(|_| syntax(n, format!("bad index {i:?}")))?;
                let c: u32 = c.parse().map_err(|_| syntax(n, format!("bad count {c:?}")))?;
                if i >= vocab.len() || c == 0 {
                    return Err(syntax(n, format!("entry {p:?} out of range")));
                }
                counts.push((i, c));
            }
            docs.push(CorpusDoc {
                id,
                terms: TermVector::from_counts(counts),
            });
        }
        Ok(Self { vocab, docs })
    }
}
