use nhdp_core::ingest::{ingest_logs, Corpus, IngestOptions};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Line {
    user: u8,
    dt: u64,
    kind: u8,
    payload: String,
}

fn line() -> impl Strategy<Value = Line> {
    (0u8..4, prop_oneof![0u64..1_000, 1_000u64..400_000], 0u8..6, "[a-zA-Z][a-zA-Z \t\\\\\"]{0,11}")
        .prop_map(|(user, dt, kind, payload)| Line { user, dt, kind, payload })
}

fn render(lines: &[Line], junk_every: usize) -> String {
    let mut clocks = [0u64; 4];
    let mut out = String::new();
    for (i, l) in lines.iter().enumerate() {
        clocks[l.user as usize] += l.dt;
        let (kind, payload) = match l.kind {
            0 => ("stack_trace", format!("X.Err: {}\n   at X.Y.Z() in f.cs:line {}", l.payload, i)),
            1 => ("event", l.payload.clone()),
            _ => ("command", l.payload.clone()),
        };
        out.push_str(&format!(
            "{{\"ts\":{},\"user\":\"u{}\",\"kind\":\"{kind}\",\"payload\":{}}}\n",
            clocks[l.user as usize],
            l.user,
            serde_json::to_string(&payload).unwrap()
        ));
        if junk_every > 0 && i % junk_every == 0 {
            out.push_str("{not json\n");
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn corpus_text_round_trips(lines in prop::collection::vec(line(), 1..300), window in 1usize..12) {
        let log = render(&lines, 0);
        let opts = IngestOptions { window, min_tail: 1, min_count: 1, max_doc_fraction: 1.0, ..Default::default() };
        let (corpus, summary) = ingest_logs([log.as_bytes()], &opts).unwrap();
        prop_assert_eq!(summary.events, lines.len());
        prop_assert_eq!(summary.malformed_lines, 0);
        // Nothing is filtered, so every event survives as one token.
        let tokens: u64 = corpus.docs.iter().map(|d| d.terms.length()).sum();
        prop_assert_eq!(tokens, lines.len() as u64);
        prop_assert_eq!(corpus.len(), summary.windows);
        let back = Corpus::read_from(corpus.to_text().as_bytes()).unwrap();
        prop_assert_eq!(back, corpus);
    }

    #[test]
    fn malformed_minority_is_skipped(lines in prop::collection::vec(line(), 10..200)) {
        let clean = ingest_logs([render(&lines, 0).as_bytes()], &IngestOptions::default()).map(|(c, _)| c);
        let noisy = ingest_logs([render(&lines, 5).as_bytes()], &IngestOptions::default());
        match (clean, noisy) {
            (Ok(a), Ok((b, summary))) => {
                prop_assert_eq!(a, b);
                prop_assert_eq!(summary.malformed_lines, lines.len().div_ceil(5));
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "clean {:?} vs noisy {:?}", a.is_ok(), b.is_ok()),
        }
    }
}
