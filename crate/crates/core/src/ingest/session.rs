use std::collections::BTreeMap;

use super::{canonicalize_stack_trace, Event, EventKind, IngestError};

/// A maximal run of one user's events with no gap above the threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    /// Position of this session among the user's sessions.
    pub index: usize,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WindowSource {
    pub user_id: String,
    pub session_index: usize,
    pub window_index: usize,
}

/// A window of consecutive messages: one document of the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowDoc {
    pub tokens: Vec<String>,
    pub source: WindowSource,
}

/// The vocabulary word an event contributes. Stack traces become their
/// canonical id; other payloads are used verbatim with whitespace folded.
pub fn event_token(event: &Event) -> String {
    match event.kind {
        EventKind::StackTrace => canonicalize_stack_trace(&event.payload).canonical_id,
        EventKind::Command | EventKind::AppEvent => {
            event.payload.split_whitespace().collect::<Vec<_>>().join("_")
        }
    }
}

/// Groups events per user (users in lexicographic order) and splits each
/// user's time-ordered stream wherever consecutive events are more than
/// `gap_threshold_secs` apart.
pub fn sessionize(events: &[Event], gap_threshold_secs: u64) -> Result<Vec<Session>, IngestError> {
    if gap_threshold_secs == 0 {
        return Err(IngestError::Config("gap threshold must be positive".into()));
    }
    let gap_ms = gap_threshold_secs.saturating_mul(1000);
    let mut per_user: BTreeMap<&str, Vec<&Event>> = BTreeMap::new();
    for e in events {
        per_user.entry(e.user_id.as_str()).or_default().push(e);
    }

    let mut sessions = Vec::new();
    for (user, mut stream) in per_user {
        // Stable: equal timestamps keep file order.
        stream.sort_by_key(|e| e.timestamp_ms);
        let mut current: Vec<Event> = Vec::new();
        let mut index = 0;
        for e in stream {
            if let Some(last) = current.last() {
                if e.timestamp_ms - last.timestamp_ms > gap_ms {
                    sessions.push(Session {
                        user_id: user.to_string(),
                        index,
                        events: std::mem::take(&mut current),
                    });
                    index += 1;
                }
            }
            current.push(e.clone());
        }
        if !current.is_empty() {
            sessions.push(Session {
                user_id: user.to_string(),
                index,
                events: current,
            });
        }
    }
    Ok(sessions)
}

/// Cuts a session into consecutive windows of `window` tokens. A trailing
/// window shorter than `min_tail` tokens is appended to the previous window
/// instead of standing alone.
pub fn windowize(session: &Session, window: usize, min_tail: usize) -> Result<Vec<WindowDoc>, IngestError> {
    if window == 0 {
        return Err(IngestError::Config("window size must be at least 1".into()));
    }
    let tokens: Vec<String> = session.events.iter().map(event_token).collect();
    let mut chunks: Vec<Vec<String>> = tokens.chunks(window).map(<[String]>::to_vec).collect();
    if chunks.len() >= 2 && chunks.last().map_or(false, |c| c.len() < min_tail) {
        let tail = chunks.pop().unwrap();
        chunks.last_mut().unwrap().extend(tail);
    }
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(i, tokens)| WindowDoc {
            tokens,
            source: WindowSource {
                user_id: session.user_id.clone(),
                session_index: session.index,
                window_index: i,
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(ts_secs: u64, user: &str, name: &str) -> Event {
        Event::new(ts_secs * 1000, user, EventKind::Command, name)
    }

    fn session_of(n: usize) -> Session {
        Session {
            user_id: "u".into(),
            index: 0,
            events: (0..n).map(|i| cmd(i as u64, "u", &format!("C{i}"))).collect(),
        }
    }

    #[test]
    fn splits_on_long_gaps() {
        let events = vec![cmd(0, "u1", "A"), cmd(10, "u1", "B"), cmd(400, "u1", "C")];
        let sessions = sessionize(&events, 300).unwrap();
        let stamps: Vec<Vec<u64>> = sessions
            .iter()
            .map(|s| s.events.iter().map(|e| e.timestamp_ms / 1000).collect())
            .collect();
        assert_eq!(stamps, vec![vec![0, 10], vec![400]]);
        assert_eq!(sessions[1].index, 1);
    }

    #[test]
    fn gap_equal_to_threshold_does_not_split() {
        let events = vec![cmd(0, "u", "A"), cmd(300, "u", "B")];
        assert_eq!(sessionize(&events, 300).unwrap().len(), 1);
    }

    #[test]
    fn users_are_independent() {
        let events = vec![cmd(0, "a", "X"), cmd(1, "b", "Y"), cmd(2, "a", "Z"), cmd(3, "b", "W")];
        let sessions = sessionize(&events, 300).unwrap();
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].user_id, "a");
        assert_eq!(sessions[0].events.iter().map(|e| e.payload.as_str()).collect::<Vec<_>>(), ["X", "Z"]);
        assert_eq!(sessions[1].user_id, "b");
    }

    #[test]
    fn empty_input_gives_no_sessions() {
        assert!(sessionize(&[], 300).unwrap().is_empty());
        assert!(sessionize(&[], 0).is_err());
    }

    #[test]
    fn window_sizes_follow_fixed_length() {
        let sizes = |n, w| -> Vec<usize> {
            windowize(&session_of(n), w, 5).unwrap().iter().map(|d| d.tokens.len()).collect()
        };
        assert_eq!(sizes(120, 50), vec![50, 50, 20]);
        assert_eq!(sizes(50, 50), vec![50]);
        assert_eq!(sizes(103, 50), vec![50, 53]);
        assert_eq!(sizes(3, 50), vec![3]);
    }

    #[test]
    fn stack_traces_become_canonical_tokens() {
        let mut s = session_of(2);
        s.events.push(Event::new(5, "u", EventKind::StackTrace, "E: boom\n at A.b() in C:\\a.cs:line 3"));
        s.events.push(Event::new(6, "u", EventKind::AppEvent, "Starting  Virtual Controller"));
        let docs = windowize(&s, 50, 5).unwrap();
        assert!(docs[0].tokens[2].starts_with("E@"));
        assert_eq!(docs[0].tokens[3], "Starting_Virtual_Controller");
    }
}
