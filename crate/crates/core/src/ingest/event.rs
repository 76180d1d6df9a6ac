use std::io::BufRead;

use serde::Deserialize;

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Command,
    AppEvent,
    StackTrace,
}

/// One log record. `timestamp_ms` is milliseconds since the epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub timestamp_ms: u64,
    pub user_id: String,
    pub kind: EventKind,
    pub payload: String,
}

impl Event {
    pub fn new(timestamp_ms: u64, user_id: impl Into<String>, kind: EventKind, payload: impl Into<String>) -> Self {
        Self {
            timestamp_ms,
            user_id: user_id.into(),
            kind,
            payload: payload.into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct ParsedLog {
    pub events: Vec<Event>,
    /// 1-based line numbers of lines that could not be decoded.
    pub malformed_lines: Vec<usize>,
}

#[derive(Deserialize)]
struct RawEvent {
    ts: i64,
    user: String,
    kind: String,
    payload: String,
}

fn decode_line(line: &str) -> Option<Event> {
    let raw: RawEvent = serde_json::from_str(line).ok()?;
    let kind = match raw.kind.as_str() {
        "command" => EventKind::Command,
        "event" | "app_event" => EventKind::AppEvent,
        "stack_trace" => EventKind::StackTrace,
        _ => return None,
    };
    if raw.ts < 0 || raw.payload.trim().is_empty() {
        return None;
    }
    Some(Event {
        timestamp_ms: raw.ts as u64,
        user_id: raw.user,
        kind,
        payload: raw.payload,
    })
}

/// Reads the JSON-lines trace format. Blank lines are ignored; undecodable
/// lines are collected in `malformed_lines`. More than half of the non-blank
/// lines being malformed is reported as a format error.
pub fn parse_log<R: BufRead>(reader: R) -> Result<ParsedLog, IngestError> {
    let mut parsed = ParsedLog::default();
    let mut total = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match decode_line(&line) {
            Some(event) => parsed.events.push(event),
            None => parsed.malformed_lines.push(idx + 1),
        }
    }
    let malformed = parsed.malformed_lines.len();
    if malformed * 2 > total {
        return Err(IngestError::Format { malformed, total });
    }
    if malformed > 0 {
        log::warn!("skipped {malformed} malformed line(s) of {total}");
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROBAPI_TRACE: &str = "ABB.Robotics.Controllers.RobApiException: Operation failed\\n   at ABB.Robotics.Controllers.RapidDomain.Task.Start(Boolean) in C:\\\\src\\\\Task.cs:line 120\\n   at ABB.Robotics.RobotStudio.Simulation.Run() in C:\\\\src\\\\Sim.cs:line 88\\n   at ABB.Robotics.RobotStudio.Shell.Execute(Command) in C:\\\\src\\\\Shell.cs:line 42";

    #[test]
    fn maps_fields_directly() {
        let input = r#"{"ts":1000,"user":"u1","kind":"command","payload":"EditCopy"}"#;
        let log = parse_log(input.as_bytes()).unwrap();
        assert_eq!(log.events, vec![Event::new(1000, "u1", EventKind::Command, "EditCopy")]);
    }

    #[test]
    fn stack_trace_payload_is_kept_raw() {
        let input = format!(r#"{{"ts":5,"user":"u1","kind":"stack_trace","payload":"{ROBAPI_TRACE}"}}"#);
        let log = parse_log(input.as_bytes()).unwrap();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.events[0].kind, EventKind::StackTrace);
        assert_eq!(log.events[0].payload.lines().count(), 4);
    }

    #[test]
    fn two_user_excerpts_each_carry_one_trace() {
        let mut lines = Vec::new();
        for (user, cmds) in [("u1", ["EditCut", "EditPaste", "CursorDown"]), ("u2", ["EditPaste", "EditCut", "RapidEditorShow"])] {
            for (i, c) in cmds.iter().enumerate() {
                lines.push(format!(r#"{{"ts":{},"user":"{user}","kind":"command","payload":"{c}"}}"#, i * 1000));
            }
            lines.push(format!(r#"{{"ts":5000,"user":"{user}","kind":"stack_trace","payload":"{ROBAPI_TRACE}"}}"#));
        }
        let log = parse_log(lines.join("\n").as_bytes()).unwrap();
        for user in ["u1", "u2"] {
            let events: Vec<_> = log.events.iter().filter(|e| e.user_id == user).collect();
            assert_eq!(events.len(), 4);
            assert_eq!(events.iter().filter(|e| e.kind == EventKind::StackTrace).count(), 1);
        }
    }

    #[test]
    fn malformed_lines_are_counted() {
        let input = "{\"ts\":1,\"user\":\"a\",\"kind\":\"command\",\"payload\":\"X\"}\nnot json\n\n{\"ts\":2,\"user\":\"a\",\"kind\":\"event\",\"payload\":\"Y\"}\n";
        let log = parse_log(input.as_bytes()).unwrap();
        assert_eq!(log.events.len(), 2);
        assert_eq!(log.malformed_lines, vec![2]);
    }

    #[test]
    fn mostly_malformed_input_is_rejected() {
        let input = "garbage\n{\"ts\":-1,\"user\":\"a\",\"kind\":\"command\",\"payload\":\"X\"}\n{\"ts\":1,\"user\":\"a\",\"kind\":\"command\",\"payload\":\"X\"}\n";
        assert!(matches!(parse_log(input.as_bytes()), Err(IngestError::Format { malformed: 2, total: 3 })));
    }
}
