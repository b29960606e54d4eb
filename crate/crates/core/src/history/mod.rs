//! Time-stamped interaction captions, per-user usage summaries and sessions.

mod session;
mod summary;

pub use session::{segment_sessions, Session};
pub use summary::{usage_summary, ObjectRef, UsageSummary, UserUsage};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::roster::Roster;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("failed to read events {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed event records: {0}")]
    Format(#[from] serde_json::Error),
}

/// Minute-resolution wall-clock timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub NaiveDateTime);

impl Timestamp {
    pub fn parse(s: &str) -> Option<Self> {
        NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
            .ok()
            .map(Timestamp)
    }

    /// Signed distance `self - earlier` in (fractional) days.
    pub fn days_since(&self, earlier: &Timestamp) -> f64 {
        (self.0 - earlier.0).num_seconds() as f64 / 86_400.0
    }

    pub fn plus(&self, d: Duration) -> Self {
        Timestamp(self.0 + d)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(TIMESTAMP_FORMAT))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionType {
    Use,
    Place,
    Transport,
    Clean,
    Search,
    Other,
}

impl ActionType {
    pub const ALL: [ActionType; 6] = [
        ActionType::Use,
        ActionType::Place,
        ActionType::Transport,
        ActionType::Clean,
        ActionType::Search,
        ActionType::Other,
    ];
}

/// Ordered keyword rules mapping caption phrases to action types.
///
/// A phrase matches when its words occur contiguously (case-insensitive) in the
/// caption text after the user name. The first matching rule wins; no match
/// yields [`ActionType::Other`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTable {
    pub rules: Vec<(ActionType, Vec<String>)>,
}

impl Default for ActionTable {
    fn default() -> Self {
        let rule = |a, words: &[&str]| (a, words.iter().map(|w| w.to_string()).collect());
        Self {
            rules: vec![
                rule(ActionType::Use, &["takes", "uses", "using", "reads"]),
                rule(ActionType::Place, &["puts back", "puts", "places"]),
                rule(ActionType::Transport, &["carries", "brings"]),
                rule(ActionType::Clean, &["cleans", "washes"]),
                rule(ActionType::Search, &["looks for"]),
            ],
        }
    }
}

impl ActionTable {
    pub fn classify(&self, text: &str) -> ActionType {
        let words: Vec<String> = words(text).map(|w| w.to_lowercase()).collect();
        for (action, phrases) in &self.rules {
            for phrase in phrases {
                let p: Vec<String> = phrase.split_whitespace().map(str::to_lowercase).collect();
                if !p.is_empty() && words.windows(p.len()).any(|w| w == p.as_slice()) {
                    return *action;
                }
            }
        }
        ActionType::Other
    }
}

/// Splits on whitespace and trims surrounding punctuation.
fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-'))
        .filter(|w| !w.is_empty())
}

/// One interaction caption with its parsed fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub timestamp: Timestamp,
    pub user: String,
    pub action: ActionType,
    pub object_id: String,
    /// The original caption line.
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unknown_user: bool,
}

/// Chronologically ordered interaction events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    /// Builds a log, stable-sorting by timestamp.
    pub fn from_events(mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| e.timestamp);
        Self { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Indexed events for one object, in log order.
    pub fn for_object<'a>(
        &'a self,
        object_id: &'a str,
    ) -> impl Iterator<Item = (usize, &'a Event)> {
        self.events
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.object_id == object_id)
    }

    pub fn earliest(&self) -> Option<Timestamp> {
        self.events.first().map(|e| e.timestamp)
    }

    pub fn latest(&self) -> Option<Timestamp> {
        self.events.last().map(|e| e.timestamp)
    }

    /// Plain-text caption file contents, one caption per line.
    pub fn to_caption_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.raw_text);
            out.push('\n');
        }
        out
    }

    /// Structured-record form (JSON array of events).
    pub fn to_records_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("events serialize");
        s.push('\n');
        s
    }

    pub fn from_records_json(text: &str) -> Result<Self, HistoryError> {
        let log: EventLog = serde_json::from_str(text)?;
        Ok(Self::from_events(log.events))
    }
}

/// Parses caption lines of the form `YYYY-MM-DD HH:MM <User> <text>`.
///
/// Blank lines are skipped. When `catalog` is given, the object is the first
/// word of the caption that names a catalog id; otherwise it is the word after
/// the first "the", falling back to the last word.
pub fn parse_events<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    roster: &Roster,
    catalog: Option<&HashSet<String>>,
    table: &ActionTable,
) -> Result<EventLog, HistoryError> {
    let mut events = Vec::new();
    for (i, raw) in lines.into_iter().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| HistoryError::Parse {
            line: line_no,
            reason: reason.to_string(),
        };
        let mut parts = line.splitn(3, char::is_whitespace);
        let (Some(date), Some(time), Some(rest)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(err("expected 'YYYY-MM-DD HH:MM <text>'"));
        };
        let timestamp = Timestamp::parse(&format!("{date} {time}"))
            .ok_or_else(|| err(&format!("unparseable timestamp '{date} {time}'")))?;
        let rest = rest.trim();
        let (user_word, text) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let user = user_word
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_string();
        if user.is_empty() {
            return Err(err("missing user name"));
        }
        let object_id = extract_object(text, catalog).ok_or_else(|| err("no object mentioned"))?;
        events.push(Event {
            timestamp,
            unknown_user: !roster.contains(&user),
            user,
            action: table.classify(text),
            object_id,
            raw_text: line.to_string(),
        });
    }
    Ok(EventLog::from_events(events))
}

fn extract_object(text: &str, catalog: Option<&HashSet<String>>) -> Option<String> {
    let ws: Vec<&str> = words(text).collect();
    if let Some(cat) = catalog {
        if let Some(w) = ws.iter().find(|w| cat.contains(**w)) {
            return Some(w.to_string());
        }
    }
    ws.iter()
        .position(|w| w.eq_ignore_ascii_case("the"))
        .and_then(|i| ws.get(i + 1))
        .or(ws.last())
        .map(|w| w.to_string())
}

/// Reads a caption file.
pub fn read_caption_file(
    path: &Path,
    roster: &Roster,
    catalog: Option<&HashSet<String>>,
    table: &ActionTable,
) -> Result<EventLog, HistoryError> {
    let text = fs::read_to_string(path).map_err(|source| HistoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_events(text.lines(), roster, catalog, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(lines: &[&str]) -> Result<EventLog, HistoryError> {
        parse_events(
            lines.iter().copied(),
            &Roster::default_household(),
            None,
            &ActionTable::default(),
        )
    }

    #[test]
    fn parses_caption_examples() {
        let log = parse(&[
            "2025-01-19 19:00 Bob takes the Marker",
            "2025-01-19 19:00 Bob puts the Marker back",
            "2025-01-20 10:00 Mary looks for the Marker",
        ])
        .unwrap();
        let e = &log.events()[0];
        assert_eq!(e.user, "Bob");
        assert_eq!(e.action, ActionType::Use);
        assert_eq!(e.object_id, "Marker");
        assert_eq!(e.timestamp.to_string(), "2025-01-19 19:00");
        assert!(!e.unknown_user);
        assert_eq!(log.events()[1].action, ActionType::Place);
        assert_eq!(log.events()[2].action, ActionType::Search);
    }

    #[test]
    fn keyword_table_covers_action_types() {
        let t = ActionTable::default();
        assert_eq!(t.classify("is using the Marker"), ActionType::Use);
        assert_eq!(t.classify("reads the Book"), ActionType::Use);
        assert_eq!(t.classify("places the Cup on the table"), ActionType::Place);
        assert_eq!(
            t.classify("carries the Cup to the kitchen"),
            ActionType::Transport
        );
        assert_eq!(t.classify("brings the Cup"), ActionType::Transport);
        assert_eq!(t.classify("washes the Cup"), ActionType::Clean);
        assert_eq!(t.classify("cleans the Cup"), ActionType::Clean);
        assert_eq!(t.classify("Looks FOR the Cup"), ActionType::Search);
        assert_eq!(t.classify("stares at the Cup"), ActionType::Other);
    }

    #[test]
    fn empty_input_is_empty_log() {
        assert!(parse(&[]).unwrap().is_empty());
        assert!(parse(&["", "   "]).unwrap().is_empty());
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let err = parse(&[
            "2025-01-19 19:00 Bob takes the Marker",
            "2025-13-40 99:00 Bob takes the Marker",
        ])
        .unwrap_err();
        assert!(matches!(err, HistoryError::Parse { line: 2, .. }));
    }

    #[test]
    fn unknown_user_kept_and_flagged() {
        let log = parse(&["2025-01-19 19:00 Alice takes the Marker"]).unwrap();
        assert_eq!(log.len(), 1);
        assert!(log.events()[0].unknown_user);
    }

    #[test]
    fn catalog_lookup_wins_over_article_rule() {
        let cat: HashSet<String> = ["Mug_2".to_string()].into();
        let log = parse_events(
            ["2025-01-19 19:00 Tom carries the blue Mug_2 to the kitchen"],
            &Roster::default_household(),
            Some(&cat),
            &ActionTable::default(),
        )
        .unwrap();
        assert_eq!(log.events()[0].object_id, "Mug_2");
    }

    #[test]
    fn chronological_order_is_enforced() {
        let log = parse(&[
            "2025-01-20 10:00 Mary looks for the Marker",
            "2025-01-19 19:00 Bob takes the Marker",
        ])
        .unwrap();
        assert_eq!(log.events()[0].user, "Bob");
    }

    #[test]
    fn records_round_trip() {
        let log = parse(&[
            "2025-01-19 19:00 Bob takes the Marker",
            "2025-01-19 19:05 Alice takes the Marker",
        ])
        .unwrap();
        let back = EventLog::from_records_json(&log.to_records_json()).unwrap();
        assert_eq!(back, log);
    }
}
