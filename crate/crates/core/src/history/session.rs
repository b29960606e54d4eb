use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{EventLog, Timestamp};

/// Maximal run of consecutive same-user events on one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub object_id: String,
    pub user: String,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Indices into the source log.
    pub event_indices: Vec<usize>,
}

/// Splits the object's event sequence into sessions.
///
/// Consecutive events share a session iff they have the same user and are at
/// most `gap` apart. A user change always starts a new session.
pub fn segment_sessions(log: &EventLog, object_id: &str, gap: Duration) -> Vec<Session> {
    let mut sessions: Vec<Session> = Vec::new();
    for (idx, e) in log.for_object(object_id) {
        if let Some(cur) = sessions.last_mut() {
            if cur.user == e.user && e.timestamp.0 - cur.end.0 <= gap {
                cur.end = e.timestamp;
                cur.event_indices.push(idx);
                continue;
            }
        }
        sessions.push(Session {
            object_id: object_id.to_string(),
            user: e.user.clone(),
            start: e.timestamp,
            end: e.timestamp,
            event_indices: vec![idx],
        });
    }
    sessions
}
