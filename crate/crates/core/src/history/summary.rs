use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ActionType, Event, EventLog, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub id: String,
    pub name: String,
}

/// Per-user usage statistics for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserUsage {
    pub user_id: String,
    pub total_events: usize,
    pub actions: BTreeMap<ActionType, usize>,
    pub last_used_days_ago: f64,
    pub example_events: Vec<String>,
}

/// Structured usage summary for one object, users with events only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub object: ObjectRef,
    pub user_summary: Vec<UserUsage>,
}

impl UsageSummary {
    pub fn user(&self, name: &str) -> Option<&UserUsage> {
        self.user_summary.iter().find(|u| u.user_id == name)
    }

    pub fn total_events(&self) -> usize {
        self.user_summary.iter().map(|u| u.total_events).sum()
    }
}

const EXAMPLE_EVENTS: usize = 2;

/// Aggregates the object's events within `[now - window_days, now]` per user.
///
/// `object.name` is set to the object id; callers with a display name
/// (e.g. the class label) overwrite it.
pub fn usage_summary(
    log: &EventLog,
    object_id: &str,
    window_days: f64,
    now: Timestamp,
) -> UsageSummary {
    let mut per_user: HashMap<&str, Vec<&Event>> = HashMap::new();
    for (_, e) in log.for_object(object_id) {
        let age = now.days_since(&e.timestamp);
        if (0.0..=window_days).contains(&age) {
            per_user.entry(e.user.as_str()).or_default().push(e);
        }
    }
    let mut user_summary: Vec<UserUsage> = per_user
        .into_iter()
        .map(|(user, mut events)| {
            // log order is chronological; keep it stable for equal timestamps
            events.sort_by_key(|e| e.timestamp);
            let mut actions = BTreeMap::new();
            for e in &events {
                *actions.entry(e.action).or_insert(0) += 1;
            }
            let latest = events.last().expect("non-empty group").timestamp;
            let example_events = events[events.len().saturating_sub(EXAMPLE_EVENTS)..]
                .iter()
                .map(|e| e.raw_text.clone())
                .collect();
            UserUsage {
                user_id: user.to_string(),
                total_events: events.len(),
                actions,
                last_used_days_ago: now.days_since(&latest),
                example_events,
            }
        })
        .collect();
    user_summary.sort_by(|a, b| {
        b.total_events
            .cmp(&a.total_events)
            .then_with(|| a.user_id.cmp(&b.user_id))
    });
    UsageSummary {
        object: ObjectRef {
            id: object_id.to_string(),
            name: object_id.to_string(),
        },
        user_summary,
    }
}
