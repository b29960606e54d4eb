//! Last-User and Frequency baselines over the event log.

use std::collections::BTreeMap;

use crate::evaluation::Predictions;
use crate::history::{EventLog, Timestamp};
use crate::scores::OwnerSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    LastUser,
    Frequency,
}

impl Baseline {
    pub const ALL: [Baseline; 2] = [Baseline::LastUser, Baseline::Frequency];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::LastUser => "last_user",
            Baseline::Frequency => "frequency",
        }
    }

    pub fn predict(self, log: &EventLog, object_id: &str) -> Option<OwnerSet> {
        match self {
            Baseline::LastUser => last_user_predict(log, object_id),
            Baseline::Frequency => frequency_predict(log, object_id),
        }
    }

    /// Predictions for every id; objects without events map to `None`.
    pub fn predict_all<'a>(
        self,
        log: &EventLog,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Predictions {
        ids.into_iter()
            .map(|id| (id.to_string(), self.predict(log, id)))
            .collect()
    }
}

/// User of the latest event; later log position wins timestamp ties.
pub fn last_user_predict(log: &EventLog, object_id: &str) -> Option<OwnerSet> {
    log.for_object(object_id)
        .max_by(|(ia, a), (ib, b)| a.timestamp.cmp(&b.timestamp).then(ia.cmp(ib)))
        .map(|(_, e)| OwnerSet::from([e.user.clone()]))
}

/// Most frequent user; ties go to the most recent user, then the smaller name.
pub fn frequency_predict(log: &EventLog, object_id: &str) -> Option<OwnerSet> {
    let mut stats: BTreeMap<&str, (usize, (Timestamp, usize))> = BTreeMap::new();
    for (i, e) in log.for_object(object_id) {
        let s = stats
            .entry(e.user.as_str())
            .or_insert((0, (e.timestamp, i)));
        s.0 += 1;
        s.1 = s.1.max((e.timestamp, i));
    }
    stats
        .into_iter()
        .max_by(|(na, a), (nb, b)| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(nb.cmp(na)))
        .map(|(u, _)| OwnerSet::from([u.to_string()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{parse_events, ActionTable};
    use crate::roster::Roster;
    use crate::scores::owner_set;

    fn log(lines: &[&str]) -> EventLog {
        parse_events(
            lines.iter().copied(),
            &Roster::default_household(),
            None,
            &ActionTable::default(),
        )
        .unwrap()
    }

    #[test]
    fn last_user() {
        let l = log(&[
            "2025-01-01 10:00 Bob takes the Pen",
            "2025-01-01 11:00 Mary takes the Pen",
        ]);
        assert_eq!(last_user_predict(&l, "Pen"), Some(owner_set(["Mary"])));
        let l = log(&["2025-01-01 10:00 Tom uses the Pen"]);
        assert_eq!(last_user_predict(&l, "Pen"), Some(owner_set(["Tom"])));
        assert_eq!(last_user_predict(&l, "Cup"), None);
        let l = log(&[
            "2025-01-01 10:00 Mary takes the Pen",
            "2025-01-01 10:00 Bob takes the Pen",
        ]);
        assert_eq!(last_user_predict(&l, "Pen"), Some(owner_set(["Bob"])));
    }

    #[test]
    fn frequency() {
        let l = log(&[
            "2025-01-01 09:00 Bob takes the Pen",
            "2025-01-01 10:00 Mary takes the Pen",
            "2025-01-01 11:00 Bob takes the Pen",
            "2025-01-01 12:00 Bob takes the Pen",
        ]);
        assert_eq!(frequency_predict(&l, "Pen"), Some(owner_set(["Bob"])));
        let l = log(&[
            "2025-01-01 09:00 Bob takes the Pen",
            "2025-01-01 10:00 Mary takes the Pen",
            "2025-01-01 11:00 Bob takes the Pen",
            "2025-01-01 12:00 Mary takes the Pen",
        ]);
        assert_eq!(frequency_predict(&l, "Pen"), Some(owner_set(["Mary"])));
        assert_eq!(frequency_predict(&l, "Cup"), None);
        let p = Baseline::Frequency.predict_all(&l, ["Pen", "Cup"]);
        assert_eq!(p["Cup"], None);
    }
}
