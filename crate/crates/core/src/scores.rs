//! Multi-label ownership scores and owner sets.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::roster::Roster;

/// A set of user names. `BTreeSet` keeps iteration (and serialization) sorted by name.
pub type OwnerSet = BTreeSet<String>;

/// Per-user ownership scores in `[0, 1]`, in roster order.
///
/// Scores are independent per user and are not normalized.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OwnershipScores(IndexMap<String, f64>);

impl OwnershipScores {
    /// Every roster user at `value`.
    pub fn uniform(roster: &Roster, value: f64) -> Self {
        Self(roster.names().map(|n| (n.to_string(), value)).collect())
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        Self(pairs.into_iter().map(|(n, v)| (n.into(), v)).collect())
    }

    pub fn get(&self, user: &str) -> Option<f64> {
        self.0.get(user).copied()
    }

    pub fn set(&mut self, user: &str, value: f64) {
        self.0.insert(user.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every roster user has a finite score in `[0, 1]`.
    pub fn covers(&self, roster: &Roster) -> bool {
        roster.names().all(|n| self.0.contains_key(n))
            && self
                .0
                .values()
                .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    /// Scores sorted descending, ties broken by ascending user name.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// Highest-scoring user (name tie-break); `None` for empty scores.
    pub fn argmax(&self) -> Option<&str> {
        self.ranked().first().map(|(n, _)| *n)
    }

    /// Deterministic scores from an answered owner set: 1 for owners, 0 otherwise.
    pub fn from_answer(roster: &Roster, owners: &OwnerSet) -> Self {
        Self(
            roster
                .names()
                .map(|n| (n.to_string(), if owners.contains(n) { 1.0 } else { 0.0 }))
                .collect(),
        )
    }
}

pub fn owner_set<'a>(names: impl IntoIterator<Item = &'a str>) -> OwnerSet {
    names.into_iter().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranked_breaks_ties_by_name() {
        let s = OwnershipScores::from_pairs([("Tom", 0.5), ("Bob", 0.5), ("Mary", 0.9)]);
        let names: Vec<_> = s.ranked().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["Mary", "Bob", "Tom"]);
        assert_eq!(s.argmax(), Some("Mary"));
    }

    #[test]
    fn covers_checks_range_and_membership() {
        let r = Roster::default_household();
        assert!(OwnershipScores::uniform(&r, 0.0).covers(&r));
        let bad = OwnershipScores::from_pairs([("Bob", 1.2), ("Mary", 0.0), ("Tom", 0.0)]);
        assert!(!bad.covers(&r));
        let missing = OwnershipScores::from_pairs([("Bob", 0.2), ("Mary", 0.0)]);
        assert!(!missing.covers(&r));
    }
}
