//! Mutable ownership-estimation state shared by the acquisition loop.

use std::collections::{BTreeMap, BTreeSet};

use crate::map::MapStore;
use crate::scores::OwnerSet;

/// Per-object estimates plus the question budget.
///
/// Scores, share decisions and asked flags live on the map records; the state
/// adds the answered owner sets and the revisit flags.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionState {
    pub map: MapStore,
    /// Owner set given by the respondent for every asked object (may be empty).
    pub answers: BTreeMap<String, OwnerSet>,
    /// Asked objects whose answer named no candidate.
    pub needs_revisit: BTreeSet<String>,
    pub q_cnt: usize,
    pub q_max: usize,
}

impl AcquisitionState {
    pub fn new(map: MapStore, q_max: usize) -> Self {
        Self {
            map,
            answers: BTreeMap::new(),
            needs_revisit: BTreeSet::new(),
            q_cnt: 0,
            q_max,
        }
    }

    pub fn unasked_ids(&self) -> Vec<String> {
        self.map
            .sorted_ids()
            .into_iter()
            .filter(|id| !self.map.get(id).is_some_and(|r| r.asked))
            .collect()
    }
}
