//! Reliable ownership facts harvested from the current estimation state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::context::ContextEntry;
use crate::scores::OwnerSet;
use crate::state::AcquisitionState;

/// Default minimum owner score for an unasked object to count as known.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Answered,
    HighConfidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownFact {
    pub owners: OwnerSet,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnownFacts(BTreeMap<String, KnownFact>);

impl KnownFacts {
    pub fn get(&self, object_id: &str) -> Option<&KnownFact> {
        self.0.get(object_id)
    }

    pub fn insert(&mut self, object_id: &str, fact: KnownFact) {
        self.0.insert(object_id.to_string(), fact);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &KnownFact)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Sets `known_ownership` on every entry that has a fact, clears the rest.
    pub fn attach(&self, entries: &mut [ContextEntry]) {
        for e in entries {
            e.known_ownership = self.get(&e.object_id).map(|f| f.owners.clone());
        }
    }
}

/// Asked objects contribute their (non-empty) answered owner set; unasked
/// objects contribute their share-decision owners when every owner scores at
/// least `confidence_threshold`.
pub fn build_known(state: &AcquisitionState, confidence_threshold: f64) -> KnownFacts {
    let mut known = KnownFacts::default();
    for rec in state.map.iter() {
        if rec.asked {
            if let Some(owners) = state.answers.get(&rec.object_id).filter(|o| !o.is_empty()) {
                known.insert(
                    &rec.object_id,
                    KnownFact {
                        owners: owners.clone(),
                        provenance: Provenance::Answered,
                    },
                );
            }
        } else if rec.share.is_determined() {
            let min = rec
                .share
                .owners
                .iter()
                .filter_map(|u| rec.scores.get(u))
                .fold(f64::INFINITY, f64::min);
            if min >= confidence_threshold {
                known.insert(
                    &rec.object_id,
                    KnownFact {
                        owners: rec.share.owners.clone(),
                        provenance: Provenance::HighConfidence,
                    },
                );
            }
        }
    }
    known
}
