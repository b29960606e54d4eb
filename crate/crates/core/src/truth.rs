//! Ground-truth owner sets and generation scenarios.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roster::Roster;
use crate::scores::OwnerSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleUser,
    TemporarySharing,
    MultiUserSharing,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::SingleUser,
        Scenario::TemporarySharing,
        Scenario::MultiUserSharing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SingleUser => "single_user",
            Scenario::TemporarySharing => "temporary_sharing",
            Scenario::MultiUserSharing => "multi_user_sharing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub owners: OwnerSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Error)]
pub enum TruthError {
    #[error("object {0} has an empty owner set")]
    EmptyOwners(String),
    #[error("object {object}: owner {user} is not in the roster")]
    UnknownOwner { object: String, user: String },
    #[error("cannot access truth file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed truth file: {0}")]
    Format(#[from] serde_json::Error),
}

/// `{"objects": {"<id>": {"owners": [...], "scenario": "..."}}}`
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub objects: BTreeMap<String, TruthEntry>,
}

impl GroundTruth {
    pub fn owners(&self, id: &str) -> Option<&OwnerSet> {
        self.objects.get(id).map(|e| &e.owners)
    }

    pub fn owner_map(&self) -> BTreeMap<String, OwnerSet> {
        self.objects
            .iter()
            .map(|(k, v)| (k.clone(), v.owners.clone()))
            .collect()
    }

    pub fn validate(&self, roster: &Roster) -> Result<(), TruthError> {
        for (id, e) in &self.objects {
            if e.owners.is_empty() {
                return Err(TruthError::EmptyOwners(id.clone()));
            }
            if let Some(u) = e.owners.iter().find(|u| !roster.contains(u)) {
                return Err(TruthError::UnknownOwner {
                    object: id.clone(),
                    user: u.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, TruthError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, TruthError> {
        let text = std::fs::read_to_string(path).map_err(|source| TruthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::owner_set;

    #[test]
    fn roundtrip_and_validation() {
        let mut t = GroundTruth::default();
        t.objects.insert(
            "Pen".into(),
            TruthEntry {
                owners: owner_set(["Tom"]),
                scenario: Some(Scenario::SingleUser),
            },
        );
        let text = t.to_json_string();
        assert!(text.contains("\"scenario\": \"single_user\""));
        assert_eq!(GroundTruth::from_json_str(&text).unwrap(), t);
        let r = Roster::default_household();
        t.validate(&r).unwrap();
        t.objects.get_mut("Pen").unwrap().owners = owner_set(["Zed"]);
        assert!(matches!(
            t.validate(&r),
            Err(TruthError::UnknownOwner { .. })
        ));
        t.objects.get_mut("Pen").unwrap().owners.clear();
        assert!(matches!(t.validate(&r), Err(TruthError::EmptyOwners(_))));
    }
}
