//! Ownership-aware object map: one record per mapped object.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roster::Roster;
use crate::scores::{OwnerSet, OwnershipScores};
use crate::scoring::share::ShareDecision;

/// Default feature dimension (CLIP image embedding size).
pub const DEFAULT_FEATURE_DIM: usize = 512;

/// Features this close to unit norm are accepted as-is.
const UNIT_TOLERANCE: f64 = 1e-6;
/// Features within this distance of unit norm are silently renormalized.
const RENORMALIZE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("duplicate object id: {0}")]
    DuplicateId(String),
    #[error("object {id}: feature norm {norm} is not unit length")]
    NonUnitFeature { id: String, norm: f64 },
    #[error("object {id}: feature dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("object {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("unknown object id: {0}")]
    UnknownObject(String),
    #[error("failed to read map {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed map file: {0}")]
    Format(#[from] serde_json::Error),
}

/// One mapped object together with its current ownership estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub object_id: String,
    pub class_label: String,
    pub position: [f64; 3],
    pub feature: Vec<f64>,
    pub scores: OwnershipScores,
    pub share: ShareDecision,
    pub asked: bool,
}

/// Serialized form of one object in the map file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub object_id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    pub position: [f64; 3],
    pub feature: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owners: Option<OwnerSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<OwnershipScores>,
}

/// Top-level map document: `{"objects": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub objects: Vec<MapEntry>,
}

impl MapFile {
    pub fn from_json_str(text: &str) -> Result<Self, MapError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, MapError> {
        let text = fs::read_to_string(path).map_err(|source| MapError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("map serializes");
        s.push('\n');
        s
    }

    /// Owner sets carried by the file, for entries that have them.
    pub fn owners(&self) -> impl Iterator<Item = (&str, &OwnerSet)> {
        self.objects
            .iter()
            .filter_map(|e| e.owners.as_ref().map(|o| (e.object_id.as_str(), o)))
    }
}

/// Validated collection of object records with id lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapStore {
    records: Vec<ObjectRecord>,
    index: HashMap<String, usize>,
}

impl MapStore {
    /// Validates every entry and builds the store. Missing scores start at 0.
    pub fn from_entries(entries: Vec<MapEntry>, roster: &Roster) -> Result<Self, MapError> {
        let mut store = MapStore::default();
        let mut dim = None;
        for entry in entries {
            let id = entry.object_id.clone();
            if id.trim().is_empty() {
                return Err(MapError::InvalidRecord {
                    id,
                    reason: "empty object_id".into(),
                });
            }
            if store.index.contains_key(&id) {
                return Err(MapError::DuplicateId(id));
            }
            if !entry.position.iter().all(|c| c.is_finite()) {
                return Err(MapError::InvalidRecord {
                    id,
                    reason: "position must be finite".into(),
                });
            }
            let expected = *dim.get_or_insert(entry.feature.len());
            if entry.feature.len() != expected {
                return Err(MapError::DimensionMismatch {
                    id,
                    got: entry.feature.len(),
                    expected,
                });
            }
            let feature = normalize_feature(&id, entry.feature)?;
            let scores = match entry.scores {
                Some(s) => {
                    if !s.covers(roster) {
                        return Err(MapError::InvalidRecord {
                            id,
                            reason: "scores must cover the roster with values in [0,1]".into(),
                        });
                    }
                    s
                }
                None => OwnershipScores::uniform(roster, 0.0),
            };
            store.push(ObjectRecord {
                object_id: id,
                class_label: entry.class_label,
                position: entry.position,
                feature,
                scores,
                share: ShareDecision::undetermined(),
                asked: false,
            });
        }
        Ok(store)
    }

    fn push(&mut self, record: ObjectRecord) {
        self.index
            .insert(record.object_id.clone(), self.records.len());
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ObjectRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut ObjectRecord> {
        self.index.get(id).map(|&i| &mut self.records[i])
    }

    pub fn require(&self, id: &str) -> Result<&ObjectRecord, MapError> {
        self.get(id)
            .ok_or_else(|| MapError::UnknownObject(id.to_string()))
    }

    /// Records in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &ObjectRecord> {
        self.records.iter()
    }

    /// Object ids in ascending order.
    pub fn sorted_ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.records.iter().map(|r| r.object_id.clone()).collect();
        ids.sort();
        ids
    }

    pub fn to_map_file(&self) -> MapFile {
        MapFile {
            objects: self
                .records
                .iter()
                .map(|r| MapEntry {
                    object_id: r.object_id.clone(),
                    class_label: r.class_label.clone(),
                    position: r.position,
                    feature: r.feature.clone(),
                    owners: None,
                    scores: None,
                })
                .collect(),
        }
    }
}

fn normalize_feature(id: &str, feature: Vec<f64>) -> Result<Vec<f64>, MapError> {
    if feature.is_empty() || !feature.iter().all(|v| v.is_finite()) {
        return Err(MapError::InvalidRecord {
            id: id.to_string(),
            reason: "feature must be a non-empty vector of finite values".into(),
        });
    }
    let norm = feature.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gap = (norm - 1.0).abs();
    if gap <= UNIT_TOLERANCE {
        Ok(feature)
    } else if gap <= RENORMALIZE_TOLERANCE {
        Ok(feature.into_iter().map(|v| v / norm).collect())
    } else {
        Err(MapError::NonUnitFeature {
            id: id.to_string(),
            norm,
        })
    }
}

/// Reads and validates a map file against the roster.
pub fn load_map(path: &Path, roster: &Roster) -> Result<MapStore, MapError> {
    MapStore::from_entries(MapFile::read(path)?.objects, roster)
}
