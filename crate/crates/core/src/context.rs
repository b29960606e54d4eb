//! Spatial-neighbor and visual-similarity context extraction.
//!
//! Neighbors are ranked by a Gaussian proximity weight
//! `w = exp(-d^2 / (2 sigma^2))` over a vertically scaled Euclidean distance.
//! Similar objects are ranked by cosine similarity of unit feature vectors.
//! Both rankings are total orders (ties fall back to object id), so results do
//! not depend on map insertion order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::map::{MapError, MapStore, ObjectRecord};
use crate::scores::OwnerSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialParams {
    /// Scale on the vertical axis.
    pub gamma: f64,
    /// Gaussian range in meters.
    pub sigma: f64,
    /// Candidates with weight below this are dropped.
    pub weight_floor: f64,
    pub k_near: usize,
}

impl Default for SpatialParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            sigma: 0.5,
            weight_floor: 1e-3,
            k_near: 5,
        }
    }
}

impl SpatialParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0) {
            return Err(format!(
                "weight_floor must be in (0,1), got {}",
                self.weight_floor
            ));
        }
        if !self.gamma.is_finite() {
            return Err("gamma must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityParams {
    pub k_sim: usize,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { k_sim: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextMetric {
    Neighbor { distance: f64, weight: f64 },
    Similar { similarity: f64 },
}

/// One related object offered as context for a target object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub object_id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    #[serde(flatten)]
    pub metric: ContextMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_ownership: Option<OwnerSet>,
}

pub fn distance(a: &[f64; 3], b: &[f64; 3], gamma: f64) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let dz = gamma * (b[2] - a[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn gaussian_weight(d: f64, sigma: f64) -> f64 {
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Up to `k_near` spatial neighbors of `target`, strongest weight first.
pub fn neighbor_context(
    map: &MapStore,
    target: &str,
    p: &SpatialParams,
) -> Result<Vec<ContextEntry>, MapError> {
    let origin = map.require(target)?;
    let mut scored: Vec<(&ObjectRecord, f64, f64)> = map
        .iter()
        .filter(|r| r.object_id != origin.object_id)
        .map(|r| {
            let d = distance(&origin.position, &r.position, p.gamma);
            (r, d, gaussian_weight(d, p.sigma))
        })
        .filter(|&(_, _, w)| w >= p.weight_floor)
        .collect();
    scored.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(a.1.total_cmp(&b.1))
            .then_with(|| a.0.object_id.cmp(&b.0.object_id))
    });
    Ok(scored
        .into_iter()
        .take(p.k_near)
        .map(|(r, distance, weight)| ContextEntry {
            object_id: r.object_id.clone(),
            class_label: r.class_label.clone(),
            metric: ContextMetric::Neighbor { distance, weight },
            known_ownership: None,
        })
        .collect())
}

/// Up to `k_sim` most visually similar objects to `target`.
pub fn similar_context(
    map: &MapStore,
    target: &str,
    p: &SimilarityParams,
) -> Result<Vec<ContextEntry>, MapError> {
    let origin = map.require(target)?;
    let mut scored: Vec<(&ObjectRecord, f64)> = map
        .iter()
        .filter(|r| r.object_id != origin.object_id)
        .map(|r| (r, cosine(&origin.feature, &r.feature).clamp(-1.0, 1.0)))
        .collect();
    scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.object_id.cmp(&b.0.object_id),
        o => o,
    });
    Ok(scored
        .into_iter()
        .take(p.k_sim)
        .map(|(r, similarity)| ContextEntry {
            object_id: r.object_id.clone(),
            class_label: r.class_label.clone(),
            metric: ContextMetric::Similar { similarity },
            known_ownership: None,
        })
        .collect())
}
