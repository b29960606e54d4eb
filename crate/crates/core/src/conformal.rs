//! Split conformal calibration: nonconformity scores, order-statistic
//! thresholds, prediction sets and the cp-based stopping threshold.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scores::{OwnerSet, OwnershipScores};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_ALPHA_CP: f64 = 0.05;

/// Absorbs floating-point noise in products like 5 * 0.8 before taking the ceiling.
const CEIL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("true owner set is empty")]
    EmptyTrueOwners,
    #[error("{what}: {n} calibration values, need at least {min_n}")]
    Insufficient {
        what: &'static str,
        n: usize,
        min_n: usize,
    },
    #[error("{name} must lie strictly between 0 and 1, got {value}")]
    InvalidLevel { name: &'static str, value: f64 },
    #[error("cannot access calibration file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed calibration file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Scores of one held-out object with its known owners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub object_id: String,
    pub scores: OwnershipScores,
    pub true_owners: OwnerSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub alpha: f64,
    pub q_alpha: f64,
    pub alpha_cp: f64,
    pub q_cp: f64,
    pub n_calibration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub members: OwnerSet,
    pub cp_score: f64,
}

/// `1 - max_{u in true_owners} s_u`. Users missing from `scores` count as 0.
pub fn nonconformity(
    scores: &OwnershipScores,
    true_owners: &OwnerSet,
) -> Result<f64, ConformalError> {
    if true_owners.is_empty() {
        return Err(ConformalError::EmptyTrueOwners);
    }
    let best = true_owners
        .iter()
        .map(|u| scores.get(u).unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(1.0 - best)
}

fn check_level(name: &'static str, value: f64) -> Result<(), ConformalError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(ConformalError::InvalidLevel { name, value })
    }
}

/// 1-based rank `ceil((n + 1) * level)`, at least 1.
pub fn order_rank(n: usize, level: f64) -> usize {
    let x = (n as f64 + 1.0) * level;
    ((x - CEIL_TOLERANCE).ceil() as usize).max(1)
}

/// Smallest calibration size for which `order_rank(n, level) <= n`.
pub fn minimum_n(level: f64) -> usize {
    (1..)
        .find(|&n| order_rank(n, level) <= n)
        .expect("level < 1")
}

fn order_statistic(values: &[f64], level: f64, what: &'static str) -> Result<f64, ConformalError> {
    let n = values.len();
    let rank = order_rank(n, level);
    if n == 0 || rank > n {
        return Err(ConformalError::Insufficient {
            what,
            n,
            min_n: minimum_n(level),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// `q_alpha`: the `ceil((N+1)(1-alpha))`-th smallest nonconformity score.
pub fn calibrate(nc_scores: &[f64], alpha: f64) -> Result<f64, ConformalError> {
    check_level("alpha", alpha)?;
    order_statistic(nc_scores, 1.0 - alpha, "calibration")
}

/// `q_cp`: the `ceil((N+1) alpha_cp)`-th smallest calibration cp score.
pub fn stopping_threshold(cp_scores: &[f64], alpha_cp: f64) -> Result<f64, ConformalError> {
    check_level("alpha_cp", alpha_cp)?;
    order_statistic(cp_scores, alpha_cp, "stopping threshold")
}

/// Users scoring at least `1 - q_alpha`; `cp_score` is one minus their mean
/// score, or 1 for an empty set.
pub fn prediction_set(scores: &OwnershipScores, q_alpha: f64) -> PredictionSet {
    let cut = 1.0 - q_alpha;
    let mut members = OwnerSet::new();
    let mut sum = 0.0;
    for (u, s) in scores.iter() {
        if s >= cut {
            members.insert(u.to_string());
            sum += s;
        }
    }
    let cp_score = if members.is_empty() {
        1.0
    } else {
        (1.0 - sum / members.len() as f64).clamp(0.0, 1.0)
    };
    PredictionSet { members, cp_score }
}

impl CalibrationModel {
    /// Computes both thresholds from scored samples with known owners.
    pub fn fit(
        samples: &[CalibrationSample],
        alpha: f64,
        alpha_cp: f64,
    ) -> Result<Self, ConformalError> {
        let nc = samples
            .iter()
            .map(|s| nonconformity(&s.scores, &s.true_owners))
            .collect::<Result<Vec<_>, _>>()?;
        let q_alpha = calibrate(&nc, alpha)?;
        let cp: Vec<f64> = samples
            .iter()
            .map(|s| prediction_set(&s.scores, q_alpha).cp_score)
            .collect();
        let q_cp = stopping_threshold(&cp, alpha_cp)?;
        Ok(Self {
            alpha,
            q_alpha,
            alpha_cp,
            q_cp,
            n_calibration: samples.len(),
        })
    }

    pub fn prediction_set(&self, scores: &OwnershipScores) -> PredictionSet {
        prediction_set(scores, self.q_alpha)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConformalError> {
        let m: Self = serde_json::from_str(text)?;
        check_level("alpha", m.alpha)?;
        check_level("alpha_cp", m.alpha_cp)?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ConformalError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConformalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConformalError> {
        std::fs::write(path, self.to_json_string()).map_err(|source| ConformalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::owner_set;

    fn s(b: f64, m: f64, t: f64) -> OwnershipScores {
        OwnershipScores::from_pairs([("Bob", b), ("Mary", m), ("Tom", t)])
    }

    #[test]
    fn nonconformity_examples() {
        assert_eq!(
            nonconformity(&s(1.0, 0.2, 0.0), &owner_set(["Bob"])).unwrap(),
            0.0
        );
        assert!(
            (nonconformity(&s(0.9, 0.2, 0.0), &owner_set(["Bob"])).unwrap() - 0.1).abs() < 1e-12
        );
        let nc = nonconformity(&s(0.4, 0.7, 0.0), &owner_set(["Bob", "Mary"])).unwrap();
        assert!((nc - 0.3).abs() < 1e-12);
        assert!(matches!(
            nonconformity(&s(0.4, 0.7, 0.0), &OwnerSet::new()),
            Err(ConformalError::EmptyTrueOwners)
        ));
    }

    #[test]
    fn calibrate_examples() {
        assert_eq!(calibrate(&[0.3, 0.1, 0.4, 0.2], 0.2).unwrap(), 0.4);
        assert_eq!(calibrate(&[0.25; 9], 0.2).unwrap(), 0.25);
        match calibrate(&[0.1, 0.2, 0.3], 0.2) {
            Err(ConformalError::Insufficient { n: 3, min_n: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(calibrate(&[], 0.2).is_err());
        assert!(calibrate(&[0.1; 10], 1.0).is_err());
    }

    #[test]
    fn stopping_threshold_examples() {
        let cp: Vec<f64> = (1..=20).map(|k| k as f64 / 100.0).collect();
        assert_eq!(stopping_threshold(&cp, 0.05).unwrap(), 0.02);
        assert_eq!(stopping_threshold(&[0.3; 7], 0.05).unwrap(), 0.3);
        let cp: Vec<f64> = (1..=10).rev().map(|k| k as f64 * 0.05).collect();
        assert_eq!(stopping_threshold(&cp, 0.05).unwrap(), 0.05);
        assert_eq!(minimum_n(0.05), 1);
        assert_eq!(minimum_n(0.8), 4);
    }

    #[test]
    fn prediction_set_examples() {
        let p = prediction_set(&s(0.9, 0.75, 0.2), 0.3);
        assert_eq!(p.members, owner_set(["Bob", "Mary"]));
        assert!((p.cp_score - 0.175).abs() < 1e-12);
        assert_eq!(prediction_set(&s(0.9, 0.0, 0.2), 1.0).members.len(), 3);
        let empty = prediction_set(&s(0.0, 0.0, 0.0), 0.3);
        assert!(empty.members.is_empty());
        assert_eq!(empty.cp_score, 1.0);
    }

    #[test]
    fn fit_and_roundtrip() {
        let samples: Vec<CalibrationSample> = (0..10)
            .map(|i| CalibrationSample {
                object_id: format!("o{i}"),
                scores: s(0.5 + i as f64 * 0.05, 0.1, 0.0),
                true_owners: owner_set(["Bob"]),
            })
            .collect();
        let m = CalibrationModel::fit(&samples, 0.2, 0.05).unwrap();
        // nc = 0.5, 0.45, ..., 0.05; rank ceil(11 * 0.8) = 9 -> 0.45
        assert!((m.q_alpha - 0.45).abs() < 1e-12);
        assert_eq!(m.n_calibration, 10);
        let back = CalibrationModel::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back, m);
        assert!(CalibrationModel::fit(&samples[..2], 0.2, 0.05).is_err());
    }
}
