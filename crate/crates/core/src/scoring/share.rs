//! Shared-ownership detection over sorted multi-label scores.

use serde::{Deserialize, Serialize};

use crate::scores::{OwnerSet, OwnershipScores};

/// Absorbs representation error when a condition sits exactly on its threshold.
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShareParams {
    /// Minimum score of every owner in the set.
    pub eps_min: f64,
    /// Maximum spread between the best owner and the weakest owner.
    pub eps_in: f64,
    /// Minimum gap between the weakest owner and the best non-owner.
    pub eps_out: f64,
}

impl Default for ShareParams {
    fn default() -> Self {
        Self {
            eps_min: 0.80,
            eps_in: 0.08,
            eps_out: 0.20,
        }
    }
}

impl ShareParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("eps_min", self.eps_min),
            ("eps_in", self.eps_in),
            ("eps_out", self.eps_out),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must be in [0,1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareKind {
    Single,
    Shared,
    #[default]
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShareDecision {
    pub kind: ShareKind,
    pub owners: OwnerSet,
    pub k: usize,
}

impl ShareDecision {
    pub fn undetermined() -> Self {
        Self::default()
    }

    pub fn is_determined(&self) -> bool {
        self.kind != ShareKind::Undetermined
    }
}

/// Picks the largest `k` whose top-k users satisfy all three share conditions.
///
/// With scores sorted descending `s1 >= s2 >= ...` and `s(n+1) = 0`:
/// `s(k) >= eps_min`, `s1 - s(k) <= eps_in`, `s(k) - s(k+1) >= eps_out`.
pub fn detect_shared(scores: &OwnershipScores, p: &ShareParams) -> ShareDecision {
    let ranked = scores.ranked();
    let at = |i: usize| ranked.get(i).map_or(0.0, |(_, v)| *v);
    for k in (1..=ranked.len()).rev() {
        let sk = at(k - 1);
        let ok = sk >= p.eps_min - SLACK
            && at(0) - sk <= p.eps_in + SLACK
            && sk - at(k) >= p.eps_out - SLACK;
        if ok {
            return ShareDecision {
                kind: if k == 1 {
                    ShareKind::Single
                } else {
                    ShareKind::Shared
                },
                owners: ranked[..k].iter().map(|(n, _)| n.to_string()).collect(),
                k,
            };
        }
    }
    ShareDecision::undetermined()
}
