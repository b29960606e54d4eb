//! Deterministic offline scorer.
//!
//! Each user's score is a clamped weighted sum of four terms:
//! event share on the object, exponential recency of last use, a role/class
//! affinity prior, and agreement with known owners of context objects.

use serde::{Deserialize, Serialize};

use super::ContextBundle;
use crate::scores::OwnershipScores;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicWeights {
    pub frequency: f64,
    pub recency: f64,
    pub prior: f64,
    pub context: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        Self {
            frequency: 0.4,
            recency: 0.2,
            prior: 0.2,
            context: 0.2,
        }
    }
}

impl HeuristicWeights {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.frequency, self.recency, self.prior, self.context];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("heuristic weights must be non-negative".into());
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err("heuristic weights must have a positive sum".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityRule {
    pub role: String,
    pub class: String,
    pub value: f64,
}

/// Role/class prior. Unlisted pairs get `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffinityTable {
    pub default: f64,
    pub rules: Vec<AffinityRule>,
}

impl Default for AffinityTable {
    fn default() -> Self {
        Self {
            default: 0.5,
            rules: Vec::new(),
        }
    }
}

impl AffinityTable {
    pub fn lookup(&self, role: &str, class: &str) -> f64 {
        self.rules
            .iter()
            .find(|r| r.role.eq_ignore_ascii_case(role) && r.class.eq_ignore_ascii_case(class))
            .map_or(self.default, |r| r.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub weights: HeuristicWeights,
    /// Recency decay constant in days.
    pub tau_days: f64,
    pub affinity: AffinityTable,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            weights: HeuristicWeights::default(),
            tau_days: 3.0,
            affinity: AffinityTable::default(),
        }
    }
}

/// Scores every roster user for the bundle's object.
///
/// Disabled context sections zero their term; the remaining weights are scaled
/// up so they keep the original total.
pub fn heuristic_score(bundle: &ContextBundle, cfg: &HeuristicConfig) -> OwnershipScores {
    let w = cfg.weights;
    let flags = bundle.flags;
    let use_ctx = flags.use_neighbors || flags.use_similars;
    let total = w.frequency + w.recency + w.prior + w.context;
    let active = if flags.use_history {
        w.frequency + w.recency
    } else {
        0.0
    } + if flags.use_background { w.prior } else { 0.0 }
        + if use_ctx { w.context } else { 0.0 };
    let scale = if active > 0.0 { total / active } else { 0.0 };

    let total_events = bundle.usage.total_events();
    let facts: Vec<_> = bundle
        .neighbors
        .iter()
        .filter(|_| flags.use_neighbors)
        .chain(bundle.similars.iter().filter(|_| flags.use_similars))
        .filter_map(|e| e.known_ownership.as_ref())
        .filter(|o| !o.is_empty())
        .collect();

    let scores = bundle.roster.users().iter().map(|user| {
        let usage = bundle.usage.user(&user.name);
        let freq = match (usage, total_events) {
            (Some(u), t) if t > 0 => u.total_events as f64 / t as f64,
            _ => 0.0,
        };
        let rec = usage.map_or(0.0, |u| (-u.last_used_days_ago / cfg.tau_days).exp());
        let prior = cfg.affinity.lookup(&user.role, &bundle.class_label);
        let ctx = if facts.is_empty() {
            0.5
        } else {
            facts.iter().filter(|o| o.contains(&user.name)).count() as f64 / facts.len() as f64
        };
        let mut s = 0.0;
        if flags.use_history {
            s += w.frequency * freq + w.recency * rec;
        }
        if flags.use_background {
            s += w.prior * prior;
        }
        if use_ctx {
            s += w.context * ctx;
        }
        (user.name.clone(), (s * scale).clamp(0.0, 1.0))
    });
    OwnershipScores::from_pairs(scores)
}
