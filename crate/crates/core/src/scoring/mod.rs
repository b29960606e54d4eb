//! Multi-label ownership scoring for one object from its context bundle.

pub mod heuristic;
pub mod known;
pub mod share;

pub use heuristic::{
    heuristic_score, AffinityRule, AffinityTable, HeuristicConfig, HeuristicWeights,
};
pub use known::{build_known, KnownFact, KnownFacts, Provenance, DEFAULT_CONFIDENCE_THRESHOLD};
pub use share::{detect_shared, ShareDecision, ShareKind, ShareParams};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::context::{
    neighbor_context, similar_context, ContextEntry, ContextMetric, SimilarityParams, SpatialParams,
};
use crate::history::{usage_summary, EventLog, Timestamp, UsageSummary};
use crate::llm::{complete_with_retry, extract_json_object, ChatModel, LlmError, ResponseError};
use crate::map::{MapError, MapStore};
use crate::prompts::{self, fill, round_to, NOT_AVAILABLE};
use crate::roster::Roster;
use crate::scores::OwnershipScores;

/// Which context sections feed the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub use_background: bool,
    pub use_history: bool,
    pub use_neighbors: bool,
    pub use_similars: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_background: true,
            use_history: true,
            use_neighbors: true,
            use_similars: true,
        }
    }
}

/// Extraction parameters shared by every bundle in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextParams {
    pub spatial: SpatialParams,
    pub similarity: SimilarityParams,
    pub window_days: f64,
    pub flags: AblationFlags,
}

impl Default for ContextParams {
    fn default() -> Self {
        Self {
            spatial: SpatialParams::default(),
            similarity: SimilarityParams::default(),
            window_days: 365.0,
            flags: AblationFlags::default(),
        }
    }
}

/// Everything the scorer may look at for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextBundle {
    pub object_id: String,
    pub class_label: String,
    pub position: [f64; 3],
    pub roster: Roster,
    pub neighbors: Vec<ContextEntry>,
    pub similars: Vec<ContextEntry>,
    pub usage: UsageSummary,
    pub flags: AblationFlags,
    pub window_days: f64,
}

/// Gathers neighbors, similar objects and the usage summary for `object_id`,
/// with known owners attached to the context entries.
pub fn build_bundle(
    map: &MapStore,
    log: &EventLog,
    roster: &Roster,
    object_id: &str,
    known: &KnownFacts,
    params: &ContextParams,
    now: Timestamp,
) -> Result<ContextBundle, MapError> {
    let rec = map.require(object_id)?;
    let mut neighbors = neighbor_context(map, object_id, &params.spatial)?;
    let mut similars = similar_context(map, object_id, &params.similarity)?;
    known.attach(&mut neighbors);
    known.attach(&mut similars);
    let mut usage = usage_summary(log, object_id, params.window_days, now);
    usage.object.name = rec.class_label.clone();
    Ok(ContextBundle {
        object_id: object_id.to_string(),
        class_label: rec.class_label.clone(),
        position: rec.position,
        roster: roster.clone(),
        neighbors,
        similars,
        usage,
        flags: params.flags,
        window_days: params.window_days,
    })
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn entries_json(entries: &[ContextEntry]) -> Value {
    Value::Array(
        entries
            .iter()
            .map(|e| {
                let mut m = serde_json::Map::new();
                m.insert("object_id".into(), e.object_id.clone().into());
                m.insert("class".into(), e.class_label.clone().into());
                match e.metric {
                    ContextMetric::Neighbor { distance, weight } => {
                        m.insert("distance".into(), round_to(distance, 3).into());
                        m.insert("weight".into(), round_to(weight, 3).into());
                    }
                    ContextMetric::Similar { similarity } => {
                        m.insert("similarity".into(), round_to(similarity, 3).into());
                    }
                }
                if let Some(o) = &e.known_ownership {
                    m.insert(
                        "known_ownership".into(),
                        o.iter().cloned().collect::<Vec<_>>().into(),
                    );
                }
                Value::Object(m)
            })
            .collect(),
    )
}

fn usage_json(usage: &UsageSummary) -> Value {
    let mut v = serde_json::to_value(usage).expect("usage serializes");
    if let Some(users) = v.get_mut("user_summary").and_then(Value::as_array_mut) {
        for u in users {
            if let Some(d) = u.get("last_used_days_ago").and_then(Value::as_f64) {
                u["last_used_days_ago"] = round_to(d, 1).into();
            }
        }
    }
    v
}

/// Instantiates the ownership-inference prompt for the bundle.
pub fn build_inference_prompt(bundle: &ContextBundle, known: &KnownFacts) -> String {
    let mut neighbors = bundle.neighbors.clone();
    let mut similars = bundle.similars.clone();
    known.attach(&mut neighbors);
    known.attach(&mut similars);
    let f = bundle.flags;
    let section = |on: bool, v: Value| {
        if on {
            pretty(&v)
        } else {
            NOT_AVAILABLE.to_string()
        }
    };
    let background = section(f.use_background, bundle.roster.to_background_json());
    let similar = section(f.use_similars, entries_json(&similars));
    let nearby = section(f.use_neighbors, entries_json(&neighbors));
    let usage = section(f.use_history, usage_json(&bundle.usage));
    let output_format = format!(
        "{{{}}}",
        bundle
            .roster
            .names()
            .map(|n| format!("\"{n}\":0.xx"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let window = format!("{}", bundle.window_days);
    fill(
        prompts::INFERENCE_TEMPLATE,
        &[
            ("MEMBER_BACKGROUND", &background),
            ("OBJECT_ID", &bundle.object_id),
            ("OBJECT_CLASS", &bundle.class_label),
            ("SIMILAR_OBJECTS", &similar),
            ("NEARBY_OBJECTS", &nearby),
            ("WINDOW_DAYS", &window),
            ("USAGE_HISTORY", &usage),
            ("OUTPUT_FORMAT", &output_format),
        ],
    )
}

/// Extracts and validates the `ownership_distribution` object of a reply.
pub fn parse_score_response(text: &str, roster: &Roster) -> Result<OwnershipScores, ResponseError> {
    let obj = extract_json_object(text, "ownership_distribution")
        .ok_or_else(|| ResponseError::new("no ownership_distribution object", text))?;
    let dist = obj["ownership_distribution"]
        .as_object()
        .ok_or_else(|| ResponseError::new("ownership_distribution is not an object", text))?;
    let mut scores = Vec::with_capacity(roster.len());
    for name in roster.names() {
        let v = dist
            .get(name)
            .ok_or_else(|| ResponseError::new(format!("missing user {name}"), text))?;
        let x = v
            .as_f64()
            .ok_or_else(|| ResponseError::new(format!("non-numeric score for {name}"), text))?;
        scores.push((name, x.clamp(0.0, 1.0)));
    }
    Ok(OwnershipScores::from_pairs(scores))
}

pub enum ScorerBackend {
    Heuristic,
    /// Remote or replayed chat model; also drives question generation and
    /// answer interpretation.
    Chat(Box<dyn ChatModel>),
}

impl ScorerBackend {
    pub fn chat_mut(&mut self) -> Option<&mut dyn ChatModel> {
        match self {
            ScorerBackend::Heuristic => None,
            ScorerBackend::Chat(c) => Some(c.as_mut()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub scores: OwnershipScores,
    /// Set when the chat backend failed twice and the heuristic was used.
    pub fallback: Option<String>,
}

/// Scores one object. Chat replies that break the output contract are
/// retried once, then replaced by the heuristic score (flagged).
/// Transport failures are retried once, then returned.
pub fn score_object(
    backend: &mut ScorerBackend,
    heuristic: &HeuristicConfig,
    bundle: &ContextBundle,
    known: &KnownFacts,
) -> Result<ScoreOutcome, LlmError> {
    let chat = match backend {
        ScorerBackend::Heuristic => {
            return Ok(ScoreOutcome {
                scores: heuristic_score(bundle, heuristic),
                fallback: None,
            })
        }
        ScorerBackend::Chat(c) => c,
    };
    let prompt = build_inference_prompt(bundle, known);
    let roster = &bundle.roster;
    Ok(
        match complete_with_retry(chat.as_mut(), &prompt, |r| parse_score_response(r, roster))? {
            Ok(scores) => ScoreOutcome {
                scores,
                fallback: None,
            },
            Err(reason) => ScoreOutcome {
                scores: heuristic_score(bundle, heuristic),
                fallback: Some(reason),
            },
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::ObjectRef;
    use crate::llm::{ReplayChat, Transcript};
    use crate::roster::UserProfile;
    use crate::scores::owner_set;

    fn bundle() -> ContextBundle {
        ContextBundle {
            object_id: "Marker".into(),
            class_label: "marker".into(),
            position: [1.0, 2.0, 0.5],
            roster: Roster::default_household(),
            neighbors: vec![ContextEntry {
                object_id: "Pen".into(),
                class_label: "pen".into(),
                metric: ContextMetric::Neighbor {
                    distance: 0.3,
                    weight: 0.8353,
                },
                known_ownership: None,
            }],
            similars: vec![],
            usage: UsageSummary {
                object: ObjectRef {
                    id: "Marker".into(),
                    name: "marker".into(),
                },
                user_summary: vec![],
            },
            flags: AblationFlags::default(),
            window_days: 365.0,
        }
    }

    #[test]
    fn prompt_has_output_contract_and_roster_names() {
        let p = build_inference_prompt(&bundle(), &KnownFacts::default());
        assert!(p.starts_with("You are an excellent household robot.\n"));
        assert!(p.contains("ownership_distribution"));
        assert!(p.contains("### Usage History (last 365 days)"));
        let line = p
            .lines()
            .find(|l| l.contains("\"ownership_distribution\""))
            .unwrap();
        assert_eq!(
            line,
            "  \"ownership_distribution\": {\"Bob\":0.xx, \"Mary\":0.xx, \"Tom\":0.xx}"
        );
        let named = ["Bob", "Mary", "Tom"]
            .iter()
            .filter(|n| line.contains(*n))
            .count();
        assert_eq!(named, 3);
        assert!(p.contains("\"occupation\": \"office worker\""));
    }

    #[test]
    fn disabled_sections_are_marked() {
        let mut b = bundle();
        b.flags.use_history = false;
        let p = build_inference_prompt(&b, &KnownFacts::default());
        let after = p
            .split("### Usage History (last 365 days)\n")
            .nth(1)
            .unwrap();
        assert!(after.starts_with("not available\n"));
        b.flags.use_background = false;
        let p = build_inference_prompt(&b, &KnownFacts::default());
        assert!(p.contains("no formulas.\n\nnot available\n\n### Target Object"));
    }

    #[test]
    fn known_owners_embedded_on_entries() {
        let mut known = KnownFacts::default();
        known.insert(
            "Pen",
            KnownFact {
                owners: owner_set(["Tom"]),
                provenance: Provenance::Answered,
            },
        );
        let p = build_inference_prompt(&bundle(), &known);
        assert!(p.contains("\"known_ownership\": [\n      \"Tom\"\n    ]"));
    }

    #[test]
    fn parses_plain_and_fenced_payloads() {
        let r = Roster::default_household();
        let raw = r#"{"ownership_distribution": {"Bob":0.9,"Mary":0.1,"Tom":0.05}}"#;
        let s = parse_score_response(raw, &r).unwrap();
        assert_eq!(
            s,
            OwnershipScores::from_pairs([("Bob", 0.9), ("Mary", 0.1), ("Tom", 0.05)])
        );
        let fenced = format!("Here you go:\n```json\n{raw}\n```");
        assert_eq!(parse_score_response(&fenced, &r).unwrap(), s);
    }

    #[test]
    fn parse_rejects_contract_violations() {
        let r = Roster::default_household();
        let e = parse_score_response(r#"{"ownership_distribution": {"Bob":0.9,"Mary":0.1}}"#, &r)
            .unwrap_err();
        assert!(e.reason.contains("Tom"));
        assert!(e.raw.contains("Bob"));
        assert!(parse_score_response(
            r#"{"ownership_distribution": {"Bob":"high","Mary":0.1,"Tom":0}}"#,
            &r
        )
        .is_err());
        assert!(parse_score_response("I think Bob.", &r).is_err());
    }

    #[test]
    fn parse_clamps_out_of_range() {
        let r = Roster::default_household();
        let s = parse_score_response(
            r#"{"ownership_distribution": {"Bob":1.4,"Mary":-0.2,"Tom":0.3}}"#,
            &r,
        )
        .unwrap();
        assert_eq!(s.get("Bob"), Some(1.0));
        assert_eq!(s.get("Mary"), Some(0.0));
    }

    #[test]
    fn heuristic_backend_dispatches() {
        let b = bundle();
        let cfg = HeuristicConfig::default();
        let out = score_object(
            &mut ScorerBackend::Heuristic,
            &cfg,
            &b,
            &KnownFacts::default(),
        )
        .unwrap();
        assert_eq!(out.scores, heuristic_score(&b, &cfg));
        assert!(out.fallback.is_none());
    }

    #[test]
    fn replay_backend_returns_recorded_scores() {
        let b = bundle();
        let known = KnownFacts::default();
        let mut t = Transcript::default();
        t.push(
            &build_inference_prompt(&b, &known),
            r#"{"ownership_distribution": {"Bob":0.7,"Mary":0.2,"Tom":0.1}}"#,
        );
        let mut backend = ScorerBackend::Chat(Box::new(ReplayChat::new(&t)));
        let out = score_object(&mut backend, &HeuristicConfig::default(), &b, &known).unwrap();
        assert_eq!(out.scores.get("Bob"), Some(0.7));
        assert!(out.fallback.is_none());
    }

    struct Scripted(Vec<Result<String, LlmError>>);
    impl ChatModel for Scripted {
        fn complete(&mut self, _: &str) -> Result<String, LlmError> {
            self.0.remove(0)
        }
    }

    #[test]
    fn two_malformed_replies_fall_back_to_heuristic() {
        let b = bundle();
        let cfg = HeuristicConfig::default();
        let mut backend = ScorerBackend::Chat(Box::new(Scripted(vec![
            Ok("not json".into()),
            Ok(r#"{"ownership_distribution": {"Bob": 0.5}}"#.into()),
        ])));
        let out = score_object(&mut backend, &cfg, &b, &KnownFacts::default()).unwrap();
        assert_eq!(out.scores, heuristic_score(&b, &cfg));
        assert!(out.fallback.unwrap().contains("missing user"));
    }

    #[test]
    fn one_malformed_reply_is_retried() {
        let b = bundle();
        let mut backend = ScorerBackend::Chat(Box::new(Scripted(vec![
            Ok("oops".into()),
            Ok(r#"{"ownership_distribution": {"Bob":0.6,"Mary":0.6,"Tom":0.1}}"#.into()),
        ])));
        let out = score_object(
            &mut backend,
            &HeuristicConfig::default(),
            &b,
            &KnownFacts::default(),
        )
        .unwrap();
        assert_eq!(out.scores.get("Mary"), Some(0.6));
        assert!(out.fallback.is_none());
    }

    #[test]
    fn repeated_transport_failure_propagates() {
        let b = bundle();
        let mut backend = ScorerBackend::Chat(Box::new(Scripted(vec![
            Err(LlmError::Transport("down".into())),
            Err(LlmError::Transport("still down".into())),
        ])));
        let err = score_object(
            &mut backend,
            &HeuristicConfig::default(),
            &b,
            &KnownFacts::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("still down"));
    }

    #[test]
    fn custom_roster_output_line() {
        let r = Roster::new(vec![
            UserProfile::new("Ann", "mother", "nurse"),
            UserProfile::new("Ben", "son", "student"),
        ])
        .unwrap();
        let mut b = bundle();
        b.roster = r;
        let p = build_inference_prompt(&b, &KnownFacts::default());
        assert!(p.contains("{\"Ann\":0.xx, \"Ben\":0.xx}"));
    }
}
