//! Seeded synthetic household environments: objects with owner sets,
//! scenario-driven usage captions, positions, unit features and the
//! temporal train/eval split.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{parse_events, ActionTable, EventLog, Timestamp};
use crate::map::{MapEntry, MapStore};
use crate::roster::{Roster, UserProfile};
use crate::scores::OwnerSet;
use crate::truth::{GroundTruth, Scenario, TruthEntry};

pub const DEFAULT_SPEC_TOML: &str = include_str!("../assets/default_spec.toml");

pub const MAP_FILE: &str = "map.json";
pub const EVENTS_FILE: &str = "events.txt";
pub const TRAIN_EVENTS_FILE: &str = "events_train.txt";
pub const EVAL_EVENTS_FILE: &str = "events_eval.txt";
pub const TRUTH_FILE: &str = "truth.json";
pub const ROSTER_FILE: &str = "roster.json";

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid spec field {field}: {reason}")]
    Field { field: String, reason: String },
    #[error("malformed spec: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn field_err(field: impl Into<String>, reason: impl Into<String>) -> SpecError {
    SpecError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub name: String,
    pub center: [f64; 3],
    pub half_extent: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    pub owners: Vec<String>,
    pub scenario: Scenario,
    pub room: String,
    /// Sampled inside the room when absent.
    #[serde(default)]
    pub position: Option<[f64; 3]>,
    /// Overrides the spec-wide borrowing probability.
    #[serde(default)]
    pub p_borrow: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::days")]
    pub days: u32,
    #[serde(default = "defaults::start_date")]
    pub start_date: String,
    #[serde(default = "defaults::day_start")]
    pub day_start: String,
    #[serde(default = "defaults::day_end")]
    pub day_end: String,
    #[serde(default = "defaults::sessions_per_day")]
    pub sessions_per_day: [u32; 2],
    #[serde(default = "defaults::events_per_session")]
    pub events_per_session: [u32; 2],
    /// Minutes between consecutive events of one session.
    #[serde(default = "defaults::event_gap_minutes")]
    pub event_gap_minutes: [u32; 2],
    /// Sessions of one object are separated by more than this many minutes.
    #[serde(default = "defaults::session_gap_minutes")]
    pub session_gap_minutes: u32,
    #[serde(default = "defaults::p_borrow")]
    pub p_borrow: f64,
    #[serde(default = "defaults::train_days")]
    pub train_days: u32,
    #[serde(default = "defaults::feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "defaults::owner_weight")]
    pub owner_weight: f64,
    #[serde(default = "defaults::noise_weight")]
    pub noise_weight: f64,
    pub users: Vec<UserProfile>,
    pub rooms: Vec<RoomSpec>,
    pub objects: Vec<ObjectSpec>,
}

mod defaults {
    pub fn days() -> u32 {
        7
    }
    pub fn start_date() -> String {
        "2025-01-06".into()
    }
    pub fn day_start() -> String {
        "06:00".into()
    }
    pub fn day_end() -> String {
        "23:00".into()
    }
    pub fn sessions_per_day() -> [u32; 2] {
        [2, 4]
    }
    pub fn events_per_session() -> [u32; 2] {
        [2, 5]
    }
    pub fn event_gap_minutes() -> [u32; 2] {
        [1, 5]
    }
    pub fn session_gap_minutes() -> u32 {
        30
    }
    pub fn p_borrow() -> f64 {
        0.2
    }
    pub fn train_days() -> u32 {
        3
    }
    pub fn feature_dim() -> usize {
        crate::map::DEFAULT_FEATURE_DIM
    }
    pub fn owner_weight() -> f64 {
        0.6
    }
    pub fn noise_weight() -> f64 {
        0.4
    }
}

struct Calendar {
    start: NaiveDate,
    day_start: NaiveTime,
    window_minutes: i64,
}

fn parse_time(field: &str, s: &str) -> Result<NaiveTime, SpecError> {
    NaiveTime::parse_from_str(s, "%H:%M").map_err(|e| field_err(field, format!("{s:?}: {e}")))
}

fn check_range(field: &str, r: [u32; 2], min: u32) -> Result<(), SpecError> {
    if r[0] < min || r[0] > r[1] {
        return Err(field_err(
            field,
            format!("need {min} <= min <= max, got {r:?}"),
        ));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SpecError> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn default_household() -> Self {
        Self::from_toml_str(DEFAULT_SPEC_TOML).expect("bundled spec is valid")
    }

    pub fn roster(&self) -> Result<Roster, SpecError> {
        Roster::new(self.users.clone()).map_err(|e| field_err("users", e.to_string()))
    }

    fn calendar(&self) -> Result<Calendar, SpecError> {
        let start = NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| field_err("start_date", format!("{:?}: {e}", self.start_date)))?;
        let day_start = parse_time("day_start", &self.day_start)?;
        let day_end = parse_time("day_end", &self.day_end)?;
        let window_minutes = (day_end - day_start).num_minutes();
        if window_minutes <= 0 {
            return Err(field_err("day_end", "must be later than day_start"));
        }
        Ok(Calendar {
            start,
            day_start,
            window_minutes,
        })
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let roster = self.roster()?;
        let cal = self.calendar()?;
        check_range("sessions_per_day", self.sessions_per_day, 1)?;
        check_range("events_per_session", self.events_per_session, 1)?;
        check_range("event_gap_minutes", self.event_gap_minutes, 1)?;
        if self.event_gap_minutes[1] > self.session_gap_minutes {
            return Err(field_err(
                "event_gap_minutes",
                "within-session gaps must not exceed session_gap_minutes",
            ));
        }
        let longest =
            i64::from(self.events_per_session[1] - 1) * i64::from(self.event_gap_minutes[1]);
        let slot = cal.window_minutes / i64::from(self.sessions_per_day[1]);
        if slot < longest + i64::from(self.session_gap_minutes) + 1 {
            return Err(field_err(
                "sessions_per_day",
                "daily window too short for the requested sessions",
            ));
        }
        if !(0.0..1.0).contains(&self.p_borrow) {
            return Err(field_err("p_borrow", "must lie in [0, 1)"));
        }
        if self.feature_dim == 0 {
            return Err(field_err("feature_dim", "must be positive"));
        }
        if !(self.owner_weight >= 0.0 && self.noise_weight >= 0.0) {
            return Err(field_err(
                "owner_weight",
                "feature weights must be non-negative",
            ));
        }
        let mut rooms = HashSet::new();
        for (i, r) in self.rooms.iter().enumerate() {
            if !rooms.insert(r.name.as_str()) {
                return Err(field_err(format!("rooms[{i}].name"), "duplicate room"));
            }
            if !r.half_extent.iter().chain(&r.center).all(|v| v.is_finite())
                || r.half_extent.iter().any(|h| *h < 0.0)
            {
                return Err(field_err(
                    format!("rooms[{i}]"),
                    "extent must be finite and non-negative",
                ));
            }
        }
        if self.objects.is_empty() {
            return Err(field_err("objects", "at least one object is required"));
        }
        let mut ids = HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            let f = |name: &str| format!("objects[{i}].{name}");
            if o.id.trim().is_empty() || o.id.contains(char::is_whitespace) {
                return Err(field_err(f("id"), "must be a non-empty single word"));
            }
            if !ids.insert(o.id.as_str()) {
                return Err(field_err(f("id"), format!("duplicate id {}", o.id)));
            }
            if o.class.trim().is_empty() {
                return Err(field_err(f("class"), "must be non-empty"));
            }
            if !rooms.contains(o.room.as_str()) {
                return Err(field_err(f("room"), format!("unknown room {}", o.room)));
            }
            let owners: OwnerSet = o.owners.iter().cloned().collect();
            if owners.len() != o.owners.len() {
                return Err(field_err(f("owners"), "duplicate owner"));
            }
            if let Some(u) = owners.iter().find(|u| !roster.contains(u)) {
                return Err(field_err(f("owners"), format!("unknown user {u}")));
            }
            let ok = match o.scenario {
                Scenario::SingleUser => owners.len() == 1,
                Scenario::TemporarySharing => !owners.is_empty(),
                Scenario::MultiUserSharing => owners.len() >= 2,
            };
            if !ok {
                return Err(field_err(
                    f("owners"),
                    format!(
                        "{} owners do not fit scenario {}",
                        owners.len(),
                        o.scenario.as_str()
                    ),
                ));
            }
            if let Some(p) = o.p_borrow {
                if !(0.0..1.0).contains(&p) {
                    return Err(field_err(f("p_borrow"), "must lie in [0, 1)"));
                }
            }
            if o.position.is_some_and(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(field_err(f("position"), "must be finite"));
            }
        }
        Ok(())
    }
}

/// Picks the user of the next session on `object`.
///
/// `usage_counts` holds the sessions each user has had on this object so far.
pub fn assign_user<R: Rng + ?Sized>(
    object: &ObjectSpec,
    p_borrow: f64,
    roster: &Roster,
    rng: &mut R,
    usage_counts: &BTreeMap<String, usize>,
) -> String {
    match object.scenario {
        Scenario::SingleUser => object.owners[0].clone(),
        Scenario::TemporarySharing => {
            let others: Vec<&str> = roster
                .names()
                .filter(|n| !object.owners.iter().any(|o| o == n))
                .collect();
            if !others.is_empty() && rng.random::<f64>() < p_borrow {
                others[rng.random_range(0..others.len())].to_string()
            } else {
                object.owners[rng.random_range(0..object.owners.len())].clone()
            }
        }
        Scenario::MultiUserSharing => {
            let mut owners: Vec<&String> = object.owners.iter().collect();
            owners.sort();
            owners
                .into_iter()
                .min_by_key(|u| usage_counts.get(*u).copied().unwrap_or(0))
                .expect("multi-user objects have owners")
                .clone()
        }
    }
}

fn session_verbs<R: Rng + ?Sized>(n: u32, rng: &mut R) -> Vec<&'static str> {
    const MIDDLE: [&str; 4] = ["uses", "uses", "carries", "cleans"];
    let mut verbs = Vec::with_capacity(n as usize);
    for j in 0..n {
        let v = if j == 0 {
            if rng.random::<f64>() < 0.25 {
                "looks for"
            } else {
                "takes"
            }
        } else if j + 1 == n {
            "puts back"
        } else {
            MIDDLE[rng.random_range(0..MIDDLE.len())]
        };
        verbs.push(v);
    }
    verbs
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    normalize(v)
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / n).collect()
    }
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, xi) in acc.iter_mut().zip(x) {
        *y += a * xi;
    }
}

/// A generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub roster: Roster,
    pub map: MapStore,
    pub log: EventLog,
    pub truth: GroundTruth,
    pub train_days: u32,
}

/// Builds the map, caption log and ground truth. Deterministic in the spec.
pub fn generate_environment(spec: &ScenarioSpec) -> Result<Environment, SpecError> {
    spec.validate()?;
    let roster = spec.roster()?;
    let cal = spec.calendar()?;
    let rooms: BTreeMap<&str, &RoomSpec> =
        spec.rooms.iter().map(|r| (r.name.as_str(), r)).collect();

    let mut base_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut class_bases: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in &spec.objects {
        if !class_bases.contains_key(o.class.as_str()) {
            class_bases.insert(&o.class, unit_gaussian(&mut base_rng, spec.feature_dim));
        }
    }
    let user_offsets: BTreeMap<&str, Vec<f64>> = roster
        .names()
        .map(|n| (n, unit_gaussian(&mut base_rng, spec.feature_dim)))
        .collect();

    let mut entries = Vec::with_capacity(spec.objects.len());
    let mut captions: Vec<(Timestamp, String)> = Vec::new();
    let mut truth = GroundTruth::default();
    for (idx, o) in spec.objects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(idx as u64 + 1);

        let room = rooms[o.room.as_str()];
        let position = o.position.unwrap_or_else(|| {
            std::array::from_fn(|k| {
                let h = room.half_extent[k];
                room.center[k]
                    + if h > 0.0 {
                        rng.random_range(-h..=h)
                    } else {
                        0.0
                    }
            })
        });
        let mut feature = class_bases[o.class.as_str()].clone();
        let mut owner_dir = vec![0.0; spec.feature_dim];
        for u in &o.owners {
            axpy(&mut owner_dir, 1.0, &user_offsets[u.as_str()]);
        }
        axpy(&mut feature, spec.owner_weight, &normalize(owner_dir));
        axpy(
            &mut feature,
            spec.noise_weight,
            &unit_gaussian(&mut rng, spec.feature_dim),
        );
        entries.push(MapEntry {
            object_id: o.id.clone(),
            class_label: o.class.clone(),
            position,
            feature: normalize(feature),
            owners: None,
            scores: None,
        });
        truth.objects.insert(
            o.id.clone(),
            TruthEntry {
                owners: o.owners.iter().cloned().collect(),
                scenario: Some(o.scenario),
            },
        );

        let p_borrow = o.p_borrow.unwrap_or(spec.p_borrow);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for day in 0..spec.days {
            let day_origin = cal.start.and_time(cal.day_start) + Duration::days(i64::from(day));
            let n = rng.random_range(spec.sessions_per_day[0]..=spec.sessions_per_day[1]);
            let slot = cal.window_minutes / i64::from(n);
            for s in 0..n {
                let user = assign_user(o, p_borrow, &roster, &mut rng, &counts);
                *counts.entry(user.clone()).or_default() += 1;
                let n_events =
                    rng.random_range(spec.events_per_session[0]..=spec.events_per_session[1]);
                let gaps: Vec<i64> = (1..n_events)
                    .map(|_| {
                        i64::from(
                            rng.random_range(spec.event_gap_minutes[0]..=spec.event_gap_minutes[1]),
                        )
                    })
                    .collect();
                let duration: i64 = gaps.iter().sum();
                let latest_start = slot - duration - i64::from(spec.session_gap_minutes) - 1;
                let mut t = i64::from(s) * slot + rng.random_range(0..=latest_start);
                let verbs = session_verbs(n_events, &mut rng);
                for (j, verb) in verbs.iter().enumerate() {
                    if j > 0 {
                        t += gaps[j - 1];
                    }
                    let ts = Timestamp(day_origin + Duration::minutes(t));
                    captions.push((ts, format!("{ts} {user} {verb} the {}", o.id)));
                }
            }
        }
    }
    captions.sort_by_key(|(ts, _)| *ts);

    let map = MapStore::from_entries(entries, &roster)
        .map_err(|e| field_err("objects", e.to_string()))?;
    let catalog: HashSet<String> = spec.objects.iter().map(|o| o.id.clone()).collect();
    let log = parse_events(
        captions.iter().map(|(_, c)| c.as_str()),
        &roster,
        Some(&catalog),
        &ActionTable::default(),
    )
    .map_err(|e| field_err("objects", format!("generated caption failed to parse: {e}")))?;
    Ok(Environment {
        roster,
        map,
        log,
        truth,
        train_days: spec.train_days,
    })
}

/// Events strictly before `earliest + train_days` form the training log;
/// the rest, including the boundary, form the evaluation log.
pub fn split_by_time(log: &EventLog, train_days: u32) -> (EventLog, EventLog) {
    let Some(t0) = log.earliest() else {
        return (EventLog::default(), EventLog::default());
    };
    let cut = t0.plus(Duration::days(i64::from(train_days)));
    let (train, eval): (Vec<_>, Vec<_>) = log
        .events()
        .iter()
        .cloned()
        .partition(|e| e.timestamp < cut);
    (EventLog::from_events(train), EventLog::from_events(eval))
}

impl Environment {
    /// Writes the map, captions, truth, roster and the train/eval caption split.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let (train, eval) = split_by_time(&self.log, self.train_days);
        let files = [
            (MAP_FILE, self.map.to_map_file().to_json_string()),
            (EVENTS_FILE, self.log.to_caption_text()),
            (TRAIN_EVENTS_FILE, train.to_caption_text()),
            (EVAL_EVENTS_FILE, eval.to_caption_text()),
            (TRUTH_FILE, self.truth.to_json_string()),
            (ROSTER_FILE, self.roster.to_json_string()),
        ];
        for (name, text) in files {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}
