//! Dataset directories: loading, generation and the per-trial manifest.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use owninfer::datagen::{
    generate_environment, Environment, ScenarioSpec, EVENTS_FILE, MAP_FILE, ROSTER_FILE, TRUTH_FILE,
};
use owninfer::history::{read_caption_file, ActionTable, EventLog};
use owninfer::map::{load_map, MapStore};
use owninfer::roster::Roster;
use owninfer::truth::GroundTruth;

use crate::config::RunConfig;
use crate::CliError;

/// Seed added to the base seed for the calibration environment.
pub const CALIBRATION_SEED_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub roster: Roster,
    pub map: MapStore,
    pub log: EventLog,
    pub truth: Option<GroundTruth>,
}

impl From<Environment> for Dataset {
    fn from(env: Environment) -> Self {
        Self {
            roster: env.roster,
            map: env.map,
            log: env.log,
            truth: Some(env.truth),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

/// Reads `roster.json`, `map.json`, `events.txt` and, if present, `truth.json`.
pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let roster = Roster::load(&dir.join(ROSTER_FILE)).map_err(invalid)?;
    let map = load_map(&dir.join(MAP_FILE), &roster).map_err(invalid)?;
    let catalog: HashSet<String> = map.sorted_ids().into_iter().collect();
    let log = read_caption_file(
        &dir.join(EVENTS_FILE),
        &roster,
        Some(&catalog),
        &ActionTable::default(),
    )
    .map_err(invalid)?;
    let truth_path = dir.join(TRUTH_FILE);
    let truth = if truth_path.exists() {
        let t = GroundTruth::load(&truth_path).map_err(invalid)?;
        t.validate(&roster).map_err(invalid)?;
        Some(t)
    } else {
        None
    };
    Ok(Dataset {
        roster,
        map,
        log,
        truth,
    })
}

pub fn load_spec(cfg: &RunConfig, override_path: Option<&Path>) -> Result<ScenarioSpec, CliError> {
    let mut spec = match override_path.or(cfg.spec.as_deref()) {
        Some(p) => ScenarioSpec::load(p).map_err(invalid)?,
        None => ScenarioSpec::default_household(),
    };
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Environment, CliError> {
    let mut s = spec.clone();
    s.seed = seed;
    generate_environment(&s).map_err(invalid)
}

/// Written next to every trial's outputs so the trial can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    /// Dataset directory, relative to the manifest when generated per trial.
    pub data_dir: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn data_dir_from(&self, trial_dir: &Path) -> PathBuf {
        if self.data_dir.is_relative() {
            trial_dir.join(&self.data_dir)
        } else {
            self.data_dir.clone()
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("malformed {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_text(path, &s)
}
