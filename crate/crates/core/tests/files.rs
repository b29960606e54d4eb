//! On-disk round trips for generated environments and run artifacts.

use std::collections::HashSet;

use owninfer::acquisition::{run_acquisition, LoopParams, RunTrace};
use owninfer::conformal::CalibrationModel;
use owninfer::datagen::{
    generate_environment, ScenarioSpec, EVENTS_FILE, MAP_FILE, ROSTER_FILE, TRUTH_FILE,
};
use owninfer::history::{read_caption_file, ActionTable};
use owninfer::interaction::Respondent;
use owninfer::llm::Transcript;
use owninfer::map::load_map;
use owninfer::roster::Roster;
use owninfer::scoring::ScorerBackend;
use owninfer::truth::GroundTruth;

#[test]
fn environment_reloads_identically() {
    let mut spec = ScenarioSpec::default_household();
    spec.seed = 21;
    let env = generate_environment(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    env.write_to(dir.path()).unwrap();

    let roster = Roster::load(&dir.path().join(ROSTER_FILE)).unwrap();
    assert_eq!(roster, env.roster);
    let map = load_map(&dir.path().join(MAP_FILE), &roster).unwrap();
    assert_eq!(map.to_map_file(), env.map.to_map_file());
    let catalog: HashSet<String> = map.sorted_ids().into_iter().collect();
    let log = read_caption_file(
        &dir.path().join(EVENTS_FILE),
        &roster,
        Some(&catalog),
        &ActionTable::default(),
    )
    .unwrap();
    assert_eq!(log.to_caption_text(), env.log.to_caption_text());
    assert_eq!(
        GroundTruth::load(&dir.path().join(TRUTH_FILE)).unwrap(),
        env.truth
    );

    // A run on the reloaded data matches a run on the in-memory data.
    let cal = CalibrationModel {
        alpha: 0.2,
        q_alpha: 0.4,
        alpha_cp: 0.05,
        q_cp: 0.2,
        n_calibration: 34,
    };
    let run = |m, l: &_| {
        run_acquisition(
            m,
            l,
            &roster,
            &mut ScorerBackend::Heuristic,
            &mut Respondent::Oracle(env.truth.owner_map()),
            &cal,
            &LoopParams::default(),
            Some(&env.truth),
        )
        .to_json_string()
    };
    let a = run(env.map.clone(), &env.log);
    let b = run(map, &log);
    assert_eq!(a, b);
    assert_eq!(RunTrace::from_json_str(&a).unwrap().to_json_string(), a);
}

#[test]
fn calibration_and_transcript_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cal = CalibrationModel {
        alpha: 0.2,
        q_alpha: 0.1 + 0.2,
        alpha_cp: 0.05,
        q_cp: 1.0 / 3.0,
        n_calibration: 40,
    };
    let path = dir.path().join("cal.json");
    cal.save(&path).unwrap();
    let back = CalibrationModel::load(&path).unwrap();
    assert_eq!(back.q_alpha.to_bits(), cal.q_alpha.to_bits());
    assert_eq!(back.q_cp.to_bits(), cal.q_cp.to_bits());

    let mut t = Transcript::default();
    t.push("prompt one", "reply one");
    t.push("prompt two", "reply \"two\"\n");
    let path = dir.path().join("t.json");
    t.save(&path).unwrap();
    assert_eq!(Transcript::load(&path).unwrap(), t);
    assert!(Transcript::load(&dir.path().join("missing.json")).is_err());
}
