mod support;

use std::path::Path;
use std::process::Command;

use owninfer::acquisition::RunTrace;
use owninfer_cli::CliError;

use support::{fixture_dir, run_cli};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_all_dataset_files() {
    let tmp = tempfile::tempdir().unwrap();
    let printed = run_cli(&["--out", s(tmp.path()), "gen"]).unwrap();
    assert!(printed.contains("34 objects"), "{printed}");
    for f in [
        "map.json",
        "events.txt",
        "events_train.txt",
        "events_eval.txt",
        "truth.json",
        "roster.json",
    ] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn bad_input_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    for args in [
        vec!["--out", out, "run", "--scorer", "magic"],
        vec!["--out", out, "run", "--ablation", "no-everything"],
        vec!["--out", out, "run", "--trials", "0"],
        vec![
            "--out",
            out,
            "run",
            "--respondent",
            "scripted:/nonexistent/answers.txt",
        ],
        vec!["--out", out, "eval"],
        vec!["--out", out, "gen", "--spec", "/nonexistent/spec.toml"],
    ] {
        let err = run_cli(&args).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)), "{args:?}: {err}");
        assert_eq!(err.exit_code(), 1);
    }
}

#[test]
fn llm_scorer_needs_key_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "scorer = \"llm\"\n[llm]\napi_key_env = \"OWNINFER_TEST_KEY_THAT_IS_NOT_SET\"\n",
    )
    .unwrap();
    let err = run_cli(&["--config", s(&cfg), "--out", s(tmp.path()), "run"]).unwrap_err();
    assert!(
        err.to_string()
            .contains("OWNINFER_TEST_KEY_THAT_IS_NOT_SET"),
        "{err}"
    );
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn config_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "api_key = \"sk-should-not-live-here\"\n").unwrap();
    let err = run_cli(&["--config", s(&cfg), "run"]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn scripted_run_then_single_file_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture_dir();
    let answers = tmp.path().join("answers.txt");
    std::fs::write(
        &answers,
        "It belongs to Bob, Mary and Tom.\nMary and Tom share it.\n",
    )
    .unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "out = \"out\"\nrespondent = \"scripted:answers.txt\"\ndata_dir = {:?}\ncalibration = {:?}\n",
            s(&fx.join("data")),
            s(&fx.join("calibration.json"))
        ),
    )
    .unwrap();
    run_cli(&["--config", s(&cfg), "run", "--q-max", "2"]).unwrap();
    let trial = tmp.path().join("out/runs/owninfer/trial_00");
    let trace =
        RunTrace::from_json_str(&std::fs::read_to_string(trial.join("trace.json")).unwrap())
            .unwrap();
    assert!(trace.q_cnt <= 2);
    assert_eq!(trace.header.respondent, "scripted");
    let dialogue = std::fs::read_to_string(trial.join("dialogue.txt")).unwrap();
    assert!(dialogue.contains("A: It belongs to Bob, Mary and Tom."));

    let printed = run_cli(&[
        "--out",
        s(&tmp.path().join("eval")),
        "eval",
        "--predictions",
        s(&trial.join("predictions_frequency.json")),
        "--truth",
        s(&fx.join("data/truth.json")),
    ])
    .unwrap();
    assert!(printed.contains("frequency"));
    assert!(tmp.path().join("eval/report.json").is_file());
    assert!(tmp.path().join("eval/summary.csv").is_file());
}

#[test]
fn no_questioning_ablation_asks_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    run_cli(&[
        "--out",
        s(tmp.path()),
        "--seed",
        "3",
        "run",
        "--ablation",
        "no-questioning",
    ])
    .unwrap();
    let trace = tmp
        .path()
        .join("runs/owninfer_no_questioning/trial_00/trace.json");
    let trace = RunTrace::from_json_str(&std::fs::read_to_string(trace).unwrap()).unwrap();
    assert_eq!(trace.q_cnt, 0);
    assert_eq!(trace.predictions.len(), 34);
}

#[test]
fn replay_detects_a_tampered_trace() {
    let tmp = tempfile::tempdir().unwrap();
    run_cli(&["--out", s(tmp.path()), "--seed", "1", "run"]).unwrap();
    let trial = tmp.path().join("runs/owninfer/trial_00");
    run_cli(&["replay", "--trace", s(&trial.join("trace.json"))]).unwrap();

    let mut trace =
        RunTrace::from_json_str(&std::fs::read_to_string(trial.join("trace.json")).unwrap())
            .unwrap();
    trace.passes[0].rescored[0].scores.set("Bob", 0.123);
    let tampered = trial.join("tampered.json");
    std::fs::write(&tampered, trace.to_json_string()).unwrap();
    let err = run_cli(&["replay", "--trace", s(&tampered)]).unwrap_err();
    assert!(matches!(err, CliError::Runtime(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn binary_reports_errors_with_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_owninfer");
    let st = Command::new(bin)
        .args(["run", "--scorer", "magic"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("unknown scorer"));
    let st = Command::new(bin).arg("--help").output().unwrap();
    assert!(st.status.success());
}

#[test]
fn bad_spec_reports_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("bad.toml");
    let text = owninfer::datagen::DEFAULT_SPEC_TOML.replace("seed = 7", "seed = 7\np_borrow = 1.5");
    std::fs::write(&spec, text).unwrap();
    let err = run_cli(&["--out", s(tmp.path()), "gen", "--spec", s(&spec)]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("p_borrow"), "{err}");
}

#[test]
fn no_questioning_equals_zero_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    run_cli(&[
        "--out",
        out,
        "--seed",
        "4",
        "run",
        "--ablation",
        "no-questioning",
    ])
    .unwrap();
    run_cli(&["--out", out, "--seed", "4", "run", "--q-max", "0"]).unwrap();
    let preds = |m: &str| {
        let v: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(
                tmp.path()
                    .join(format!("runs/{m}/trial_00/predictions.json")),
            )
            .unwrap(),
        )
        .unwrap();
        v["predictions"].clone()
    };
    assert_eq!(preds("owninfer_no_questioning"), preds("owninfer"));
}
