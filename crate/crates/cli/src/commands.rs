//! The gen, calibrate, run, eval and replay subcommands.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use owninfer::acquisition::{
    calibration_samples, run_acquisition, single_shot_scores, LoopParams, RunTrace,
};
use owninfer::baselines::Baseline;
use owninfer::conformal::{nonconformity, prediction_set, CalibrationModel, CalibrationSample};
use owninfer::evaluation::{
    compute_metrics, rows_to_csv, step_curve, step_curve_csv, summarize, MetricsReport,
    Predictions, SummaryRow,
};
use owninfer::interaction::Respondent;
use owninfer::llm::{OpenAiClient, RecordingChat, ReplayChat, Transcript};
use owninfer::scoring::ScorerBackend;
use owninfer::truth::GroundTruth;

use crate::config::RunConfig;
use crate::dataset::{
    generate, load_dataset, load_spec, read_json, write_json, write_text, Dataset, Manifest,
    CALIBRATION_SEED_OFFSET, MANIFEST_FILE,
};
use crate::CliError;

pub const TRACE_FILE: &str = "trace.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const DIALOGUE_FILE: &str = "dialogue.txt";
pub const REPLAY_TRACE_FILE: &str = "replay_trace.json";

fn io_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{what}: {e}"))
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| io_err("cannot write output", e))
}

/// Predictions of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_questions: Option<usize>,
    pub predictions: Predictions,
}

pub fn gen(
    cfg: &RunConfig,
    spec_path: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let spec = load_spec(cfg, spec_path.as_deref())?;
    let env = generate(&spec, spec.seed)?;
    env.write_to(&cfg.out)
        .map_err(|e| io_err(&format!("cannot write dataset to {}", cfg.out.display()), e))?;
    let mut by_scenario: BTreeMap<&str, usize> = BTreeMap::new();
    for e in env.truth.objects.values() {
        if let Some(s) = e.scenario {
            *by_scenario.entry(s.as_str()).or_default() += 1;
        }
    }
    say(
        out,
        format!(
            "generated {} objects, {} users, {} events (seed {}) in {}",
            env.map.len(),
            env.roster.len(),
            env.log.len(),
            spec.seed,
            cfg.out.display()
        ),
    )?;
    for (k, v) in by_scenario {
        say(out, format!("  {k}: {v}"))?;
    }
    Ok(())
}

/// Scorer backend plus the transcript handle when recording a live model.
struct Scorer {
    backend: ScorerBackend,
    recording: Option<Arc<Mutex<Transcript>>>,
}

fn build_scorer(cfg: &RunConfig) -> Result<Scorer, CliError> {
    let spec = cfg.scorer.as_str();
    if spec == "heuristic" {
        return Ok(Scorer {
            backend: ScorerBackend::Heuristic,
            recording: None,
        });
    }
    if spec == "llm" {
        let client = OpenAiClient::from_env(cfg.llm.clone())
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let rec = RecordingChat::new(Box::new(client));
        let handle = rec.handle();
        return Ok(Scorer {
            backend: ScorerBackend::Chat(Box::new(rec)),
            recording: Some(handle),
        });
    }
    if let Some(path) = spec.strip_prefix("replay:") {
        let t =
            Transcript::load(Path::new(path)).map_err(|e| CliError::Validation(e.to_string()))?;
        return Ok(Scorer {
            backend: ScorerBackend::Chat(Box::new(ReplayChat::new(&t))),
            recording: None,
        });
    }
    Err(CliError::Validation(format!(
        "unknown scorer {spec:?}; expected heuristic, llm or replay:<file>"
    )))
}

fn save_recording(rec: &Option<Arc<Mutex<Transcript>>>, path: &Path) -> Result<(), CliError> {
    if let Some(h) = rec {
        let t = h.lock().expect("transcript lock");
        write_text(path, &t.to_json_string())?;
    }
    Ok(())
}

fn build_respondent(cfg: &RunConfig, truth: Option<&GroundTruth>) -> Result<Respondent, CliError> {
    let spec = cfg.respondent.as_str();
    match spec {
        "oracle" => truth
            .map(|t| Respondent::Oracle(t.owner_map()))
            .ok_or_else(|| CliError::Validation("oracle respondent needs truth.json".into())),
        "console" => Ok(Respondent::stdio()),
        _ => match spec.strip_prefix("scripted:") {
            Some(path) => Respondent::scripted_from_file(Path::new(path))
                .map_err(|e| CliError::Validation(format!("cannot read answers {path}: {e}"))),
            None => Err(CliError::Validation(format!(
                "unknown respondent {spec:?}; expected oracle, scripted:<file> or console"
            ))),
        },
    }
}

/// Applies a named ablation; returns the method label used in output paths.
pub fn apply_ablation(name: &str, params: &mut LoopParams) -> Result<String, CliError> {
    let f = &mut params.context.flags;
    match name {
        "full" => return Ok("owninfer".into()),
        "no-background" => f.use_background = false,
        "no-history" => f.use_history = false,
        "no-neighbors" => f.use_neighbors = false,
        "no-similars" => f.use_similars = false,
        "no-context" => {
            f.use_neighbors = false;
            f.use_similars = false;
        }
        "no-questioning" => params.q_max = Some(0),
        other => {
            return Err(CliError::Validation(format!("unknown ablation {other:?}")));
        }
    }
    Ok(format!("owninfer_{}", name.replace('-', "_")))
}

fn calibration_dataset(cfg: &RunConfig, base_seed: u64) -> Result<Dataset, CliError> {
    match &cfg.calibration_data_dir {
        Some(dir) => load_dataset(dir),
        None => {
            let spec = load_spec(cfg, None)?;
            Ok(generate(&spec, base_seed + CALIBRATION_SEED_OFFSET)?.into())
        }
    }
}

#[derive(Debug, Serialize)]
struct CalibrationRecord<'a> {
    sample: &'a CalibrationSample,
    nonconformity: f64,
    cp_score: f64,
}

fn base_seed(cfg: &RunConfig) -> Result<u64, CliError> {
    Ok(match cfg.seed {
        Some(s) => s,
        None => load_spec(cfg, None)?.seed,
    })
}

/// Fits and saves the calibration model; the configured ablation is not applied.
pub fn calibrate(cfg: &RunConfig, out: &mut dyn Write) -> Result<CalibrationModel, CliError> {
    cfg.validate()?;
    let seed = base_seed(cfg)?;
    let data = calibration_dataset(cfg, seed)?;
    let truth = data
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Validation("calibration data needs truth.json".into()))?;
    let mut scorer = build_scorer(cfg)?;
    let scores = single_shot_scores(
        &data.map,
        &data.log,
        &data.roster,
        &mut scorer.backend,
        &cfg.params,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    save_recording(
        &scorer.recording,
        &cfg.out.join("calibration_transcript.json"),
    )?;
    let samples = calibration_samples(scores, truth);
    let model = CalibrationModel::fit(&samples, cfg.conformal.alpha, cfg.conformal.alpha_cp)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let records: Vec<CalibrationRecord> = samples
        .iter()
        .map(|s| CalibrationRecord {
            sample: s,
            nonconformity: nonconformity(&s.scores, &s.true_owners).expect("truth is non-empty"),
            cp_score: prediction_set(&s.scores, model.q_alpha).cp_score,
        })
        .collect();
    let path = cfg.calibration_path();
    write_text(&path, &model.to_json_string())?;
    write_json(&cfg.out.join("calibration_samples.json"), &records)?;
    say(
        out,
        format!(
            "calibrated on {} objects: q_alpha = {:.4} (alpha {}), q_cp = {:.4} (alpha_cp {}) -> {}",
            model.n_calibration,
            model.q_alpha,
            model.alpha,
            model.q_cp,
            model.alpha_cp,
            path.display()
        ),
    )?;
    Ok(model)
}

fn dialogue_text(trace: &RunTrace) -> String {
    let mut s = String::new();
    for q in trace.queries() {
        s.push_str(&format!(
            "[{}]\nQ: {}\nA: {}\n\n",
            q.object_id, q.question.text, q.answer
        ));
    }
    s
}

/// Runs every trial and writes traces, predictions and baseline predictions.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    cfg.validate()?;
    let mut params = cfg.params.clone();
    let method = apply_ablation(&cfg.ablation, &mut params)?;
    if cfg.q_max.is_some() && cfg.ablation != "no-questioning" {
        params.q_max = cfg.q_max;
    }
    let seed0 = base_seed(cfg)?;
    let cal_path = cfg.calibration_path();
    let cal = if cal_path.exists() {
        CalibrationModel::load(&cal_path).map_err(|e| CliError::Validation(e.to_string()))?
    } else {
        say(
            out,
            format!(
                "no calibration at {}; calibrating first",
                cal_path.display()
            ),
        )?;
        let mut full = cfg.clone();
        full.scorer = cfg.scorer.clone();
        calibrate(&full, out)?
    };
    let fixed = match &cfg.data_dir {
        Some(d) => Some(load_dataset(d)?),
        None => None,
    };
    let spec = if fixed.is_none() {
        Some(load_spec(cfg, None)?)
    } else {
        None
    };
    let mut failures = Vec::new();
    for trial in 0..cfg.trials {
        let seed = seed0 + trial as u64;
        let trial_dir = cfg
            .out
            .join("runs")
            .join(&method)
            .join(format!("trial_{trial:02}"));
        let (data, data_dir) = match (&fixed, &spec) {
            (Some(d), _) => {
                let dir = cfg.data_dir.as_ref().expect("fixed data has a dir");
                let abs =
                    std::fs::canonicalize(dir).map_err(|e| io_err("cannot resolve data_dir", e))?;
                (d.clone(), abs)
            }
            (None, Some(spec)) => {
                let env = generate(spec, seed)?;
                env.write_to(&trial_dir.join("data"))
                    .map_err(|e| io_err("cannot write trial dataset", e))?;
                (env.into(), PathBuf::from("data"))
            }
            (None, None) => unreachable!("either a dataset or a spec is loaded"),
        };
        let mut respondent = build_respondent(cfg, data.truth.as_ref())?;
        let mut scorer = build_scorer(cfg)?;
        let trace = run_acquisition(
            data.map.clone(),
            &data.log,
            &data.roster,
            &mut scorer.backend,
            &mut respondent,
            &cal,
            &params,
            data.truth.as_ref(),
        );
        write_json(
            &trial_dir.join(MANIFEST_FILE),
            &Manifest {
                method: method.clone(),
                trial,
                seed,
                data_dir,
            },
        )?;
        write_text(&trial_dir.join(TRACE_FILE), &trace.to_json_string())?;
        write_text(&trial_dir.join(DIALOGUE_FILE), &dialogue_text(&trace))?;
        save_recording(&scorer.recording, &trial_dir.join(TRANSCRIPT_FILE))?;
        write_json(
            &trial_dir.join(PREDICTIONS_FILE),
            &PredictionFile {
                method: method.clone(),
                trial,
                seed,
                n_questions: Some(trace.q_cnt),
                predictions: trace.prediction_map(),
            },
        )?;
        let ids = data.map.sorted_ids();
        for b in Baseline::ALL {
            write_json(
                &trial_dir.join(format!("predictions_{}.json", b.name())),
                &PredictionFile {
                    method: b.name().to_string(),
                    trial,
                    seed,
                    n_questions: None,
                    predictions: b.predict_all(&data.log, ids.iter().map(String::as_str)),
                },
            )?;
        }
        let acc = data
            .truth
            .as_ref()
            .and_then(|t| compute_metrics(&trace.prediction_map(), t).ok())
            .map(|r| format!(", subset accuracy {:.3}", r.overall.subset_accuracy))
            .unwrap_or_default();
        say(
            out,
            format!(
                "{method} trial {trial} (seed {seed}): {} questions, stop {}{acc}",
                trace.q_cnt,
                serde_json::to_value(trace.stop_reason)
                    .expect("enum serializes")
                    .as_str()
                    .unwrap_or("?"),
            ),
        )?;
        if let Some(e) = &trace.error {
            say(out, format!("  aborted: {e}"))?;
            failures.push(format!("trial {trial}: {e}"));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} trial(s) aborted; partial traces kept. {}",
            failures.len(),
            failures.join("; ")
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
struct TrialReport {
    trial: usize,
    seed: u64,
    report: MetricsReport,
}

#[derive(Debug, Default, Serialize)]
struct MethodReport {
    trials: Vec<TrialReport>,
    summary: Vec<SummaryRow>,
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Validation(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    Ok(v)
}

fn prediction_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Validation(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("predictions") && n.ends_with(".json"))
        })
        .collect();
    v.sort();
    Ok(v)
}

fn print_summary(out: &mut dyn Write, rows: &[SummaryRow]) -> Result<(), CliError> {
    for r in rows
        .iter()
        .filter(|r| r.category == "overall" || r.metric == "subset_accuracy")
    {
        say(
            out,
            format!(
                "{:<22} {:<20} {:<16} {:.3} ± {:.3}",
                r.method, r.category, r.metric, r.mean, r.std
            ),
        )?;
    }
    Ok(())
}

/// Evaluates one predictions file against one truth file.
pub fn eval_single(
    cfg: &RunConfig,
    predictions: &Path,
    truth: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let pf: PredictionFile = read_json(predictions)?;
    let truth = GroundTruth::load(truth).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut report = compute_metrics(&pf.predictions, &truth)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    report.n_questions = pf.n_questions;
    let rows = summarize(&pf.method, std::slice::from_ref(&report));
    write_json(&cfg.out.join("report.json"), &report)?;
    write_text(
        &cfg.out.join("summary.csv"),
        &rows_to_csv(&rows).map_err(|e| io_err("csv", e))?,
    )?;
    print_summary(out, &rows)
}

/// Evaluates every trial under `<out>/runs` and writes `<out>/report`.
pub fn eval_runs(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let runs = cfg.out.join("runs");
    if !runs.is_dir() {
        return Err(CliError::Validation(format!(
            "no runs under {}; run `owninfer run` first",
            runs.display()
        )));
    }
    let report_dir = cfg.out.join("report");
    let mut methods: BTreeMap<String, MethodReport> = BTreeMap::new();
    let mut seen: BTreeMap<(String, u64), ()> = BTreeMap::new();
    for method_dir in sorted_dirs(&runs)? {
        for trial_dir in sorted_dirs(&method_dir)? {
            let manifest: Manifest = read_json(&trial_dir.join(MANIFEST_FILE))?;
            let data_dir = manifest.data_dir_from(&trial_dir);
            let truth_path = data_dir.join(owninfer::datagen::TRUTH_FILE);
            if !truth_path.exists() {
                return Err(CliError::Validation(format!(
                    "no truth for {} at {}",
                    trial_dir.display(),
                    truth_path.display()
                )));
            }
            let truth =
                GroundTruth::load(&truth_path).map_err(|e| CliError::Validation(e.to_string()))?;
            for pf_path in prediction_files(&trial_dir)? {
                let pf: PredictionFile = read_json(&pf_path)?;
                // Baselines are written next to every ablation; count each seed once.
                if seen.insert((pf.method.clone(), pf.seed), ()).is_some() {
                    continue;
                }
                let mut report = compute_metrics(&pf.predictions, &truth)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", pf_path.display())))?;
                report.n_questions = pf.n_questions;
                methods
                    .entry(pf.method.clone())
                    .or_default()
                    .trials
                    .push(TrialReport {
                        trial: pf.trial,
                        seed: pf.seed,
                        report,
                    });
            }
            let trace_path = trial_dir.join(TRACE_FILE);
            if trace_path.exists() {
                let trace = RunTrace::from_json_str(
                    &std::fs::read_to_string(&trace_path)
                        .map_err(|e| io_err("cannot read trace", e))?,
                )
                .map_err(|e| CliError::Validation(format!("{}: {e}", trace_path.display())))?;
                let curve =
                    step_curve(&trace, &truth).map_err(|e| CliError::Validation(e.to_string()))?;
                write_text(
                    &report_dir.join("curves").join(format!(
                        "{}_trial_{:02}.csv",
                        manifest.method, manifest.trial
                    )),
                    &step_curve_csv(&curve).map_err(|e| io_err("csv", e))?,
                )?;
            }
        }
    }
    let mut all_rows = Vec::new();
    for (name, m) in methods.iter_mut() {
        let reports: Vec<MetricsReport> = m.trials.iter().map(|t| t.report.clone()).collect();
        m.summary = summarize(name, &reports);
        all_rows.extend(m.summary.iter().cloned());
    }
    write_json(&report_dir.join("report.json"), &methods)?;
    write_text(
        &report_dir.join("summary.csv"),
        &rows_to_csv(&all_rows).map_err(|e| io_err("csv", e))?,
    )?;
    print_summary(out, &all_rows)?;
    say(out, format!("report written to {}", report_dir.display()))
}

/// Re-runs a trace with its recorded answers (and transcript for chat runs)
/// and checks that passes and predictions reproduce exactly.
pub fn replay(
    trace_path: &Path,
    transcript: Option<&Path>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(trace_path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", trace_path.display())))?;
    let original = RunTrace::from_json_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", trace_path.display())))?;
    let trial_dir = trace_path.parent().unwrap_or(Path::new("."));
    let manifest: Manifest = read_json(&trial_dir.join(MANIFEST_FILE))?;
    let data = load_dataset(&manifest.data_dir_from(trial_dir))?;
    let mut backend = match original.header.scorer.as_str() {
        "heuristic" => ScorerBackend::Heuristic,
        _ => {
            let path = transcript
                .map(Path::to_path_buf)
                .unwrap_or_else(|| trial_dir.join(TRANSCRIPT_FILE));
            let t = Transcript::load(&path).map_err(|e| CliError::Validation(e.to_string()))?;
            ScorerBackend::Chat(Box::new(ReplayChat::new(&t)))
        }
    };
    let params = original.header.params.clone();
    let mut respondent = Respondent::Scripted(original.scripted_answers());
    let replayed = run_acquisition(
        data.map.clone(),
        &data.log,
        &data.roster,
        &mut backend,
        &mut respondent,
        &original.header.calibration,
        &params,
        data.truth.as_ref(),
    );
    let dest = out_dir.unwrap_or(trial_dir).join(REPLAY_TRACE_FILE);
    write_text(&dest, &replayed.to_json_string())?;
    if let Some(e) = &replayed.error {
        return Err(CliError::Runtime(format!("replay aborted: {e}")));
    }
    let diverged = original
        .passes
        .iter()
        .zip(&replayed.passes)
        .position(|(a, b)| a != b)
        .or_else(|| {
            (original.passes.len() != replayed.passes.len())
                .then_some(original.passes.len().min(replayed.passes.len()))
        });
    if let Some(p) = diverged {
        return Err(CliError::Runtime(format!("replay diverged at pass {p}")));
    }
    if original.predictions != replayed.predictions
        || original.q_cnt != replayed.q_cnt
        || original.stop_reason != replayed.stop_reason
    {
        return Err(CliError::Runtime("replay final state differs".into()));
    }
    say(
        out,
        format!(
            "replay reproduced {} passes and {} questions -> {}",
            replayed.passes.len(),
            replayed.q_cnt,
            dest.display()
        ),
    )
}
