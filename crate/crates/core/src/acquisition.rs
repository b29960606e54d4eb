//! The active questioning loop: re-score, build prediction sets, stop or ask
//! about the least confident object, apply the answer, repeat.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{CalibrationModel, CalibrationSample};
use crate::evaluation::{compute_metrics, predicted_set, Metrics, Predictions};
use crate::history::{EventLog, Timestamp};
use crate::interaction::{
    apply_answer, generate_question, interpret_answer, AnswerVector, ApplyError, Interpretation,
    Question, RespondError, Respondent,
};
use crate::llm::LlmError;
use crate::map::{MapError, MapStore};
use crate::roster::Roster;
use crate::scores::{OwnerSet, OwnershipScores};
use crate::scoring::{
    build_bundle, build_known, detect_shared, score_object, ContextParams, HeuristicConfig,
    KnownFacts, ScorerBackend, ShareDecision, ShareParams, DEFAULT_CONFIDENCE_THRESHOLD,
};
use crate::state::AcquisitionState;
use crate::truth::GroundTruth;

/// Scoring and loop parameters recorded in every trace header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopParams {
    pub context: ContextParams,
    pub heuristic: HeuristicConfig,
    pub share: ShareParams,
    pub confidence_threshold: f64,
    /// `None` means one question per object.
    pub q_max: Option<usize>,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            context: ContextParams::default(),
            heuristic: HeuristicConfig::default(),
            share: ShareParams::default(),
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            q_max: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Respond(#[from] RespondError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error("no unasked object left to query")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AllConfident,
    BudgetExhausted,
    NoUnaskedObjects,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSnapshot {
    pub object_id: String,
    pub scores: OwnershipScores,
    pub share: ShareDecision,
    pub asked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<OwnerSet>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub needs_revisit: bool,
    pub gamma: OwnerSet,
    pub cp_score: f64,
    pub predicted: OwnerSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescore {
    pub object_id: String,
    pub scores: OwnershipScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub object_id: String,
    pub question: Question,
    pub answer: String,
    pub interpretation: Interpretation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: usize,
    /// Questions applied before this pass.
    pub q_cnt: usize,
    pub rescored: Vec<Rescore>,
    pub objects: Vec<ObjectSnapshot>,
    pub all_confident: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scorer: String,
    pub respondent: String,
    pub n_objects: usize,
    pub q_max: usize,
    pub now: Timestamp,
    pub calibration: CalibrationModel,
    pub params: LoopParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub header: TraceHeader,
    pub passes: Vec<PassRecord>,
    pub q_cnt: usize,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Predictions from the last completed pass.
    pub predictions: BTreeMap<String, OwnerSet>,
}

impl RunTrace {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryRecord> {
        self.passes.iter().filter_map(|p| p.query.as_ref())
    }

    /// The recorded answers, in order, for re-running the trace.
    pub fn scripted_answers(&self) -> VecDeque<String> {
        self.queries().map(|q| q.answer.clone()).collect()
    }

    pub fn prediction_map(&self) -> Predictions {
        self.predictions
            .iter()
            .map(|(k, v)| (k.clone(), Some(v.clone())))
            .collect()
    }
}

/// Timestamp that "days ago" is measured from: the latest logged event.
pub fn reference_time(log: &EventLog) -> Timestamp {
    log.latest()
        .unwrap_or_else(|| Timestamp::parse("1970-01-01 00:00").expect("valid literal"))
}

/// Highest cp score among unasked objects; ties prefer larger Γ, then the smaller id.
pub fn select_query_target(objects: &[ObjectSnapshot]) -> Result<String, StepError> {
    objects
        .iter()
        .filter(|o| !o.asked)
        .max_by(|a, b| {
            a.cp_score
                .total_cmp(&b.cp_score)
                .then(a.gamma.len().cmp(&b.gamma.len()))
                .then(b.object_id.cmp(&a.object_id))
        })
        .map(|o| o.object_id.clone())
        .ok_or(StepError::NoCandidates)
}

fn scorer_label(scorer: &ScorerBackend) -> &'static str {
    match scorer {
        ScorerBackend::Heuristic => "heuristic",
        ScorerBackend::Chat(_) => "chat",
    }
}

/// Scores of every object with no known facts, in id order.
pub fn single_shot_scores(
    map: &MapStore,
    log: &EventLog,
    roster: &Roster,
    scorer: &mut ScorerBackend,
    params: &LoopParams,
) -> Result<Vec<(String, OwnershipScores)>, StepError> {
    let known = KnownFacts::default();
    let now = reference_time(log);
    map.sorted_ids()
        .into_iter()
        .map(|id| {
            let bundle = build_bundle(map, log, roster, &id, &known, &params.context, now)?;
            let out = score_object(scorer, &params.heuristic, &bundle, &known)?;
            Ok((id, out.scores))
        })
        .collect()
}

/// Pairs single-shot scores with ground truth; objects without truth are skipped.
pub fn calibration_samples(
    scores: Vec<(String, OwnershipScores)>,
    truth: &GroundTruth,
) -> Vec<CalibrationSample> {
    scores
        .into_iter()
        .filter_map(|(id, scores)| {
            let true_owners = truth.owners(&id)?.clone();
            Some(CalibrationSample {
                object_id: id,
                scores,
                true_owners,
            })
        })
        .collect()
}

struct Loop<'a> {
    log: &'a EventLog,
    roster: &'a Roster,
    scorer: &'a mut ScorerBackend,
    respondent: &'a mut Respondent,
    cal: &'a CalibrationModel,
    params: &'a LoopParams,
    truth: Option<&'a GroundTruth>,
    now: Timestamp,
    state: AcquisitionState,
    passes: Vec<PassRecord>,
}

impl Loop<'_> {
    fn rescore(&mut self) -> Result<Vec<Rescore>, StepError> {
        let known = build_known(&self.state, self.params.confidence_threshold);
        let mut out = Vec::new();
        for id in self.state.unasked_ids() {
            let bundle = build_bundle(
                &self.state.map,
                self.log,
                self.roster,
                &id,
                &known,
                &self.params.context,
                self.now,
            )?;
            let r = score_object(self.scorer, &self.params.heuristic, &bundle, &known)?;
            out.push(Rescore {
                object_id: id,
                scores: r.scores,
                fallback: r.fallback,
            });
        }
        for r in &out {
            let rec = self.state.map.get_mut(&r.object_id).expect("id from map");
            rec.scores = r.scores.clone();
            rec.share = detect_shared(&rec.scores, &self.params.share);
        }
        Ok(out)
    }

    fn snapshot(&self) -> Vec<ObjectSnapshot> {
        self.state
            .map
            .sorted_ids()
            .into_iter()
            .map(|id| {
                let rec = self.state.map.get(&id).expect("id from map");
                let ps = self.cal.prediction_set(&rec.scores);
                let answer = self.state.answers.get(&id).cloned();
                ObjectSnapshot {
                    predicted: predicted_set(rec, answer.as_ref()),
                    needs_revisit: self.state.needs_revisit.contains(&id),
                    object_id: id,
                    scores: rec.scores.clone(),
                    share: rec.share.clone(),
                    asked: rec.asked,
                    answer,
                    gamma: ps.members,
                    cp_score: ps.cp_score,
                }
            })
            .collect()
    }

    fn ask(&mut self, target: &str) -> Result<QueryRecord, StepError> {
        let rec = self.state.map.require(target)?.clone();
        let question = generate_question(&rec, self.roster, self.scorer.chat_mut())?;
        let answer = self.respondent.respond(&question)?;
        let interpretation =
            interpret_answer(&question, &answer, self.roster, self.scorer.chat_mut())?;
        apply_answer(
            &mut self.state,
            target,
            &interpretation.vector,
            &self.params.share,
        )?;
        self.state.q_cnt += 1;
        Ok(QueryRecord {
            object_id: target.to_string(),
            question,
            answer,
            interpretation,
        })
    }

    fn metrics(&self, objects: &[ObjectSnapshot]) -> Option<Metrics> {
        let truth = self.truth?;
        let preds: Predictions = objects
            .iter()
            .filter(|o| truth.objects.contains_key(&o.object_id))
            .map(|o| (o.object_id.clone(), Some(o.predicted.clone())))
            .collect();
        compute_metrics(&preds, truth).ok().map(|r| r.overall)
    }

    fn step(&mut self) -> Result<Option<StopReason>, StepError> {
        let q_cnt = self.state.q_cnt;
        let rescored = self.rescore()?;
        let objects = self.snapshot();
        let all_confident = objects
            .iter()
            .all(|o| o.needs_revisit || o.cp_score <= self.cal.q_cp);
        let stop = if all_confident {
            Some(StopReason::AllConfident)
        } else if self.state.q_cnt >= self.state.q_max {
            Some(StopReason::BudgetExhausted)
        } else if objects.iter().all(|o| o.asked) {
            Some(StopReason::NoUnaskedObjects)
        } else {
            None
        };
        let metrics = self.metrics(&objects);
        let mut pass = PassRecord {
            pass: self.passes.len(),
            q_cnt,
            rescored,
            objects,
            all_confident,
            stop,
            query: None,
            metrics,
        };
        if stop.is_none() {
            let target = select_query_target(&pass.objects)?;
            // Keep the pass even when asking fails so the trace shows where it stopped.
            match self.ask(&target) {
                Ok(q) => pass.query = Some(q),
                Err(e) => {
                    self.passes.push(pass);
                    return Err(e);
                }
            }
        }
        self.passes.push(pass);
        Ok(stop)
    }
}

/// Runs the questioning loop to completion. Failures end the run with
/// `StopReason::Aborted` and the error text; completed passes are kept.
#[allow(clippy::too_many_arguments)]
pub fn run_acquisition(
    map: MapStore,
    log: &EventLog,
    roster: &Roster,
    scorer: &mut ScorerBackend,
    respondent: &mut Respondent,
    cal: &CalibrationModel,
    params: &LoopParams,
    truth: Option<&GroundTruth>,
) -> RunTrace {
    let q_max = params.q_max.unwrap_or(map.len());
    let header = TraceHeader {
        scorer: scorer_label(scorer).to_string(),
        respondent: respondent.kind().to_string(),
        n_objects: map.len(),
        q_max,
        now: reference_time(log),
        calibration: cal.clone(),
        params: params.clone(),
    };
    let mut lp = Loop {
        log,
        roster,
        scorer,
        respondent,
        cal,
        params,
        truth,
        now: header.now,
        state: AcquisitionState::new(map, q_max),
        passes: Vec::new(),
    };
    let (stop_reason, error) = loop {
        match lp.step() {
            Ok(Some(reason)) => break (reason, None),
            Ok(None) => {}
            Err(e) => break (StopReason::Aborted, Some(e.to_string())),
        }
    };
    let predictions = lp
        .passes
        .last()
        .map(|p| {
            p.objects
                .iter()
                .map(|o| (o.object_id.clone(), o.predicted.clone()))
                .collect()
        })
        .unwrap_or_default();
    RunTrace {
        header,
        passes: lp.passes,
        q_cnt: lp.state.q_cnt,
        stop_reason,
        error,
        predictions,
    }
}

/// Answer vector implied by a recorded query, for consumers of traces.
pub fn applied_vector(q: &QueryRecord) -> &AnswerVector {
    &q.interpretation.vector
}
