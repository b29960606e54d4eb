//! Set-valued ownership metrics, per-category breakdowns, step curves and
//! mean/std aggregation across trials.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::RunTrace;
use crate::map::ObjectRecord;
use crate::scores::OwnerSet;
use crate::truth::{GroundTruth, Scenario};

/// Object id to predicted owner set; `None` marks "no prediction".
pub type Predictions = BTreeMap<String, Option<OwnerSet>>;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no prediction entry for object {0}")]
    MissingPrediction(String),
    #[error("prediction for unknown object {0}")]
    UnknownObject(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub subset_accuracy: f64,
    pub mean_jaccard: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub overall: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_questions: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_category: BTreeMap<Scenario, Metrics>,
}

/// `|a ∩ b| / |a ∪ b|`, with 1 for two empty sets.
pub fn jaccard(a: &OwnerSet, b: &OwnerSet) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics over (truth, prediction) pairs.
pub fn metrics_from_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a OwnerSet, &'a OwnerSet)>,
) -> Metrics {
    let mut m = Metrics::default();
    let mut exact = 0usize;
    let mut jac = 0.0;
    for (truth, pred) in pairs {
        m.n += 1;
        exact += usize::from(truth == pred);
        jac += jaccard(truth, pred);
        m.tp += truth.intersection(pred).count();
        m.fp += pred.difference(truth).count();
        m.fn_ += truth.difference(pred).count();
    }
    m.subset_accuracy = ratio(exact, m.n);
    m.mean_jaccard = if m.n == 0 { 0.0 } else { jac / m.n as f64 };
    m.micro_precision = ratio(m.tp, m.tp + m.fp);
    m.micro_recall = ratio(m.tp, m.tp + m.fn_);
    let pr = m.micro_precision + m.micro_recall;
    m.micro_f1 = if pr == 0.0 {
        0.0
    } else {
        2.0 * m.micro_precision * m.micro_recall / pr
    };
    m
}

/// Overall and per-scenario metrics. Every truth object needs an entry in
/// `predictions`; `None` entries count as the empty set.
pub fn compute_metrics(
    predictions: &Predictions,
    truth: &GroundTruth,
) -> Result<MetricsReport, EvalError> {
    if let Some(id) = predictions.keys().find(|k| !truth.objects.contains_key(*k)) {
        return Err(EvalError::UnknownObject(id.clone()));
    }
    let empty = OwnerSet::new();
    let mut pairs = Vec::with_capacity(truth.objects.len());
    for (id, entry) in &truth.objects {
        let pred = predictions
            .get(id)
            .ok_or_else(|| EvalError::MissingPrediction(id.clone()))?
            .as_ref()
            .unwrap_or(&empty);
        pairs.push((entry.scenario, &entry.owners, pred));
    }
    let overall = metrics_from_pairs(pairs.iter().map(|(_, t, p)| (*t, *p)));
    let mut per_category = BTreeMap::new();
    for cat in Scenario::ALL {
        let sub: Vec<_> = pairs.iter().filter(|(c, _, _)| *c == Some(cat)).collect();
        if !sub.is_empty() {
            per_category.insert(
                cat,
                metrics_from_pairs(sub.iter().map(|(_, t, p)| (*t, *p))),
            );
        }
    }
    Ok(MetricsReport {
        overall,
        n_questions: None,
        per_category,
    })
}

/// Asked objects predict their answer; others their share-decision owners,
/// or the top scorer when sharing is undetermined.
pub fn predicted_set(rec: &ObjectRecord, answer: Option<&OwnerSet>) -> OwnerSet {
    if rec.asked {
        return answer.cloned().unwrap_or_default();
    }
    if rec.share.is_determined() {
        return rec.share.owners.clone();
    }
    rec.scores
        .argmax()
        .map(|u| OwnerSet::from([u.to_string()]))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPoint {
    /// Questions answered before this snapshot.
    pub step: usize,
    pub report: MetricsReport,
    /// Subset accuracy restricted to asked objects, if any.
    pub asked_subset_accuracy: Option<f64>,
}

/// Metrics of every pass snapshot in the trace; step 0 is single-shot inference.
pub fn step_curve(trace: &RunTrace, truth: &GroundTruth) -> Result<Vec<StepPoint>, EvalError> {
    trace
        .passes
        .iter()
        .map(|pass| {
            let preds: Predictions = pass
                .objects
                .iter()
                .map(|o| (o.object_id.clone(), Some(o.predicted.clone())))
                .collect();
            let mut report = compute_metrics(&preds, truth)?;
            report.n_questions = Some(pass.q_cnt);
            let asked: Vec<_> = pass
                .objects
                .iter()
                .filter(|o| o.asked)
                .filter_map(|o| truth.owners(&o.object_id).map(|t| (t, &o.predicted)))
                .collect();
            let asked_subset_accuracy =
                (!asked.is_empty()).then(|| metrics_from_pairs(asked).subset_accuracy);
            Ok(StepPoint {
                step: pass.q_cnt,
                report,
                asked_subset_accuracy,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub category: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_trials: usize,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn metric_values(m: &Metrics) -> [(&'static str, f64); 5] {
    [
        ("subset_accuracy", m.subset_accuracy),
        ("mean_jaccard", m.mean_jaccard),
        ("micro_precision", m.micro_precision),
        ("micro_recall", m.micro_recall),
        ("micro_f1", m.micro_f1),
    ]
}

fn push_rows(rows: &mut Vec<SummaryRow>, method: &str, category: &str, metrics: &[&Metrics]) {
    for (i, (name, _)) in metric_values(&Metrics::default()).iter().enumerate() {
        let vals: Vec<f64> = metrics.iter().map(|m| metric_values(m)[i].1).collect();
        let (mean, std) = mean_std(&vals);
        rows.push(SummaryRow {
            method: method.to_string(),
            category: category.to_string(),
            metric: name.to_string(),
            mean,
            std,
            n_trials: vals.len(),
        });
    }
}

/// One row per category × metric, aggregated over trial reports.
pub fn summarize(method: &str, reports: &[MetricsReport]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let overall: Vec<&Metrics> = reports.iter().map(|r| &r.overall).collect();
    push_rows(&mut rows, method, "overall", &overall);
    let questions: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.n_questions.map(|q| q as f64))
        .collect();
    if !questions.is_empty() {
        let (mean, std) = mean_std(&questions);
        rows.push(SummaryRow {
            method: method.to_string(),
            category: "overall".into(),
            metric: "n_questions".into(),
            mean,
            std,
            n_trials: questions.len(),
        });
    }
    for cat in Scenario::ALL {
        let sub: Vec<&Metrics> = reports
            .iter()
            .filter_map(|r| r.per_category.get(&cat))
            .collect();
        if !sub.is_empty() {
            push_rows(&mut rows, method, cat.as_str(), &sub);
        }
    }
    rows
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CurveRow {
    step: usize,
    subset_accuracy: f64,
    mean_jaccard: f64,
    micro_f1: f64,
    asked_subset_accuracy: Option<f64>,
}

pub fn step_curve_csv(points: &[StepPoint]) -> Result<String, csv::Error> {
    let rows: Vec<CurveRow> = points
        .iter()
        .map(|p| CurveRow {
            step: p.step,
            subset_accuracy: p.report.overall.subset_accuracy,
            mean_jaccard: p.report.overall.mean_jaccard,
            micro_f1: p.report.overall.micro_f1,
            asked_subset_accuracy: p.asked_subset_accuracy,
        })
        .collect();
    rows_to_csv(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::{owner_set, OwnershipScores};
    use crate::scoring::{detect_shared, ShareParams};
    use crate::truth::TruthEntry;

    fn truth(items: &[(&str, &[&str], Scenario)]) -> GroundTruth {
        GroundTruth {
            objects: items
                .iter()
                .map(|(id, o, c)| {
                    (
                        id.to_string(),
                        TruthEntry {
                            owners: owner_set(o.iter().copied()),
                            scenario: Some(*c),
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn single_pair_examples() {
        let m = metrics_from_pairs([(&owner_set(["Bob"]), &owner_set(["Bob"]))]);
        assert_eq!((m.subset_accuracy, m.mean_jaccard), (1.0, 1.0));
        let m = metrics_from_pairs([(&owner_set(["Bob", "Mary"]), &owner_set(["Bob"]))]);
        assert_eq!((m.subset_accuracy, m.mean_jaccard), (0.0, 0.5));
        assert_eq!(jaccard(&OwnerSet::new(), &OwnerSet::new()), 1.0);
    }

    #[test]
    fn pooled_example() {
        let t = truth(&[
            ("a", &["Bob"], Scenario::SingleUser),
            ("b", &["Bob", "Mary"], Scenario::MultiUserSharing),
        ]);
        let p: Predictions = [
            ("a".to_string(), Some(owner_set(["Bob", "Mary"]))),
            ("b".to_string(), Some(owner_set(["Bob"]))),
        ]
        .into();
        let r = compute_metrics(&p, &t).unwrap();
        let m = &r.overall;
        assert_eq!((m.tp, m.fp, m.fn_), (2, 1, 1));
        for v in [m.micro_precision, m.micro_recall, m.micro_f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(m.mean_jaccard, 0.5);
        assert_eq!(m.subset_accuracy, 0.0);
        assert_eq!(r.per_category[&Scenario::SingleUser].n, 1);
        assert!(!r.per_category.contains_key(&Scenario::TemporarySharing));
    }

    #[test]
    fn no_prediction_and_id_errors() {
        let t = truth(&[("a", &["Bob"], Scenario::SingleUser)]);
        let r = compute_metrics(&[("a".to_string(), None)].into(), &t).unwrap();
        assert_eq!(
            (r.overall.micro_precision, r.overall.micro_f1, r.overall.fn_),
            (0.0, 0.0, 1)
        );
        assert_eq!(
            compute_metrics(&Predictions::new(), &t),
            Err(EvalError::MissingPrediction("a".into()))
        );
        let extra: Predictions = [("a".to_string(), None), ("z".to_string(), None)].into();
        assert_eq!(
            compute_metrics(&extra, &t),
            Err(EvalError::UnknownObject("z".into()))
        );
    }

    fn rec(scores: [f64; 3], asked: bool) -> ObjectRecord {
        let s = OwnershipScores::from_pairs([
            ("Bob", scores[0]),
            ("Mary", scores[1]),
            ("Tom", scores[2]),
        ]);
        ObjectRecord {
            object_id: "x".into(),
            class_label: "cup".into(),
            position: [0.0; 3],
            feature: vec![1.0],
            share: detect_shared(&s, &ShareParams::default()),
            scores: s,
            asked,
        }
    }

    #[test]
    fn predicted_set_rules() {
        let answer = owner_set(["Bob", "Mary"]);
        assert_eq!(
            predicted_set(&rec([1.0, 1.0, 0.0], true), Some(&answer)),
            answer
        );
        assert_eq!(
            predicted_set(&rec([0.5, 0.45, 0.4], false), None),
            owner_set(["Bob"])
        );
        assert_eq!(
            predicted_set(&rec([0.9, 0.85, 0.1], false), None),
            owner_set(["Bob", "Mary"])
        );
    }

    #[test]
    fn aggregation() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        let t = truth(&[("a", &["Bob"], Scenario::SingleUser)]);
        let mut r =
            compute_metrics(&[("a".to_string(), Some(owner_set(["Bob"])))].into(), &t).unwrap();
        r.n_questions = Some(3);
        let rows = summarize("owninfer", &[r]);
        assert_eq!(rows.len(), 5 + 1 + 5);
        assert!(rows.iter().all(|row| row.std == 0.0));
        let csv = rows_to_csv(&rows).unwrap();
        assert!(csv.starts_with("method,category,metric,mean,std,n_trials\nowninfer,overall,subset_accuracy,1.0,0.0,1\n"));
    }
}
