//! Accuracy by question type, condition-based evaluation (full / shuffled /
//! middle clip), and the true-temporality delta metric.

use crate::data::{middle_clip_view, shuffle_clips, Dataset, QType, QuestionRecord};
use crate::error::{CoreError, Result};
use crate::model::{score_record, ModelConfig, Vocab};
use crate::params::ParamSet;
use crate::rng::{fnv1a, mix64};
use crate::tensor::softmax_slice;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Evaluation conditions. Exactly one applies per run; shuffling and the
/// middle-clip view are never composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Full,
    Shuffled,
    Middle,
}

impl Condition {
    pub fn key(&self) -> &'static str {
        match self {
            Condition::Full => "full",
            Condition::Shuffled => "shuffled",
            Condition::Middle => "middle",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Condition::Full),
            "shuffled" => Ok(Condition::Shuffled),
            "middle" => Ok(Condition::Middle),
            other => Err(CoreError::validation(format!(
                "unknown condition '{other}' (expected full|shuffled|middle)"
            ))),
        }
    }
}

/// Accuracies are rounded to 4 decimals at construction so reports
/// round-trip bit-exactly through their canonical form.
pub fn round4(x: f64) -> f64 {
    (x * 10000.0).round() / 10000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub correct: usize,
    pub total: usize,
    /// `correct/total` rounded to 4 decimals; `None` for an empty cell.
    pub accuracy: Option<f64>,
}

impl CellStats {
    fn from_counts(correct: usize, total: usize) -> CellStats {
        CellStats {
            correct,
            total,
            accuracy: if total == 0 {
                None
            } else {
                Some(round4(correct as f64 / total as f64))
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub seed: u64,
    pub all: CellStats,
    pub by_type: BTreeMap<String, CellStats>,
    /// Sorted question ids, used to verify delta comparability.
    pub question_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub conditions: BTreeMap<String, ConditionReport>,
    /// Acc@All(full) - Acc@All(middle), in percentage points.
    pub delta_points: Option<f64>,
    /// Per-type deltas for diagnostics; `None` where a cell is empty.
    pub delta_by_type: Option<BTreeMap<String, Option<f64>>>,
}

impl EvalReport {
    pub fn single(report: ConditionReport) -> EvalReport {
        let mut conditions = BTreeMap::new();
        conditions.insert(report.condition.clone(), report);
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            conditions,
            delta_points: None,
            delta_by_type: None,
        }
    }
}

fn transformed_bundle(
    dataset: &Dataset,
    record: &QuestionRecord,
    condition: Condition,
    seed: u64,
) -> Result<crate::data::FeatureBundle> {
    let bundle = dataset.bundle(&record.video_id)?;
    match condition {
        Condition::Full => Ok(bundle.clone()),
        Condition::Middle => Ok(middle_clip_view(bundle)),
        Condition::Shuffled => {
            let per_question = mix64(seed, fnv1a(&record.question_id));
            Ok(shuffle_clips(bundle, per_question)?.0)
        }
    }
}

fn score_one(
    dataset: &Dataset,
    params: &ParamSet,
    cfg: &ModelConfig,
    vocab: &Vocab,
    record: &QuestionRecord,
    condition: Condition,
    seed: u64,
) -> Result<(bool, QType, Vec<f64>)> {
    let bundle = transformed_bundle(dataset, record, condition, seed)?;
    let scored = score_record(params, cfg, vocab, &bundle, record)?;
    Ok((
        scored.chosen == record.gold_index,
        record.qtype,
        scored.scores,
    ))
}

/// Evaluate every question under one condition. `threads = 1` is fully
/// sequential; more threads score disjoint chunks and aggregate in index
/// order, so the report does not depend on scheduling.
pub fn evaluate(
    dataset: &Dataset,
    params: &ParamSet,
    cfg: &ModelConfig,
    vocab: &Vocab,
    condition: Condition,
    seed: u64,
    threads: usize,
) -> Result<ConditionReport> {
    let n = dataset.questions.len();
    let mut outcomes: Vec<Option<(bool, QType)>> = vec![None; n];

    if threads <= 1 || n < 2 {
        for (i, record) in dataset.questions.iter().enumerate() {
            let (correct, qtype, _) =
                score_one(dataset, params, cfg, vocab, record, condition, seed)?;
            outcomes[i] = Some((correct, qtype));
        }
    } else {
        let threads = threads.min(n);
        let chunk = n.div_ceil(threads);
        let results: Vec<Result<Vec<(usize, bool, QType)>>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..threads {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(n);
                if lo >= hi {
                    break;
                }
                let questions = &dataset.questions;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::with_capacity(hi - lo);
                    for i in lo..hi {
                        let (correct, qtype, _) =
                            score_one(dataset, params, cfg, vocab, &questions[i], condition, seed)?;
                        out.push((i, correct, qtype));
                    }
                    Ok(out)
                }));
            }
            handles.into_iter().map(|h| h.join().expect("eval thread panicked")).collect()
        });
        for r in results {
            for (i, correct, qtype) in r? {
                outcomes[i] = Some((correct, qtype));
            }
        }
    }

    let mut per_type: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
    for key in ["causal", "temporal", "descriptive", "other"] {
        per_type.insert(key, (0, 0));
    }
    let mut all = (0usize, 0usize);
    for outcome in outcomes.iter() {
        let (correct, qtype) = outcome.expect("every question scored");
        let cell = per_type.get_mut(qtype.key()).unwrap();
        cell.1 += 1;
        all.1 += 1;
        if correct {
            cell.0 += 1;
            all.0 += 1;
        }
    }

    let mut question_ids: Vec<String> = dataset
        .questions
        .iter()
        .map(|q| q.question_id.clone())
        .collect();
    question_ids.sort();

    Ok(ConditionReport {
        condition: condition.key().to_string(),
        seed,
        all: CellStats::from_counts(all.0, all.1),
        by_type: per_type
            .into_iter()
            .map(|(k, (c, t))| (k.to_string(), CellStats::from_counts(c, t)))
            .collect(),
        question_ids,
    })
}

/// Mean entropy of the predicted answer distributions, over the questions
/// selected by `keep`.
pub fn mean_prediction_entropy(
    dataset: &Dataset,
    params: &ParamSet,
    cfg: &ModelConfig,
    vocab: &Vocab,
    condition: Condition,
    seed: u64,
    keep: impl Fn(&QuestionRecord) -> bool,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut count = 0usize;
    for record in &dataset.questions {
        if !keep(record) {
            continue;
        }
        let (_, _, scores) = score_one(dataset, params, cfg, vocab, record, condition, seed)?;
        let p = softmax_slice(&scores);
        let h: f64 = p
            .iter()
            .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
            .sum();
        total += h;
        count += 1;
    }
    Ok(if count == 0 { None } else { Some(total / count as f64) })
}

/// `Acc@All(full) - Acc@All(middle)` in percentage points. Both reports must
/// cover the identical question set.
pub fn delta_metric(full: &ConditionReport, middle: &ConditionReport) -> Result<f64> {
    if full.question_ids != middle.question_ids {
        let a: std::collections::BTreeSet<_> = full.question_ids.iter().collect();
        let b: std::collections::BTreeSet<_> = middle.question_ids.iter().collect();
        let diff: Vec<&String> = a.symmetric_difference(&b).copied().collect();
        return Err(CoreError::validation(format!(
            "delta over mismatched question sets; symmetric difference: {diff:?}"
        )));
    }
    let (fa, ma) = match (full.all.accuracy, middle.all.accuracy) {
        (Some(f), Some(m)) => (f, m),
        _ => {
            return Err(CoreError::validation(
                "delta requires non-empty reports on both conditions",
            ))
        }
    };
    Ok(round4((fa - ma) * 100.0))
}

/// Combine a full-condition and a middle-condition report into one report
/// carrying the delta metric (overall and per type).
pub fn merge_delta(full: ConditionReport, middle: ConditionReport) -> Result<EvalReport> {
    let delta = delta_metric(&full, &middle)?;
    let mut delta_by_type = BTreeMap::new();
    for (key, full_cell) in &full.by_type {
        let middle_cell = middle.by_type.get(key);
        let d = match (full_cell.accuracy, middle_cell.and_then(|c| c.accuracy)) {
            (Some(f), Some(m)) => Some(round4((f - m) * 100.0)),
            _ => None,
        };
        delta_by_type.insert(key.clone(), d);
    }
    let mut conditions = BTreeMap::new();
    conditions.insert(full.condition.clone(), full);
    conditions.insert(middle.condition.clone(), middle);
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        conditions,
        delta_points: Some(delta),
        delta_by_type: Some(delta_by_type),
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.4}")
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => fmt_f64(v),
        None => "null".to_string(),
    }
}

fn cell_json(cell: &CellStats) -> String {
    format!(
        "{{\"accuracy\":{},\"correct\":{},\"total\":{}}}",
        fmt_opt(cell.accuracy),
        cell.correct,
        cell.total
    )
}

/// Canonical JSON: keys sorted, floats fixed to 4 decimals, so reports from
/// identical runs are byte-identical and diff cleanly.
pub fn report_to_canonical_json(report: &EvalReport) -> String {
    let mut out = String::from("{\"conditions\":{");
    let mut first = true;
    for (name, cond) in &report.conditions {
        if !first {
            out.push(',');
        }
        first = false;
        let ids: Vec<String> = cond
            .question_ids
            .iter()
            .map(|s| serde_json::to_string(s).expect("string serializes"))
            .collect();
        let by_type: Vec<String> = cond
            .by_type
            .iter()
            .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), cell_json(v)))
            .collect();
        out.push_str(&format!(
            "{}:{{\"all\":{},\"by_type\":{{{}}},\"condition\":{},\"question_ids\":[{}],\"seed\":{}}}",
            serde_json::to_string(name).unwrap(),
            cell_json(&cond.all),
            by_type.join(","),
            serde_json::to_string(&cond.condition).unwrap(),
            ids.join(","),
            cond.seed
        ));
    }
    out.push_str("},\"delta_by_type\":");
    match &report.delta_by_type {
        None => out.push_str("null"),
        Some(map) => {
            let entries: Vec<String> = map
                .iter()
                .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).unwrap(), fmt_opt(*v)))
                .collect();
            out.push_str(&format!("{{{}}}", entries.join(",")));
        }
    }
    out.push_str(&format!(
        ",\"delta_points\":{},\"schema_version\":{}}}",
        fmt_opt(report.delta_points),
        report.schema_version
    ));
    out
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    let json = report_to_canonical_json(report);
    std::fs::write(path, format!("{json}\n")).map_err(|e| CoreError::io(path, e))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CoreError::Json {
        line: None,
        source: e,
    })
}
