//! Macro-F1 and the per-task aggregation used for scoring.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Subtask, TaskFamily};
use crate::error::{Error, Result};

pub use report::{
    render_comparison, ComparisonRow, ComparisonTable, ModelScores, ResultRecord, RowSource,
    BASELINE, HIGHEST_SCORE, SUBMITTED_BERT_DENSENET,
};

/// Unweighted mean over all `num_classes` classes of per-class F1.
///
/// A class that never occurs in either vector contributes 0, as does any class whose precision
/// or recall has a zero denominator.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() || num_classes == 0 {
        return Err(Error::Metric("macro-F1 needs at least one example and one class".into()));
    }
    let mut tp = vec![0u64; num_classes];
    let mut fp = vec![0u64; num_classes];
    let mut fn_ = vec![0u64; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::Metric(format!(
                "class index out of range: ({t}, {p}) with {num_classes} classes"
            )));
        }
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let total: f64 = (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], tp[c] + fp[c]);
            let recall = ratio(tp[c], tp[c] + fn_[c]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    Ok(total / num_classes as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_subtask: BTreeMap<Subtask, f64>,
    pub task_a_score: f64,
    pub task_b_score: f64,
    pub task_c_score: f64,
}

impl EvaluationReport {
    pub fn scores(&self) -> [f64; 3] {
        [self.task_a_score, self.task_b_score, self.task_c_score]
    }
}

/// Task A is its single subtask; Task B and Task C are arithmetic means of their subtasks.
pub fn aggregate(per_subtask: &BTreeMap<Subtask, f64>) -> Result<EvaluationReport> {
    if let Some(missing) = Subtask::ALL.iter().find(|t| !per_subtask.contains_key(t)) {
        return Err(Error::MissingSubtask(*missing));
    }
    let mean = |family: TaskFamily| {
        let scores: Vec<f64> = Subtask::ALL
            .iter()
            .filter(|t| t.family() == family)
            .map(|t| per_subtask[t])
            .collect();
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok(EvaluationReport {
        per_subtask: per_subtask
            .iter()
            .filter(|(t, _)| Subtask::ALL.contains(t))
            .map(|(&t, &s)| (t, s))
            .collect(),
        task_a_score: per_subtask[&Subtask::A],
        task_b_score: mean(TaskFamily::B),
        task_c_score: mean(TaskFamily::C),
    })
}
