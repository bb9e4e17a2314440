use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvaluationReport;
use crate::dataset::Subtask;

/// Published Task A / Task B / Task C macro-F1 for one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelScores {
    pub model: &'static str,
    pub scores: [f64; 3],
}

pub const HIGHEST_SCORE: ModelScores = ModelScores {
    model: "Highest score",
    scores: [0.3547, 0.5183, 0.3225],
};

pub const BASELINE: ModelScores = ModelScores {
    model: "Baseline",
    scores: [0.2176, 0.5002, 0.3009],
};

/// The competition submission (as opposed to the re-trained row of the comparison table).
pub const SUBMITTED_BERT_DENSENET: ModelScores = ModelScores {
    model: "BERT-DenseNet (submitted)",
    scores: [0.3452, 0.4421, 0.3097],
};

/// Re-trained comparison rows, in table order.
const PUBLISHED_MODELS: [ModelScores; 5] = [
    ModelScores {
        model: "BERT",
        scores: [0.1574, 0.4798, 0.2749],
    },
    ModelScores {
        model: "DenseNet",
        scores: [0.3344, 0.5120, 0.3209],
    },
    ModelScores {
        model: "ResNet",
        scores: [0.3186, 0.4965, 0.3129],
    },
    ModelScores {
        model: "BERT-DenseNet",
        scores: [0.3137, 0.4999, 0.3127],
    },
    ModelScores {
        model: "BERT-ResNet",
        scores: [0.3305, 0.4946, 0.3149],
    },
];

pub fn published_scores(model: &str) -> Option<[f64; 3]> {
    PUBLISHED_MODELS
        .iter()
        .chain([&HIGHEST_SCORE, &BASELINE])
        .find(|m| m.model == model)
        .map(|m| m.scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    Reference,
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub source: RowSource,
    /// Task A, Task B, Task C.
    pub scores: [f64; 3],
    /// Published scores for the same model, shown next to fresh results.
    pub published: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn reference_row(m: &ModelScores) -> ComparisonRow {
    ComparisonRow {
        model: m.model.to_string(),
        source: RowSource::Reference,
        scores: m.scores,
        published: None,
    }
}

/// Lays fresh results out in the row order of the published comparison, framed by the
/// highest-score and baseline reference rows. With no fresh results every published row is
/// shown as a reference row.
pub fn render_comparison(reports: &BTreeMap<String, EvaluationReport>) -> ComparisonTable {
    let mut rows = vec![reference_row(&HIGHEST_SCORE)];
    if reports.is_empty() {
        rows.extend(PUBLISHED_MODELS.iter().map(reference_row));
    } else {
        let known = PUBLISHED_MODELS.iter().map(|m| m.model);
        let extra = reports
            .keys()
            .map(String::as_str)
            .filter(|k| !PUBLISHED_MODELS.iter().any(|m| m.model == *k));
        for model in known.chain(extra) {
            if let Some(report) = reports.get(model) {
                rows.push(ComparisonRow {
                    model: model.to_string(),
                    source: RowSource::Fresh,
                    scores: report.scores(),
                    published: published_scores(model),
                });
            }
        }
    }
    rows.push(reference_row(&BASELINE));
    ComparisonTable { rows }
}

impl ComparisonTable {
    pub fn fresh_rows(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.source == RowSource::Fresh)
    }

    pub fn row(&self, model: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// Plain-text aligned table.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .max()
            .unwrap_or(0)
            .max("Model".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:<9}  {:>7}  {:>7}  {:>7}  |  {:>9}  {:>9}  {:>9}",
            "Model", "Source", "Task A", "Task B", "Task C", "Pub. A", "Pub. B", "Pub. C"
        );
        let _ = writeln!(out, "{}", "-".repeat(width + 74));
        for r in &self.rows {
            let source = match r.source {
                RowSource::Reference => "reference",
                RowSource::Fresh => "fresh",
            };
            let _ = write!(
                out,
                "{:<width$}  {:<9}  {:>7.4}  {:>7.4}  {:>7.4}  |",
                r.model, source, r.scores[0], r.scores[1], r.scores[2]
            );
            match r.published {
                Some(p) => {
                    let _ = writeln!(out, "  {:>9.4}  {:>9.4}  {:>9.4}", p[0], p[1], p[2]);
                }
                None => {
                    let _ = writeln!(out, "  {:>9}  {:>9}  {:>9}", "-", "-", "-");
                }
            }
        }
        out
    }
}

/// One line of the structured results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub model: String,
    pub subtask: Subtask,
    pub score: f64,
    pub seed: u64,
    pub preset: String,
    pub timestamp: String,
}
