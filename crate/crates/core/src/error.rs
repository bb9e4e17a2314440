use std::path::PathBuf;

use crate::dataset::Subtask;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing column {column:?} in {path} (accepted headers: {accepted})")]
    MissingColumn {
        path: PathBuf,
        column: &'static str,
        accepted: String,
    },

    #[error("labels required: record {0} has no labels")]
    LabelsRequired(String),

    #[error("task {task}: class {class:?} has no examples, class weights undefined")]
    EmptyClass { task: Subtask, class: &'static str },

    #[error("invalid encoder spec: {0}")]
    InvalidEncoder(String),

    #[error("invalid model spec: {0}")]
    InvalidModel(String),

    #[error("encoder error: {0}")]
    Encoder(String),

    #[error("image error for {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("record {record}: missing {modality} input required by the model")]
    MissingModality {
        record: String,
        modality: &'static str,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate:e})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("missing subtask score for {0}")]
    MissingSubtask(Subtask),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
