//! Dataset ingestion: CSV loading, caption repair, subtask label views, class weights and
//! split-count verification.

mod labels;
mod loader;
mod record;
mod schema;
pub mod store;
pub mod synthetic;
mod verify;
mod weights;

pub use labels::{
    derive_target, CanonicalLabels, Intensity, OutputActivation, Sentiment, Subtask, SubtaskTarget,
    TaskFamily,
};
pub use loader::{load_split, preprocess_split, LoadedSplit, Reject, RejectsReport};
pub use record::{repair_text, MemeRecord, Split};
pub use schema::{ColumnMapping, DatasetSchema, LabelVocabulary};
pub use verify::{
    expected_counts, expected_split_size, verify_split_counts, BinarizationCheck, CountCell,
    SplitCountReport,
};
pub use weights::{class_counts, compute_class_weights, ClassWeights};
