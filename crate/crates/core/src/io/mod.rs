//! File formats: CSV tables, the JSON tree document, DOT drawings and
//! report tables.

mod csvio;
mod document;
mod dot;
mod report;

pub use csvio::{load_csv, read_dataset, read_query, write_dataset, LoadSpec};
pub use document::{TreeDocument, SCHEMA_VERSION};
pub use dot::{export_dot, DotOptions};
pub use report::{
    leaf_summaries, write_leaf_summary_csv, write_predictions_csv, write_sweep_csv, LeafSummary, SweepFit, SweepRow,
};
