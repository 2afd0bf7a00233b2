//! Case catalog, configuration, batch evaluation, aggregation and
//! synthetic test cases.

pub mod aggregate;
pub mod catalog;
pub mod config;
pub mod pipeline;
pub mod run;
pub mod store;
pub mod synth;

pub use aggregate::{aggregate, parse_group_keys, summary_csv_bytes, write_summary_csv, CaseIndex, GroupKey, SummaryRow};
pub use catalog::{load_catalog, read_case, write_case, CaseStudy, EventType, CASE_SCHEMA};
pub use config::{Config, EvaluationParams};
pub use pipeline::{evaluate_case, CaseEvaluation};
pub use run::{replay, run_evaluation, ReplayReport, RunInputs, RunManifest, RunResult, MANIFEST_FILE};
pub use store::{ForecastStore, TargetStore};
pub use synth::{generate_synthetic, SynthKind, SynthOutput, SynthParams, TemperatureVariant, PERFECT_MODEL};
