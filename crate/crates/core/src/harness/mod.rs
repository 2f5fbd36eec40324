//! Monte-Carlo experiment harness behind the `ofdma-cic` binary.

pub mod run;
pub mod spec;

pub use run::{
    channel_hash, companion_paths, read_rows, run_experiment, summarize, write_outputs, write_rows, write_summary,
    ExperimentResult, Row, SummaryRow, HEADER, SCHEMA_VERSION, SUMMARY_HEADER,
};
pub use spec::{parse_schemes, preset, ExperimentKind, ExperimentSpec, SchemeChoice, PRESETS};
