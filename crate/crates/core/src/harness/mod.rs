//! Experiment orchestration: configuration, paired replications, regret
//! accounting, aggregation and CSV persistence.

mod config;
mod csvio;
mod runner;
mod stats;

pub use config::{ActionSource, Algorithm, ExperimentConfig};
pub use csvio::{
    read_actions_csv, read_events, read_summary, read_traces, write_actions_csv, write_design_csv,
    write_events, write_failures, write_summary, write_traces, EventRow, FailureRow, SummaryRow,
    TraceRow, EVENT_HEADER, FAILURE_HEADER, SUMMARY_HEADER, TRACE_HEADER,
};
pub use runner::{
    noise_seed, replication_instance, replication_seed, run_algorithm, run_experiment,
    ExperimentOutput, CONFIG_FILE, EVENTS_FILE, FAILURES_FILE, SUMMARY_FILE, TRACES_FILE,
};
pub use stats::{
    aggregate, final_fit, final_slope, joint_pseudo_regret_increment, linear_fit, LinearFit,
    RegretTrace, Series, SummaryStats,
};
