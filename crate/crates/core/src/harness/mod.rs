//! Experiment configuration, block-by-block evaluation, cost accounting and result files.

mod compare;
mod config;
mod experiment;
mod ledger;
mod results;

pub use compare::{
    compare_methods, emit_comparison, paired_ser_csv, Comparison, ComparisonSummary,
    COMPARISON_FILE, PAIRED_SER_FILE,
};
pub use config::{ExperimentConfig, Method, UserSchedule};
pub use experiment::{
    block_at, run_experiment, run_with_generator, schedule, ser, BlockResult, Models, RunOutput,
    Summary,
};
pub use ledger::{
    approximate_ratio, closed_form_ratio, complexity_ratio, ComplexityLedger, CostWeights,
    RatioInputs,
};
pub use results::{
    emit_results, read_json, results_csv, write_json, RESOLVED_CONFIG_FILE, RESULTS_FILE,
    RESULTS_HEADER, SUMMARY_FILE,
};
