//! Monte Carlo experiment runner, brute-force oracles and report writers.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod report;

pub use config::{derive_seed, ConfigError, ExperimentConfig, Metric, ObservationSpec, SweepAxis, SweepSpec};
pub use experiment::{
    paired_difference, run_detection_experiment, run_experiment, run_filtering_experiment, run_sweep,
    simulate_null, simulate_target, sweep, trial_rng, DetectionMetrics, DetectorResult, Estimate,
    FilteringMetrics, HarnessError, MetricsReport, SweepRow, TrackerResult,
};
pub use oracle::{
    brute_force_posterior, brute_force_sequence_likelihood, run_oracle_suites, OracleCheck, OracleError,
    OracleModel, OracleOptions, OracleSuite, RandomInstance,
};
pub use report::{write_experiment, write_sweep};
