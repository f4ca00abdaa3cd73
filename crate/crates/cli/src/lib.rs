//! Batch runner for Bergman-metric experiments: TOML config in, deterministic
//! computation, tabular or JSON report out.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{
    ConfigError, DirectionSpec, DomainConfig, DomainName, ExperimentConfig, ExperimentKind, MetricRoute,
    MetricSource, OutputFormat,
};
pub use experiment::{run_experiment, RunError};
pub use report::{emit_report, parse_structured, ExperimentReport, SampleRecord, Verdict, TABULAR_HEADER};
