//! Workload driver, stress harness and acceptance checks for `chronocas`.

pub mod config;
pub mod conformance;
pub mod latency;
pub mod paired;
pub mod programs;
pub mod run;
pub mod stress;
pub mod subject;

pub use config::{ConfigError, Mix, Structure, WorkloadConfig};
pub use run::{run, run_with_baseline, RunReport};
pub use stress::{stress, StressConfig, StressReport};
