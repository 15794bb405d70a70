//! Simulation harness for the message-passing detector.

pub mod config;
pub mod experiments;
pub mod report;
pub mod selftest;

pub use config::{ConfigError, DetectorKind, ExperimentConfig};
pub use experiments::{derive_seed, run_ber_turbo, run_nmse_study, run_ser_sweep, RunOutput};
