//! Scenario configuration and run orchestration for the `rotmaster` binary.

pub mod output;
pub mod run;
pub mod scenario;

pub use run::{compute, simulate, validity_report, Computed, RunError};
pub use scenario::{parse_scenario, preset, Backend, Scenario};
