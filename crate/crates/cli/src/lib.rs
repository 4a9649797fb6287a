//! Batch front-end: scenario files, suite manifests, CSV traces and the
//! `check` / `bench` reports.

pub mod manifest;
pub mod parse;
pub mod suite;
pub mod trace;

pub use manifest::{parse_manifest, SuiteManifest};
pub use parse::{emit_config, parse_config, ConfigError};
pub use suite::{run_one, run_suite, ScenarioReport, SuiteReport};
pub use trace::{emit_trace, trace_csv};
