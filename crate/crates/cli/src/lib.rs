//! Orchestration library behind the `rydsim` binary: configuration schema,
//! pipeline execution, figure presets and the fit command.

pub mod config;
pub mod errors;
pub mod fit_cmd;
pub mod orchestrator;
pub mod presets;
