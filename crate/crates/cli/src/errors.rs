//! CLI error classification: configuration problems exit with code 2,
//! insufficient statistics with 3, everything else with 1.

use std::fmt;

/// A user-facing configuration error (bad file, unknown preset, invalid
/// field), distinct from runtime failures.
#[derive(Debug)]
pub struct ConfigError(String);

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError(message.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(core_err) = cause.downcast_ref::<rydsim_core::Error>() {
            return match core_err {
                rydsim_core::Error::InsufficientStatistics(_) => 3,
                rydsim_core::Error::InvalidParam { .. } | rydsim_core::Error::Parse(_) => 2,
                _ => 1,
            };
        }
    }
    1
}
