//! Scenario files and the `sumstat` subcommands, kept in a library so the
//! integration tests can drive them without spawning processes.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, OracleKind, ScenarioConfig};
pub use run::{run_evaluate, run_terms, run_validate, CurveRow, RunError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const UNCERTIFIED: i32 = 1;
    pub const VALIDATION_FAILED: i32 = 2;
    pub const INPUT_ERROR: i32 = 3;
}

/// Environment variable overriding the working precision.
pub const DIGITS_ENV: &str = "SUMSTAT_DIGITS";
