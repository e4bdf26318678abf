//! Command-line driver: synthesize data, train heads per fold, attack them,
//! measure every trust axis and render profiles. Each command persists its
//! artifacts under one output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

pub use commands::{cmd_attack, cmd_eval, cmd_profile, cmd_synth, cmd_train};
pub use config::{load_config, parse_config, LoadedConfig, RunConfig};
pub use error::CliError;
pub use run::{Overrides, Run};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "TRUSTPROBE_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}
