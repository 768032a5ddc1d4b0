//! Configuration, checkpoints and experiment drivers behind the `css-lab` binary.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod run;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{parse_config, Experiment, RunConfig};
pub use error::{CliError, CliResult};
pub use run::run;

/// Size of the worker pool: `CSS_LAB_THREADS` when set, otherwise rayon's default.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("CSS_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| CliError::TypeError {
        key: "CSS_LAB_THREADS".into(),
        value: raw.clone(),
        expected: "a positive integer".into(),
    })?;
    // a second initialisation (tests in one process) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
