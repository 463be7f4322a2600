//! Run configuration, command dispatch and on-disk records for the CLI.

pub mod commands;
pub mod config;
pub mod record;

use std::path::{Path, PathBuf};

pub use commands::run;
pub use config::{Experiment, LadderStep, RunConfig};
pub use record::{write_record, Assertion, RunRecord, Table};

use crate::error::{Error, Result};

pub const WORKERS_ENV: &str = "YMLAB_WORKERS";
pub const DEFAULT_OUT: &str = "runs";

pub const EXIT_OK: u8 = 0;
pub const EXIT_ASSERTION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Exit status for a failed run: parameter problems count as configuration
/// errors, everything else as a failed assertion.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::ResonantCutoff { .. } | Error::ComplexityGuard(_) => EXIT_CONFIG,
        _ => EXIT_ASSERTION,
    }
}

/// Runs `cfg` inside a pool of `workers` threads and writes the record.
pub fn execute(cfg: &RunConfig, workers: Option<usize>, out: Option<&Path>) -> Result<(RunRecord, Vec<PathBuf>)> {
    let n = match workers {
        Some(0) => return Err(Error::Config("field `workers`: must be ≥ 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Internal(e.to_string()))?;
    let rec = pool.install(|| run(cfg))?;
    let dir = out.map(Path::to_path_buf).or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let paths = write_record(&rec, &dir)?;
    Ok((rec, paths))
}
