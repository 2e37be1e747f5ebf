//! Drivers behind the command-line tool: single runs with reports, lemma
//! checks, Monte-Carlo bands and parameter sweeps.

mod check;
mod run;
pub(crate) mod sweep;

pub use check::{
    check_growth, check_matsample_fuzz, check_matsample_tight, check_maxa_fuzz,
    check_mergeable_band, check_movement, check_partial_duplicate_band, check_prodab_fuzz,
    conforming_spiked, mergeable_residual_norm, precision_bits, BandReport, CheckReport,
    FuzzReport, MatsampleTightReport, MonitorBatch, MonitorSetup,
};
pub use run::{
    oracle_summary, run_algorithm, run_with_oracle, Algo, EtaChoice, OracleDigest, RunConfig,
    RunReport, DEFAULT_SIGMA1_FACTOR,
};
pub use sweep::{run_sweep, to_csv, SweepConfig, SweepRow, CSV_HEADER};

use crate::error::{Error, Result};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "OJA_THREADS";

/// Sizes the global worker pool from `OJA_THREADS` when set. Safe to call
/// more than once; only the first call takes effect.
pub fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}
