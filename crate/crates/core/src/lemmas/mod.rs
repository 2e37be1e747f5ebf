//! Executable checks of the inequalities behind the algorithms: algebraic
//! and combinatorial verifiers, monitors over recorded Oja traces, and
//! Monte-Carlo frequency checks of the probabilistic claims.

mod inequalities;
mod monitors;
mod stats;

pub use inequalities::{
    check_matsample, check_maxa, check_prodab, max_subsequence_sum, Inequality, MaxaCheck,
};
pub use monitors::{
    monitor_growth_correctness, monitor_movement, CheckStatus, MonitorEntry, MonitorReport,
    DEFAULT_MONITOR_TOL, QUANTIZED_MONITOR_TOL,
};
pub use stats::{stat_check, StatClaim, StatReport, MIN_TRIALS};
