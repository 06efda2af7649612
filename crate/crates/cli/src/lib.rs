//! File formats, the experiment driver and the command-line interface for
//! `multitypical-core`.
//!
//! * [`config`] experiment configuration (JSON plus flag overrides).
//! * [`io`] model JSON, calibration JSON and the CSV exports.
//! * [`study`] the mixture case study, one function per subcommand.
//! * [`report`] the `bounds-check` JSON report.

pub mod config;
pub mod io;
pub mod report;
pub mod study;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    /// At least one ensemble member failed to train.
    pub const PARTIAL: i32 = 2;
}
