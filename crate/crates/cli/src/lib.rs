//! Batch driver behind the `segeval` binary: config and manifest parsing,
//! parallel case evaluation and CSV reports.

pub mod config;
pub mod manifest;
pub mod report;
pub mod run;
pub mod validate;

pub use config::{ConfigError, RunConfig};
pub use manifest::{Manifest, ManifestError};
pub use run::{run, RunError, RunOutcome};
pub use validate::{validate, Diagnostic};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const CONFIG_ERROR: u8 = 1;
    /// No case evaluated, a validation diagnostic, or a failed selftest.
    pub const NO_SUCCESS: u8 = 2;
}
