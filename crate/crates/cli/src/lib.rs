//! Experiment driver for the `fracdirac` command-line tool: configuration,
//! deterministic output formatting and one runner per subcommand.

// Index loops mirror the tensor notation; `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod format;

pub use config::{Experiment, RunConfig, PRESETS};
pub use experiments::{run, RunOutput, RESOLVED_CONFIG};
