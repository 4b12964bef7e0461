//! Run-directory pipeline around `pcawalk-core`.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{run_all, run_stage, Stage};
