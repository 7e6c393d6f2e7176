//! One module per subcommand; each produces a [`Report`](crate::output::Report).

mod dist;
mod fit;
mod herald;
mod lp_scan;
mod noise_sweep;
mod ring;

use std::path::Path;

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::Report;
use crate::CliError;

pub fn run(run: &RunConfig, output: Option<&Path>) -> Result<Report, CliError> {
    match run {
        RunConfig::Dist(cfg) => dist::run(cfg),
        RunConfig::LpScan(cfg) => lp_scan::run(cfg, output),
        RunConfig::Fit(cfg) => fit::run(cfg, output),
        RunConfig::NoiseSweep(cfg) => noise_sweep::run(cfg, output),
        RunConfig::Ring(cfg) => ring::run(cfg, output),
        RunConfig::Herald(cfg) => herald::run(cfg),
    }
}

/// Classifies library errors: bad parameters are the caller's fault, the
/// rest are runtime failures.
pub(crate) fn core_error(e: photonet_core::Error) -> CliError {
    use photonet_core::Error as E;
    match &e {
        E::ParameterRange { .. }
        | E::UnsupportedCombination(_)
        | E::MalformedProblem(_)
        | E::RingTooLarge { .. }
        | E::AlphabetMismatch(_)
        | E::UnknownMode(_) => CliError::Validation(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    }
}

/// Resolved parameters as embedded in output metadata.
pub(crate) fn params_value<T: serde::Serialize>(cfg: &T) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Sidecar identity of a job: the command name plus its full parameters.
pub(crate) fn identity<T: serde::Serialize>(command: &str, cfg: &T) -> Value {
    json!({ "command": command, "params": params_value(cfg) })
}
