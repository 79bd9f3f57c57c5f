//! Library surface of the command-line harness, exposed so integration and
//! acceptance tests can drive the commands in-process.

pub mod commands;
pub mod output;
pub mod svg;

use std::path::Path;

use metaret::config::ExperimentConfig;

pub use commands::{cmd_control, cmd_gradcheck, cmd_predict, cmd_sweep, CommandOutcome};

/// Assemble a config from an optional file plus overrides, mirroring the CLI
/// flag handling: file first, then `--set key=value` pairs, then `--seeds`.
pub fn assemble_config(
    file: Option<&Path>,
    sets: &[(String, String)],
    seeds: Option<&str>,
) -> anyhow::Result<ExperimentConfig> {
    let mut config = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            text.parse::<ExperimentConfig>()?
        }
        None => ExperimentConfig::default(),
    };
    for (key, value) in sets {
        config.set(key, value)?;
    }
    if let Some(seeds) = seeds {
        config.set("seeds", seeds)?;
    }
    Ok(config)
}
