use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use metaret_cli::{assemble_config, cmd_control, cmd_gradcheck, cmd_predict, cmd_sweep};

/// Online adaptation of return-function parameters for prediction and
/// control, with a finite-difference verification suite and fixed-parameter
/// sweeps.
#[derive(Parser)]
#[command(name = "metaret", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSVs, plots and the resolved config echo.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seed list, overriding the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Config overrides, e.g. `--set iterations=1000` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-gradient prediction on a Markov reward process.
    Predict(RunArgs),
    /// Meta-gradient actor-critic control on the noisy gridworld.
    Control(RunArgs),
    /// Run the finite-difference gradient verification suite.
    Gradcheck(RunArgs),
    /// Fixed-meta-parameter baseline sweep over a discount grid.
    Sweep(RunArgs),
}

// exit codes: 0 ok, 1 usage error, 2 check failure, 3 run divergence
const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILURE: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

fn split_sets(raw: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    raw.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got `{kv}`"))
        })
        .collect()
}

fn run() -> anyhow::Result<u8> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are not usage errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            e.print().ok();
            return Ok(code);
        }
    };
    let (args, runner): (&RunArgs, fn(_, _) -> _) = match &cli.command {
        Command::Predict(a) => (a, cmd_predict),
        Command::Control(a) => (a, cmd_control),
        Command::Gradcheck(a) => (a, cmd_gradcheck),
        Command::Sweep(a) => (a, cmd_sweep),
    };
    let sets = split_sets(&args.set)?;
    let config = assemble_config(args.config.as_deref(), &sets, args.seeds.as_deref())?;
    std::fs::create_dir_all(&args.out)?;
    let outcome = runner(config, &args.out)?;
    if outcome.checks_failed {
        return Ok(EXIT_CHECK_FAILURE);
    }
    if !outcome.diverged_seeds.is_empty() {
        return Ok(EXIT_DIVERGENCE);
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
