mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::data::{GridMapArgs, IngestArgs, ScenarioCmdArgs};
use commands::model::{FitArgs, PredictArgs};
use commands::report::{CompareArgs, EvaluateArgs};
use commands::verify::VerifyArgs;
use config::{canonical, config_hash, ScenarioArgs};
use error::{CliError, Result};

/// Vecchia Gaussian-process regression for float profile data.
#[derive(Debug, Parser)]
#[command(name = "argo-gp", version)]
struct Cli {
    /// Worker threads (all cores when unset)
    #[arg(long, global = true, env = "ARGO_GP_THREADS")]
    threads: Option<usize>,
    /// More log output; repeat for debug detail
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a raw table and write the canonical measurement file
    Ingest(IngestArgs),
    /// Write the training and testing sets of a scenario
    Scenario(ScenarioCmdArgs),
    /// Fit the configured method and save the model
    Fit(FitArgs),
    /// Predict the scenario's test set from a saved model
    Predict(PredictArgs),
    /// Score a predictions file
    Evaluate(EvaluateArgs),
    /// Run several methods over several levels and tabulate the scores
    Compare(CompareArgs),
    /// Check the Vecchia likelihood and predictions against dense computations
    Verify(VerifyArgs),
    /// Print the resolved configuration, defaults included
    PrintConfig(PrintConfigArgs),
    /// Count profiles per grid cell
    GridMap(GridMapArgs),
}

#[derive(Debug, Args)]
struct PrintConfigArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

fn print_config(args: &PrintConfigArgs) -> Result<()> {
    let cfg = args.scenario.resolve()?;
    println!("# config_hash = {}", config_hash(&cfg));
    print!("{}", canonical(&cfg));
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Ingest(a) => commands::data::ingest(a),
        Command::Scenario(a) => commands::data::scenario(a),
        Command::Fit(a) => commands::model::run_fit(a),
        Command::Predict(a) => commands::model::run_predict(a),
        Command::Evaluate(a) => commands::report::run_evaluate(a),
        Command::Compare(a) => commands::report::run_compare(a),
        Command::Verify(a) => commands::verify::run_verify(a),
        Command::PrintConfig(a) => print_config(a),
        Command::GridMap(a) => commands::data::grid_map(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
