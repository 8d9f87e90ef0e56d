//! Scenario runner for the monitoring framework.
//!
//! Subcommands: `run` executes one configured scenario and writes its
//! `.ndlog` file plus a summary table; `compare` runs several mode or
//! policy variants over the identical scenario and prints them side by
//! side; `validate` checks a config document without running it.
//!
//! Exit codes: 0 on success, 2 for configuration/usage errors, 3 for
//! runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use vigil_core::config::{
    apply_overrides, parse_config_file, parse_mode_token, ConfigError, Overrides,
};
use vigil_core::report::render_comparison;
use vigil_core::runner::{compare, Run, RunError, Variant};

#[derive(Parser)]
#[command(
    name = "vigil",
    version,
    about = "Scenario-driven runtime monitoring harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its log
    Run(RunArgs),
    /// Run several mode/policy variants over one scenario
    Compare(CompareArgs),
    /// Parse and validate a config document
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config document
    #[arg(long)]
    config: PathBuf,
    /// Override the output log path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario duration in ticks
    #[arg(long)]
    ticks: Option<u64>,
    /// Override the monitoring mode: periodic:<p> or event
    #[arg(long)]
    mode: Option<String>,
    /// Pace the run at this many milliseconds per tick
    #[arg(long)]
    realtime: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario config document
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated variants: periodic:<p>, event, policy
    #[arg(long)]
    modes: String,
    /// Override the base output log path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario duration in ticks
    #[arg(long)]
    ticks: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario config document
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Compare(args) => compare_command(args),
        Command::Validate(args) => validate_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(RunError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(RunError::Config(_)) => 2,
            CliError::Run(_) => 3,
        }
    }
}

impl From<RunError> for CliError {
    fn from(err: RunError) -> Self {
        // Config-class failures keep their exit code no matter where
        // they surface.
        match err {
            RunError::Config(e) => CliError::Config(e),
            other => CliError::Run(other),
        }
    }
}

fn overrides_from(
    seed: Option<u64>,
    ticks: Option<u64>,
    mode: Option<&str>,
    out: Option<PathBuf>,
) -> Result<Overrides, ConfigError> {
    Ok(Overrides {
        seed,
        ticks,
        mode: mode.map(parse_mode_token).transpose()?,
        out,
    })
}

fn run_command(args: RunArgs) -> Result<(), CliError> {
    let mut config = parse_config_file(&args.config)?;
    let overrides = overrides_from(args.seed, args.ticks, args.mode.as_deref(), args.out)?;
    apply_overrides(&mut config, &overrides)?;
    let output_path = config.output_path.clone();
    let mut run = Run::new(config)?;
    run.set_realtime(args.realtime.map(Duration::from_millis));
    let report = run.finish()?;
    print!("{}", report.render_table());
    println!("log written to {}", output_path.display());
    Ok(())
}

fn compare_command(args: CompareArgs) -> Result<(), CliError> {
    let mut config = parse_config_file(&args.config)?;
    let overrides = overrides_from(args.seed, args.ticks, None, args.out)?;
    apply_overrides(&mut config, &overrides)?;

    let mut variants = Vec::new();
    for token in args
        .modes
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
    {
        let variant = Variant::parse(token)?;
        if variants.contains(&variant) {
            return Err(
                ConfigError::Invalid(format!("variant '{token}' listed more than once")).into(),
            );
        }
        variants.push(variant);
    }
    if variants.len() < 2 {
        return Err(ConfigError::Invalid(format!(
            "compare needs at least two variants, got {}",
            variants.len()
        ))
        .into());
    }

    let rows = compare(&config, &variants)?;
    print!("{}", render_comparison(&rows));
    Ok(())
}

fn validate_command(args: ValidateArgs) -> Result<(), CliError> {
    let config = parse_config_file(&args.config)?;
    println!(
        "config OK: {} ticks, {} properties, {} sensors, mode {}, policy {}",
        config.script.duration,
        config.properties.len(),
        config.sensors.len(),
        match config.mode {
            vigil_core::controller::MonitoringMode::Periodic { log_period } =>
                format!("periodic:{log_period}"),
            vigil_core::controller::MonitoringMode::EventTriggered => "event".to_string(),
        },
        config.policy.label()
    );
    Ok(())
}
