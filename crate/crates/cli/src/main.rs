mod commands;
mod repl;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robodiary_core::config::{Config, ConfigError};
use robodiary_core::memory::MemoryError;
use robodiary_core::recorder::RecordError;
use robodiary_core::PipelineError;

/// Record walk sessions and turn them into diaries.
#[derive(Debug, Parser)]
#[command(name = "robodiary", version)]
struct Cli {
    /// Configuration file (defaults apply when omitted).
    #[arg(long, global = true, env = "ROBODIARY_CONFIG")]
    config: Option<PathBuf>,

    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record a session interactively.
    #[command(subcommand)]
    Session(SessionCommand),
    /// Generate a diary from a session folder.
    Generate(commands::GenerateArgs),
    /// Check a session folder and list findings.
    Validate { folder: PathBuf },
    /// Print the events and images of a session folder.
    Inspect { folder: PathBuf },
    #[command(subcommand)]
    Config(ConfigCommand),
    /// Run the HTTP service.
    Serve {
        /// Address to bind, overriding the configuration.
        #[arg(long)]
        bind: Option<String>,
    },
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Debug, Subcommand)]
enum SessionCommand {
    /// Start a session and read actions from stdin.
    ///
    /// Plain lines are chat messages. `/toy <name> <probability> [speech]`
    /// records a toy play, `/feed <tag> [speech]` a feeding and `/end`
    /// closes the session.
    Start {
        #[arg(long)]
        date: String,
        /// Directory holding session folders, overriding the configuration.
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Print the effective configuration.
    Show,
}

#[derive(Debug, Subcommand)]
enum FixtureCommand {
    /// Record the example walk under a directory.
    Write {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status for a failed command: 1 for findings in the data, 2 for
/// usage, configuration and I/O trouble.
fn exit_code(error: &anyhow::Error) -> u8 {
    let memory = |e: &MemoryError| match e {
        MemoryError::Io { .. } | MemoryError::NotFound(_) | MemoryError::Validation { .. } => 2,
        _ => 1,
    };
    for cause in error.chain() {
        if let Some(e) = cause.downcast_ref::<MemoryError>() {
            return memory(e);
        }
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return match e {
                PipelineError::Memory(m) => memory(m),
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<RecordError>() {
            return match e {
                RecordError::Memory(m) => memory(m),
                RecordError::Classifier(_) => 1,
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
    }
    2
}

fn report(error: &anyhow::Error, json: bool) {
    let stage = error
        .chain()
        .find_map(|c| c.downcast_ref::<PipelineError>())
        .and_then(PipelineError::stage);
    if json {
        let body = serde_json::json!({
            "error": { "message": format!("{error:#}"), "stage": stage }
        });
        eprintln!("{body}");
    } else {
        eprintln!("error: {error:#}");
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = Config::load(cli.config.as_deref())?;
    let out = commands::Output { json: cli.json };
    match cli.command {
        Command::Session(SessionCommand::Start { date, root }) => {
            let root = root.unwrap_or_else(|| config.root.clone());
            repl::run(&config, &root, &date, out)
        }
        Command::Generate(args) => commands::generate(&config, args, out),
        Command::Validate { folder } => commands::validate(&config, &folder, out),
        Command::Inspect { folder } => commands::inspect(&config, &folder, out),
        Command::Config(ConfigCommand::Show) => commands::show_config(&config, out),
        Command::Serve { bind } => commands::serve(config, bind),
        Command::Fixture(FixtureCommand::Write { out: dir }) => commands::write_fixture(&dir, out),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(code) => code,
        Err(error) => {
            report(&error, json);
            ExitCode::from(exit_code(&error))
        }
    }
}
