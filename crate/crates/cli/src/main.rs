use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::Parser;

use memsq_cli::commands::{execute, output_dir, Command, Context};
use memsq_cli::config::GRAMMAR_HELP;
use memsq_cli::{exit, parse_config, CliError, ConfigError};

/// Parabolic MEMS laboratory: simulation, quenching analysis and
/// critical-parameter searches.
#[derive(Debug, Parser)]
#[command(name = "memsq", version, after_help = GRAMMAR_HELP)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Configuration file.
    config: PathBuf,
    /// Output directory (overrides `[command] out`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    let Ok(raw) = std::env::var("MEMSQ_THREADS") else { return Ok(None) };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => Err(CliError::Config {
            path: PathBuf::from("MEMSQ_THREADS"),
            error: ConfigError { line: None, message: format!("expected a positive integer, got `{raw}`") },
        }),
    }
}

fn run(args: Args) -> anyhow::Result<i32> {
    if let Some(n) = threads_from_env()? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let config =
        parse_config(&text).map_err(|error| CliError::Config { path: args.config.clone(), error })?;
    let out = output_dir(args.out.as_deref(), &config, args.command);
    let ctx = Context { config, config_path: args.config, out };
    let outcome = execute(args.command, &ctx)
        .with_context(|| format!("`{}` with output in {}", args.command.name(), ctx.out.display()))?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for note in &outcome.manifest.notes {
        eprintln!("note: {note}");
    }
    println!("wrote {} file(s) to {}", outcome.manifest.files.len(), ctx.out.display());
    Ok(if outcome.undecided { exit::UNDECIDED } else { exit::SUCCESS })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors; code 2 means "undecided".
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { exit::SUCCESS as u8 });
        }
    };
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.chain().find_map(|e| e.downcast_ref::<CliError>()).map_or(exit::FAILURE, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
