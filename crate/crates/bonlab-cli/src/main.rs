use std::process::ExitCode;

use bonlab_cli::{instance_json, load_config, run, verify, UsageError};
use clap::{Parser, Subcommand};

/// Exact and Monte-Carlo experiments on best-of-N style selection rules.
#[derive(Parser)]
#[command(name = "bonlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the jobs of a JSON config (or a built-in such as `separation-default`).
    /// BONLAB_OUT overrides the output directory.
    Run { config: String },
    /// Run the built-in verification suite; exit 1 if any check fails.
    Verify,
    /// Build a catalog instance and write it as JSON.
    Instance {
        name: String,
        /// Comma separated `name=value` pairs.
        #[arg(long, default_value = "")]
        params: String,
        /// Output file; stdout if absent.
        #[arg(long)]
        emit: Option<std::path::PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let out = run(&cfg)?;
            println!("wrote {} files to {}", out.files.len(), out.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let rows = verify::run_suite();
            print!("{}", verify::render(&rows));
            Ok(if rows.iter().all(|r| r.pass) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Instance { name, params, emit } => {
            let json = instance_json(&name, &params)?;
            match emit {
                Some(path) => {
                    std::fs::write(&path, json).map_err(|e| UsageError(format!("cannot write {}: {e}", path.display())))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
