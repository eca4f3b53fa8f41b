use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use realm::runner::{self, EXIT_CONFIG, EXIT_OK, THREADS_ENV};

#[derive(Parser)]
#[command(name = "realm", version, about = "Decoherent-histories experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its JSON (and CSV) results.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads; falls back to REALM_THREADS, then to all cores.
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
        /// Check the config and stop.
        #[arg(long)]
        validate_only: bool,
    },
    /// List every violation in a config without computing anything.
    Validate { config: PathBuf },
}

fn report(violations: &[runner::Violation]) {
    for v in violations {
        eprintln!("{v}");
    }
}

fn validate(config: &Path) -> i32 {
    match runner::load_config(config) {
        Ok(_) => {
            println!("{}: valid", config.display());
            EXIT_OK
        }
        Err(v) => {
            report(&v);
            eprintln!("{} violation(s)", v.len());
            EXIT_CONFIG
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Run {
            config,
            out,
            threads,
            validate_only,
        } => {
            if validate_only {
                validate(&config)
            } else {
                match threads {
                    Some(0) => {
                        eprintln!("--threads: must be positive");
                        return ExitCode::from(EXIT_CONFIG as u8);
                    }
                    Some(n) => {
                        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                            eprintln!("cannot start {n} threads: {e}");
                            return ExitCode::from(EXIT_CONFIG as u8);
                        }
                    }
                    None => {}
                }
                match runner::load_config(&config) {
                    Err(v) => {
                        report(&v);
                        EXIT_CONFIG
                    }
                    Ok(cfg) => match runner::run(&cfg, &out) {
                        Ok(paths) => {
                            for p in paths {
                                println!("{}", p.display());
                            }
                            EXIT_OK
                        }
                        Err(e) => {
                            eprintln!("{}: {e}", cfg.kind);
                            runner::exit_code(&e)
                        }
                    },
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
