use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sdlab_cli::config::family_listing;
use sdlab_cli::{inputs_hash, parse_config, resolve_output_dir, run, ExperimentConfig, JobStatus, OUTPUT_ROOT_ENV};

/// Runs declarative experiments on singular-drift diffusions.
#[derive(Parser)]
#[command(name = "sdlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every job of a configuration and write a manifest.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir` and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration and print what it would run.
    Validate { config: PathBuf },
    /// Print the built-in family identifiers.
    ListFamilies,
}

const EXIT_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_INVALID)
    })?;
    parse_config(&text).map_err(|errs| {
        eprintln!("error: {} problem(s) in {}", errs.0.len(), path.display());
        for e in &errs.0 {
            eprintln!("  - {e}");
        }
        ExitCode::from(EXIT_INVALID)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListFamilies => {
            for (kind, names) in family_listing() {
                println!("{kind}: {}", names.join(", "));
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Err(code) => code,
            Ok(cfg) => {
                println!(
                    "ok: dimension {}, p = {}, beta = {}",
                    cfg.dim(),
                    cfg.problem.p,
                    cfg.beta()
                );
                println!("inputs hash {}", inputs_hash(&cfg));
                for j in &cfg.jobs {
                    println!("  job {} ({})", j.name, j.kind.label());
                }
                ExitCode::SUCCESS
            }
        },
        Command::Run { config, out } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let base = config.parent().unwrap_or(Path::new("."));
            let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
            let dir = out.unwrap_or_else(|| resolve_output_dir(&cfg.output_dir, base, root.as_deref()));
            let manifest = match run(&cfg, &dir) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: cannot write to {}: {e}", dir.display());
                    return ExitCode::from(EXIT_INVALID);
                }
            };
            for j in &manifest.jobs {
                let status = match j.status {
                    JobStatus::Pass => "pass",
                    JobStatus::Fail => "FAIL",
                    JobStatus::Error => "ERROR",
                };
                match &j.error {
                    Some(e) => println!("{status:<5} {} ({:.2}s): {e}", j.name, j.runtime),
                    None => println!("{status:<5} {} ({:.2}s)", j.name, j.runtime),
                }
            }
            println!("manifest: {}", dir.join(sdlab_cli::MANIFEST_FILE).display());
            if manifest.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
    }
}
