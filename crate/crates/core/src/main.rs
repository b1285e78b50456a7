use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use fedmeta::config::{parse_config, ScenarioConfig};
use fedmeta::data::export_synthetic;
use fedmeta::report::{compare_arms, FinalReport};
use fedmeta::scenario::run_scenario;
use fedmeta::Error;

/// Differentially private federated few-shot meta-learning simulator.
///
/// Log verbosity is read from FEDMETA_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "fedmeta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Override the global seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a summary table of one or more final reports.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Write the synthetic corpus of a config as PGM files plus a manifest.
    GenSynthetic { spec: PathBuf, out_manifest: PathBuf },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn fail(e: &Error, code: u8) -> ExitCode {
    error!("{e}");
    eprintln!("fedmeta: {e}");
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    parse_config(path).map_err(|e| fail(&e, EXIT_CONFIG))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FEDMETA_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            run_scenario(&cfg).and_then(|outcome| {
                outcome.write(&cfg.out_dir)?;
                print!("{}", compare_arms(std::slice::from_ref(&outcome.report)));
                println!("artifacts written to {}", cfg.out_dir.display());
                Ok(())
            })
        }
        Command::Compare { reports } => reports
            .iter()
            .map(|p| FinalReport::load(p))
            .collect::<Result<Vec<_>, _>>()
            .map(|all| print!("{}", compare_arms(&all))),
        Command::GenSynthetic { spec, out_manifest } => {
            let cfg = match load(&spec) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let Some(synthetic) = cfg.synthetic_spec() else {
                eprintln!("fedmeta: {} does not describe a synthetic data source", spec.display());
                return ExitCode::from(EXIT_CONFIG);
            };
            export_synthetic(&synthetic, &out_manifest).map(|manifest| {
                println!("wrote {} images and {}", manifest.entries.len(), out_manifest.display());
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, EXIT_RUNTIME),
    }
}
