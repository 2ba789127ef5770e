use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coherent_tdd::config::{self, Preset};
use coherent_tdd::experiment::{self, headline_sweep, RunOutput};
use coherent_tdd::signal_oracle::{verify_model, PassbandConfig};

#[derive(Parser)]
#[command(version, about = "TDD distributed massive MIMO link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its CSVs and a manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the sweep tuples of a configuration (the four headline curves by default).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the closed-form chain model against the sampled passband chain.
    VerifyModel {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

const VERIFY_LIMIT: f64 = 1e-9;

fn report(outputs: &[RunOutput], out: &Path) {
    for o in outputs {
        println!("{}: {}", o.label, o.csv.display());
    }
    println!("manifest: {}", out.join("manifest.toml").display());
}

fn load(
    path: &Path,
    preset: Option<Preset>,
    seed: Option<u64>,
) -> coherent_tdd::Result<config::ConfigFile> {
    let mut file = config::load(path, preset)?;
    if let Some(seed) = seed {
        file.run.seed = seed;
    }
    Ok(file)
}

fn execute(cli: Cli) -> coherent_tdd::Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            config,
            preset,
            seed,
            out,
        } => {
            let file = load(&config, preset, seed)?;
            let outputs = experiment::run_matrix(&file.run, &[file.run.point()], &out)?;
            report(&outputs, &out);
        }
        Command::Sweep {
            config,
            preset,
            seed,
            out,
        } => {
            let file = load(&config, preset, seed)?;
            let sweep = if file.sweep.is_empty() {
                headline_sweep()
            } else {
                file.sweep
            };
            let outputs = experiment::run_matrix(&file.run, &sweep, &out)?;
            report(&outputs, &out);
        }
        Command::VerifyModel { trials, seed } => {
            let report = verify_model(&PassbandConfig::desk(), trials, seed)?;
            let max = report.max_error();
            let pass = max <= VERIFY_LIMIT;
            let inaccurate = report
                .min_inaccurate_error(0.2)
                .map_or_else(|| "n/a".to_string(), |e| format!("{e:.3e}"));
            println!(
                "verify-model: {} trials, max relative error {max:.3e} (limit {VERIFY_LIMIT:e}), \
                 inaccurate-model min error {inaccurate}: {}",
                report.trials.len(),
                if pass { "PASS" } else { "FAIL" }
            );
            if !pass {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
