//! `mixclass`: config-driven Monte Carlo runs, built-in figure presets, and
//! a numerical self test.
//!
//! Exit codes: 0 success, 2 configuration error (including CLI misuse,
//! which clap also reports as 2), 3 numerical or I/O failure at runtime.

mod config;
mod figures;
mod plot;
mod runner;
mod selftest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::Experiment;
use figures::FIGURE_IDS;

#[derive(Parser)]
#[command(
    name = "mixclass",
    version,
    about = "Mixture-classification experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a TOML config
    Run {
        /// Path to the config file
        config: PathBuf,
        /// Execute trials on a single thread (results are identical either way)
        #[arg(long)]
        serial: bool,
    },
    /// Render a built-in preset (fig1 .. fig7) to CSV and SVG
    Figure {
        /// Preset name
        fig_id: String,
        /// Output directory
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        /// Override the preset's replication count
        #[arg(long)]
        reps: Option<usize>,
        /// Override the preset's base seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the numerical property suites
    Selftest,
}

const EXIT_CONFIG: i32 = 2;
const EXIT_RUNTIME: i32 = 3;

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    match Cli::parse().command {
        Command::Run { config, serial } => {
            let experiment = match Experiment::load(&config) {
                Ok(experiment) => experiment,
                Err(err) => {
                    eprintln!("config error: {err}");
                    return EXIT_CONFIG;
                }
            };
            if experiment.symmetrized {
                eprintln!("note: covariance file was not symmetric; its symmetric part is used");
            }
            match runner::run_experiment(&experiment, serial) {
                Ok(records) => {
                    println!(
                        "wrote {} rows to {}",
                        records.len(),
                        experiment.csv_path.display()
                    );
                    0
                }
                Err(err) => {
                    eprintln!("run failed: {err}");
                    EXIT_RUNTIME
                }
            }
        }
        Command::Figure {
            fig_id,
            out,
            reps,
            seed,
        } => {
            if !FIGURE_IDS.contains(&fig_id.as_str()) {
                eprintln!(
                    "config error: unknown figure {fig_id:?} (expected one of {})",
                    FIGURE_IDS.join(", ")
                );
                return EXIT_CONFIG;
            }
            match figures::reproduce_figure(&fig_id, &out, reps, seed) {
                Ok(files) => {
                    for file in files {
                        println!("wrote {}", file.display());
                    }
                    0
                }
                Err(err) => {
                    eprintln!("figure failed: {err}");
                    EXIT_RUNTIME
                }
            }
        }
        Command::Selftest => match selftest::run() {
            Ok(()) => 0,
            Err(failures) => {
                eprintln!(
                    "selftest failed {} propert{}:",
                    failures.len(),
                    if failures.len() == 1 { "y" } else { "ies" }
                );
                for failure in failures {
                    eprintln!("  {failure}");
                }
                EXIT_RUNTIME
            }
        },
    }
}
