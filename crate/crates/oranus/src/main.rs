//! Experiment front end: run or validate scenario files, train the
//! mixture-density estimator, and convert raw traces to the canonical
//! format.
//!
//! Exit codes: 0 ok, 1 configuration error, 2 runtime error.

use clap::{Parser, Subcommand};
use oranus::estimator::{mdn_train, MdnHyperparams, TrainSample};
use oranus::scenario::{run_experiment, Scenario, ScenarioError};
use oranus::trace_io::convert_raw_trace;
use serde::Deserialize;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "oranus", version, about = "Single-cell uRLLC orchestration studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its reports.
    Run {
        scenario: PathBuf,
        /// Output root; overrides ORANUS_OUT (default "./out").
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
    /// Train the mixture-density estimator on a JSON dataset.
    TrainMdn {
        dataset: PathBuf,
        out_model: PathBuf,
        /// Training epochs.
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        /// Mixture components per service.
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert a raw whitespace/semicolon trace to the canonical CSV.
    ConvertTrace { input: PathBuf, output: PathBuf },
}

/// Training dataset file: feature/label pairs plus the net's shape.
#[derive(Deserialize)]
struct MdnDataset {
    n_services: usize,
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
    samples: Vec<TrainSample>,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256, 64]
}

fn output_root(cli_out: Option<PathBuf>) -> PathBuf {
    cli_out
        .or_else(|| std::env::var_os("ORANUS_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Distinguishes "your input is wrong" (1) from "the run failed" (2).
fn config_error(err: &ScenarioError) -> bool {
    !matches!(err, ScenarioError::Run(_) | ScenarioError::Write(_))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { scenario, out } => {
            let scenario = Scenario::load(&scenario)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let root = output_root(out);
            let started = std::time::Instant::now();
            run_experiment(&scenario, &root).map_err(|e| {
                if config_error(&e) {
                    Failure::Config(e.to_string())
                } else {
                    Failure::Runtime(e.to_string())
                }
            })?;
            // Wall-clock goes to stderr, never into the reports, so outputs
            // stay byte-stable.
            eprintln!(
                "wrote {} in {:.2}s",
                scenario.output_dir(&root).display(),
                started.elapsed().as_secs_f64()
            );
            Ok(())
        }
        Command::Validate { scenario } => {
            let loaded = Scenario::load(&scenario)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let points = loaded
                .expand()
                .map_err(|e| Failure::Config(e.to_string()))?;
            println!("ok: {} ({} runs)", loaded.name, points.len());
            Ok(())
        }
        Command::TrainMdn { dataset, out_model, epochs, components, seed } => {
            let text = std::fs::read_to_string(&dataset)
                .map_err(|e| Failure::Config(format!("{}: {e}", dataset.display())))?;
            let data: MdnDataset = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", dataset.display())))?;
            if data.samples.is_empty() {
                return Err(Failure::Config("dataset has no samples".into()));
            }
            let input_width = data.samples[0].features.len();
            let hp = MdnHyperparams {
                epochs,
                k: components,
                seed,
                ..MdnHyperparams::default()
            };
            let model = mdn_train(&data.samples, input_width, &data.hidden, data.n_services, &hp)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            std::fs::write(&out_model, model.save_to_string())
                .map_err(|e| Failure::Runtime(format!("{}: {e}", out_model.display())))?;
            eprintln!("wrote {}", out_model.display());
            Ok(())
        }
        Command::ConvertTrace { input, output } => {
            let infile = std::fs::File::open(&input)
                .map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
            let outfile = std::fs::File::create(&output)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", output.display())))?;
            convert_raw_trace(BufReader::new(infile), &mut BufWriter::new(outfile))
                .map_err(|e| Failure::Config(e.to_string()))?;
            eprintln!("wrote {}", output.display());
            Ok(())
        }
    }
}
