use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use laplace_gmrf::cli::{self, RunConfig};
use laplace_gmrf::engine::{EngineSettings, Strategy};
use laplace_gmrf::par::Execution;
use laplace_gmrf::Error;

#[derive(Parser)]
#[command(name = "laplace-gmrf", version, about = "Approximate Bayesian inference for latent Gaussian Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write summary.csv, marginals.json and diagnostics.json
    Run(RunArgs),
    /// Check a model document without data
    Validate {
        #[arg(long)]
        model: PathBuf,
        /// Override a graph path from the model document
        #[arg(long = "graph", value_name = "NAME=PATH", value_parser = parse_graph)]
        graphs: Vec<(String, PathBuf)>,
    },
    /// Brute-force quadrature of a tiny model, written to oracle.json
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Gaussian)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = EngineSettings::default().grid_step)]
    grid_step: f64,
    #[arg(long, default_value_t = EngineSettings::default().grid_threshold)]
    grid_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    verbose: bool,
    /// Evaluate on one thread
    #[arg(long)]
    serial: bool,
    /// Override a graph path from the model document
    #[arg(long = "graph", value_name = "NAME=PATH", value_parser = parse_graph)]
    graphs: Vec<(String, PathBuf)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Gaussian,
    Laplace,
}

fn parse_graph(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    Ok((name.to_string(), PathBuf::from(path)))
}

impl RunArgs {
    fn config(self) -> RunConfig {
        let mut c = RunConfig::new(self.model, self.data, self.out);
        c.graph_files = self.graphs.into_iter().collect();
        c.strategy = match self.strategy {
            StrategyArg::Gaussian => Strategy::Gaussian,
            StrategyArg::Laplace => Strategy::Laplace,
        };
        c.grid_step = self.grid_step;
        c.grid_threshold = self.grid_threshold;
        c.seed = self.seed;
        c.verbose = self.verbose;
        c.execution = if self.serial {
            Execution::Serial
        } else {
            Execution::Parallel
        };
        c
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let verbose = matches!(&args.command, Command::Run(a) | Command::Oracle(a) if a.verbose);
    env_logger::Builder::new()
        .filter_level(if verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();

    let outcome = match args.command {
        Command::Run(a) => cli::run(&a.config()).map(|_| None),
        Command::Oracle(a) => cli::run_oracle(&a.config()).map(|_| None),
        Command::Validate { model, graphs } => {
            cli::validate_model(&model, &graphs.into_iter().collect::<BTreeMap<_, _>>()).map(Some)
        }
    };
    match outcome {
        Ok(text) => {
            if let Some(text) = text {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}

fn error_json(e: &Error) -> String {
    let mut v = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::SchemaError { path, .. } = e {
        v["path"] = path.clone().into();
    }
    v.to_string()
}
