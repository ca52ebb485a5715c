use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slrid_cli::{cmd_identify, cmd_returns, cmd_score, cmd_simulate, parse_list, CliError, Overrides, RunConfig};

/// Sparse plus low-rank identification of graphical AR models with latent
/// variables.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
/// failure.
#[derive(Parser)]
#[command(name = "slrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model and write trajectory.csv and model.json.
    Simulate(Common),
    /// Run the full identification and write the result bundle.
    Identify(Common),
    /// Convert a price panel to percent log returns.
    Returns(Common),
    /// Re-score the per-lambda results already in the output directory.
    Score(Common),
}

/// Comma-separated list parsed as a single flag value.
#[derive(Clone, Debug)]
struct FloatList(Vec<f64>);

fn float_list(s: &str) -> Result<FloatList, String> {
    parse_list(s).map(FloatList)
}

#[derive(Args)]
struct Common {
    /// TOML config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON, or `example-one` for the built-in 10-node model.
    #[arg(long)]
    model: Option<String>,
    /// Model to compare the estimates against.
    #[arg(long)]
    truth: Option<String>,
    /// Trajectory CSV (label column, then one column per series).
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Price CSV (date column, then one column per asset).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Number of simulated samples.
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
    /// Seed for simulation and Monte Carlo resampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated regularization weights in (0, 1).
    #[arg(long = "lambda-grid", value_parser = float_list)]
    lambda_grid: Option<FloatList>,
    /// Relative edge threshold on the normalized sparse spectrum.
    #[arg(long)]
    tau: Option<f64>,
    /// Relative eigenvalue cut for the latent dimension.
    #[arg(long)]
    eta: Option<f64>,
    /// Regularizer in the reweighting updates.
    #[arg(long)]
    eps: Option<f64>,
    /// Monte Carlo runs for the tolerance radii (at least 50).
    #[arg(long = "mc-runs")]
    mc_runs: Option<usize>,
    /// Comma-separated confidence levels, one per lag or a single one.
    #[arg(long, value_parser = float_list)]
    alphas: Option<FloatList>,
    /// Frequency grid points on [0, pi].
    #[arg(long = "grid-size")]
    grid_size: Option<usize>,
    /// AR order.
    #[arg(long)]
    p1: Option<usize>,
    /// Latent filter order.
    #[arg(long)]
    p2: Option<usize>,
}

impl Common {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Overrides {
            model: self.model,
            truth: self.truth,
            trajectory: self.trajectory,
            prices: self.prices,
            output: self.output,
            n_samples: self.n_samples,
            seed: self.seed,
            lambdas: self.lambda_grid.map(|l| l.0),
            tau: self.tau,
            eta: self.eta,
            eps: self.eps,
            mc_runs: self.mc_runs,
            alphas: self.alphas.map(|l| l.0),
            grid_size: self.grid_size,
            p1: self.p1,
            p2: self.p2,
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.into_config()?;
            let y = cmd_simulate(&cfg)?;
            println!("wrote {} x {} samples to {}", y.len(), y.dim(), cfg.output.display());
        }
        Command::Identify(c) => {
            let cfg = c.into_config()?;
            let s = cmd_identify(&cfg)?;
            for row in &s.table {
                println!(
                    "lambda {:.4}  edges {:3}  l_hat {}  score {:.4}",
                    row.lambda,
                    row.edges.len(),
                    row.l_hat,
                    row.score
                );
            }
            println!("selected lambda {} with {} edges, l_hat {}", s.selected_lambda, s.edges.len(), s.l_hat);
        }
        Command::Returns(c) => {
            let cfg = c.into_config()?;
            let y = cmd_returns(&cfg)?;
            println!("wrote {} x {} returns to {}", y.len(), y.dim(), cfg.output.display());
        }
        Command::Score(c) => {
            let cfg = c.into_config()?;
            let s = cmd_score(&cfg)?;
            println!("selected lambda {}", s.selected_lambda);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
