//! `murphy`: score, decompose and compare point predictors stored in a CSV file.

mod commands;
mod grammar;
mod reproduce;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use murphy_core::Recalibration;

use crate::grammar::{LossSpec, TolSpec};

const LOSS_HELP: &str = "Loss, repeatable. Forms: `squared`; `tweedie:<p>` (Tweedie power p, \
any real); `atoms:<t1>=<m1>,<t2>=<m2>,...` (mixture of elementary scores with point masses m_i \
at t_i); `ecdf:<column>` (mixing measure H = empirical CDF of a CSV column); `linear:<c>` \
(H(t) = c t, half the squared loss times c). Numbers use Rust's f64 syntax and are parsed exactly";

#[derive(Parser)]
#[command(name = "murphy", version, about = "Evaluate mean predictors with Bregman losses, Murphy's decomposition and Lorenz curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average loss per predictor and loss, with a ranking per loss.
    Score {
        #[command(flatten)]
        data: DataArgs,
        /// Also weight each loss by the predictor's own CDF value F_X(x).
        #[arg(long)]
        weighted: bool,
    },
    /// Murphy's decomposition, ABC/ABC²/Gini and curve exports.
    Decompose {
        #[command(flatten)]
        data: DataArgs,
        /// Estimator of E[Y|X]: pav, bins:<k>, levels or none.
        #[arg(long, default_value = "pav")]
        recalibrate: Recalibration,
    },
    /// Pairwise Lorenz, Murphy, second/third-degree and class verdicts.
    Dominance {
        #[command(flatten)]
        data: DataArgs,
        /// Recalibrate predictors before the calibrated-only analyses
        /// (pav, bins:<k>, levels); without it they are skipped.
        #[arg(long)]
        recalibrate: Option<Recalibration>,
        /// Treat the predictors as already mean-calibrated.
        #[arg(long, conflicts_with = "recalibrate")]
        assume_calibrated: bool,
        /// Tweedie powers for the class checks; defaults to the Tweedie
        /// losses given, else -2,-1,-0.5,0,0.5,1,1.5,2,3.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        powers: Vec<f64>,
    },
    /// Recompute one of the worked examples and compare with its oracles.
    Reproduce {
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
    /// Write the simulated data of one of the worked examples as CSV.
    Generate {
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    response: String,
    /// Comma-separated predictor column names.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    predictors: Vec<String>,
    #[arg(long = "loss", default_value = "squared", help = LOSS_HELP)]
    losses: Vec<LossSpec>,
    /// Points per exported curve and per banded comparison grid.
    #[arg(long, default_value_t = 201, value_parser = clap::value_parser!(usize))]
    grid: usize,
    /// Sign tolerance for curve comparisons: default, abs:<t> or band:<z>.
    #[arg(long, default_value = "default")]
    tol: TolSpec,
    /// Directory for report.json and curve files; the report goes to
    /// stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonteCarloArgs {
    /// Example number, 1 to 7.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
    example: u8,
    #[arg(long)]
    seed: u64,
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    /// Points per analytic curve.
    #[arg(long, default_value_t = 201)]
    grid: usize,
    /// Output directory (reproduce) or CSV file (generate).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Score { data, weighted } => commands::score(&data.into(), weighted).map(|_| true),
        Command::Decompose { data, recalibrate } => commands::decompose(&data.into(), recalibrate).map(|_| true),
        Command::Dominance { data, recalibrate, assume_calibrated, powers } => {
            let mode = match (recalibrate, assume_calibrated) {
                (_, true) => commands::CalibrationMode::Assume,
                (Some(Recalibration::Identity) | None, false) => commands::CalibrationMode::Skip,
                (Some(m), false) => commands::CalibrationMode::Recalibrate(m),
            };
            commands::dominance(&data.into(), mode, &powers).map(|_| true)
        }
        Command::Reproduce { mc } => reproduce::reproduce(&mc.into()),
        Command::Generate { mc } => reproduce::generate(&mc.into()).map(|_| true),
    }
}

impl From<DataArgs> for commands::RunConfig {
    fn from(a: DataArgs) -> Self {
        commands::RunConfig {
            input: a.input,
            response: a.response,
            predictors: a.predictors,
            losses: a.losses,
            grid: a.grid,
            tol: a.tol,
            out: a.out,
        }
    }
}

impl From<MonteCarloArgs> for reproduce::ExampleConfig {
    fn from(a: MonteCarloArgs) -> Self {
        reproduce::ExampleConfig { example: a.example, seed: a.seed, n: a.n, grid: a.grid, out: a.out }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
