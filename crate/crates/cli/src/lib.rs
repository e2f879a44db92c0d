//! The `dfr` command line: argument and config-file handling plus one thin
//! binding per command.

mod commands;
mod config;
mod inputs;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::FileConfig;

/// Default output root when neither `--out` nor the environment variable is set.
pub const DEFAULT_OUT: &str = "out";
pub const OUT_ENV: &str = "DFR_OUT";

#[derive(Debug, Parser)]
#[command(name = "dfr", version, about = "Predictive degrees of freedom and Random-X risk estimation")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root for experiment and ingest trees.
    #[arg(long, global = true, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// df_F and df_R of one fitted procedure.
    Dof {
        #[command(flatten)]
        data: config::DataArgs,
        #[command(flatten)]
        proc: config::ProcArgs,
    },
    /// Training error, true risks (simulated data) and the Random-X risk estimators.
    Risk {
        #[command(flatten)]
        data: config::DataArgs,
        #[command(flatten)]
        proc: config::ProcArgs,
        /// Monte Carlo draws for the true ErrR and excess bias (simulated data only).
        #[arg(long)]
        truth_draws: Option<usize>,
    },
    /// Criterion sweep over nested least-squares models.
    Sweep {
        #[command(flatten)]
        data: config::DataArgs,
        #[command(flatten)]
        sweep: config::SweepArgs,
    },
    /// Gradient-descent interpolant started from simple regressions.
    Gd {
        #[command(flatten)]
        data: config::DataArgs,
        #[command(flatten)]
        gd: config::GdArgs,
    },
    /// Runs a registered scenario into <out>/<scenario>/.
    Experiment {
        /// Registered scenario name.
        name: Option<String>,
        #[command(flatten)]
        args: config::ExperimentArgs,
    },
    /// Imputes, transforms, splits and centres a raw CSV file.
    Ingest {
        #[command(flatten)]
        args: config::IngestArgs,
    },
}

/// Exit status of a failed command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use dfr_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NotPositiveDefinite(_) | E::SplineConditioning { .. } | E::Collinear(_) | E::InterpolationLeverage { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

/// Runs a parsed command, writing its report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Dof { data, proc } => commands::dof(&data.merge(file.data), &proc.merge(file.procedure), out),
        Command::Risk { data, proc, truth_draws } => commands::risk(
            &data.merge(file.data),
            &proc.merge(file.procedure),
            truth_draws.or(file.risk.truth_draws),
            out,
        ),
        Command::Sweep { data, sweep } => commands::sweep(&data.merge(file.data), &sweep.merge(file.sweep), out),
        Command::Gd { data, gd } => commands::gd(&data.merge(file.data), &gd.merge(file.gd), out),
        Command::Experiment { name, args } => {
            let (args, set) = args.merge(file.experiment);
            commands::experiment(name, &args, &set, &cli.out, out)
        }
        Command::Ingest { args } => commands::ingest(&args.merge(file.ingest), &cli.out, out),
    }
}
