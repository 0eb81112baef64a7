//! Command-line experiment harness.
//!
//! Exit codes: 0 on success, 1 for configuration/validation problems,
//! 2 for runtime or numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use repressilator::config::ExperimentConfig;
use repressilator::error::{Error, Result};
use repressilator::experiment::{
    cmd_benchmark, cmd_infer, cmd_likelihood_study, cmd_plot_data, cmd_simulate, CommandOptions,
    FigureKind,
};
use repressilator::io::RunManifest;

/// Environment variable overriding the root under which relative output
/// directories resolve.
const OUT_ROOT_ENV: &str = "REPRESSILATOR_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "repressilator",
    version,
    about = "Stochastic two-cell repressilator: simulation and Bayesian parameter inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Configuration file: an experiment config JSON, or a previous run's
    /// manifest.json to reproduce it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; overrides the configured one.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for the parallel sections (default: all cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    /// Output directory (default: the configured dir, or runs/<command>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overwrite existing output artifacts instead of refusing.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset: trajectory, observations, and metadata.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the configured inference method against an existing dataset.
    Infer {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding dataset.json and observations.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Cumulative log-likelihood comparison for a list of parameter vectors.
    LikelihoodStudy {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding dataset.json and observations.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Multi-method NMSE comparison over independent replications.
    Benchmark {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Assemble plot-ready figure data from a run directory.
    PlotData {
        #[command(flatten)]
        common: CommonArgs,
        /// Which figure to assemble: fig2, fig3, fig4, or fig5.
        #[arg(long, value_name = "KIND")]
        kind: String,
        /// Source run directory.
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
        /// Also render a PNG via python3/matplotlib.
        #[arg(long)]
        render: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, Option<u64>)> {
    let Some(path) = path else {
        return Ok((ExperimentConfig::default(), None));
    };
    let text = fs::read_to_string(path).map_err(|e| Error::MissingInput {
        what: "config file",
        path: format!("{}: {e}", path.display()),
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: "config file",
        why: format!("{}: {e}", path.display()),
    })?;
    if value.get("command").is_some() && value.get("config").is_some() {
        let manifest: RunManifest = serde_json::from_value(value).map_err(|e| Error::Parse {
            what: "manifest file",
            why: format!("{}: {e}", path.display()),
        })?;
        Ok((manifest.config, Some(manifest.seed)))
    } else {
        let config: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Parse {
                what: "config file",
                why: format!("{}: {e}", path.display()),
            })?;
        Ok((config, None))
    }
}

fn resolve_out_dir(explicit: Option<&Path>, config: &ExperimentConfig, command: &str) -> PathBuf {
    let base = explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(command));
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if base.is_relative() => PathBuf::from(root).join(base),
        _ => base,
    }
}

fn prepare(common: &CommonArgs, command: &str) -> Result<(ExperimentConfig, CommandOptions)> {
    if let Some(workers) = common.workers {
        if workers == 0 {
            return Err(Error::invalid("workers", "must be >= 1"));
        }
        // Ignore the error if a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let (mut config, manifest_seed) = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed.or(manifest_seed) {
        config.seeds.master_seed = seed;
    }
    config.validate()?;
    let options = CommandOptions {
        out_dir: resolve_out_dir(common.out.as_deref(), &config, command),
        overwrite: common.overwrite,
    };
    Ok((config, options))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let (config, options) = prepare(&common, "simulate")?;
            cmd_simulate(&config, &options)?;
            println!("wrote {}", options.out_dir.display());
        }
        Command::Infer { common, data } => {
            let (config, options) = prepare(&common, "infer")?;
            cmd_infer(&config, &data, &options)?;
            println!("wrote {}", options.out_dir.display());
        }
        Command::LikelihoodStudy { common, data } => {
            let (config, options) = prepare(&common, "likelihood-study")?;
            cmd_likelihood_study(&config, &data, &options)?;
            println!("wrote {}", options.out_dir.display());
        }
        Command::Benchmark { common } => {
            let (config, options) = prepare(&common, "benchmark")?;
            cmd_benchmark(&config, &options)?;
            println!("wrote {}", options.out_dir.display());
        }
        Command::PlotData {
            common,
            kind,
            dir,
            render,
        } => {
            let (_, options) = prepare(&common, "plot-data")?;
            let kind: FigureKind = kind.parse()?;
            cmd_plot_data(kind, &dir, &options, render)?;
            println!("wrote {}", options.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
