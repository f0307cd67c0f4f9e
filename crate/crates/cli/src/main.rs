use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgpcl::surrogate::McmcSettings;
use dgpcl::tricands::DEFAULT_ALPHA;
use dgpcl::SurrogateKind;
use dgpcl_cli::{
    candidates_for, describe, emit, load_config, predict, prepare, read_matrix, read_rows, run_all, static_all,
    summarize, write_predictions, write_summary, CliError, Outcome, PredictOptions, RunOptions, TricandsOptions,
};

/// Sequential contour location with deep Gaussian process surrogates.
#[derive(Parser)]
#[command(name = "dgpcl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-pool width (else DGPCL_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write zero timings so the output is reproducible byte for byte.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sequential design, one row per repetition and iteration.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Directory for per-repetition checkpoints; existing ones are resumed.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// One Latin hypercube of the full budget per repetition.
    Static {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Triangulation candidates for a design CSV.
    Tricands {
        design: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        n_max: Option<usize>,
        /// The last column is the response (used for sub-sampling).
        #[arg(long)]
        response: bool,
        /// Limit state used to rank design points when sub-sampling.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also dump simplices (vertex indices) to this file.
        #[arg(long)]
        simplices: Option<PathBuf>,
    },
    /// Fit once and print predictive mean and standard deviation.
    Predict {
        /// Design CSV: inputs then response.
        design: PathBuf,
        /// Prediction locations.
        points: PathBuf,
        #[arg(long, default_value = "dgp-ess")]
        surrogate: SurrogateKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 8_000)]
        burn: usize,
        #[arg(long, default_value_t = 4)]
        thin: usize,
    },
    /// Per-iteration medians over repetitions of a result CSV.
    Summary { results: PathBuf },
}

fn finish(outcome: Outcome, out: Option<&std::path::Path>) -> Result<(), CliError> {
    emit(&outcome.rows, out)?;
    match outcome.failure {
        Some(f) => Err(CliError::Runtime(f)),
        None => Ok(()),
    }
}

fn experiment(
    exp: &ExperimentArgs,
    checkpoint_dir: Option<PathBuf>,
) -> Result<(dgpcl::Experiment, RunOptions), CliError> {
    let opts = RunOptions {
        seed: exp.seed,
        threads: exp.threads,
        no_timings: exp.no_timings,
        checkpoint_dir,
    };
    let e = prepare(load_config(&exp.config)?, &opts)?;
    log::info!("{}", describe(&e));
    Ok((e, opts))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { exp, checkpoint_dir } => {
            let (e, opts) = experiment(&exp, checkpoint_dir)?;
            finish(run_all(&e, &opts)?, exp.out.as_deref())
        }
        Command::Static { exp } => {
            let (e, opts) = experiment(&exp, None)?;
            finish(static_all(&e, &opts)?, exp.out.as_deref())
        }
        Command::Tricands {
            design,
            alpha,
            n_max,
            response,
            threshold,
            seed,
            simplices,
        } => {
            let x = read_matrix(fs::File::open(&design)?)?;
            let opts = TricandsOptions {
                alpha,
                n_max,
                response,
                threshold,
                seed,
            };
            let (tri, cands) = candidates_for(&x, &opts)?;
            if let Some(path) = simplices {
                tri.write_simplices_csv(io::BufWriter::new(fs::File::create(path)?))?;
            }
            let mut out = io::stdout().lock();
            cands.write_csv(&mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Predict {
            design,
            points,
            surrogate,
            seed,
            iterations,
            burn,
            thin,
        } => {
            let d = read_matrix(fs::File::open(&design)?)?;
            let p = read_matrix(fs::File::open(&points)?)?;
            let mcmc = McmcSettings {
                initial: iterations,
                burn,
                thin,
                ..McmcSettings::default()
            };
            let (mu, sigma) = predict(&d, &p, &PredictOptions { surrogate, mcmc, seed })?;
            write_predictions(&mu, &sigma, io::stdout().lock())
        }
        Command::Summary { results } => {
            let rows = read_rows(fs::File::open(&results)?)?;
            write_summary(&summarize(&rows), io::stdout().lock())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dgpcl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
