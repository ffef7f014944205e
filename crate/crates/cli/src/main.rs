use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod config;
mod data;
mod evaluate;
mod report;
mod tools;
mod train;

use config::{ConfigError, Overrides, RunConfig};

/// Meta-learning for time series regression.
#[derive(Debug, Parser)]
#[command(name = "tsmeta", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Run configuration (TOML).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` and the TSMETA_OUTPUT_DIR variable.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Number of independently trained and evaluated models.
    #[arg(long)]
    runs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(
            &self.config,
            &Overrides {
                seed: self.seed,
                output_dir: self.output_dir.clone(),
                runs: self.runs,
                gradient_steps: None,
            },
        )
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read CSVs, split, standardize, and write window and meta-window sets.
    Preprocess(ConfigArgs),
    /// Train the configured model once per run seed.
    Train {
        #[command(flatten)]
        args: ConfigArgs,
        /// Continue from the last saved trainer state.
        #[arg(long)]
        resume: bool,
        /// Stop (with state saved) after this many meta-epochs in this
        /// invocation.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Meta-test trained models and write result tables.
    Evaluate {
        #[command(flatten)]
        args: ConfigArgs,
        /// Gradient steps at test time; several values give one row each.
        #[arg(long, value_delimiter = ',')]
        gradient_steps: Vec<usize>,
        /// Also sweep these gradient steps into ablation.csv.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
        /// Dump per-window absolute errors.
        #[arg(long)]
        errors: bool,
    },
    /// Merge result files into a ranked comparison table.
    Report {
        /// results.csv files written by `evaluate`.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Directory for merged.csv and ranked.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients and the one-step kernel oracle.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances for the kernel-oracle comparison.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Write the synthetic task family as CSVs plus a starter config.
    Synth(tools::SynthArgs),
}

/// Raised when a verification command finds a mismatch (exit code 3).
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 1;
        }
        if cause.is::<NumericalFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<tsmeta::Error>() {
            return match e.kind() {
                tsmeta::ErrorKind::Config => 1,
                tsmeta::ErrorKind::Data => 2,
                tsmeta::ErrorKind::Numerical => 3,
            };
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Preprocess(a) => data::preprocess(&a.load()?),
        Command::Train {
            args,
            resume,
            stop_after,
        } => train::train(&args.load()?, resume, stop_after),
        Command::Evaluate {
            args,
            gradient_steps,
            sweep,
            errors,
        } => evaluate::evaluate(&args.load()?, &gradient_steps, &sweep, errors),
        Command::Report { results, out } => report::report(&results, out.as_deref()),
        Command::Gradcheck { seed, instances } => tools::gradcheck(seed, instances),
        Command::Synth(a) => tools::synth(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
