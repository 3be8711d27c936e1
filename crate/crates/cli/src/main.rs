mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlgcn::{ErrorKind, MlgcnError};

use crate::config::{IngestFormat, JacobianChoice, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mlgcn", version, about = "Multi-laplacian graph convolutional networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert skeleton CSV sequences (or the synthetic task) into graph files and a manifest.
    Ingest {
        /// Directory with one sub-directory of sequences per class.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Train a model; writes metrics, checkpoint and test report.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Pooling mode, or `sweep` to train once per mode.
        #[arg(long)]
        pooling: Option<String>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Compare analytic gradients with finite differences on a small random graph.
    Gradcheck {
        #[arg(long, value_enum)]
        jacobian: Option<JacobianArg>,
        /// Exit with status 3 when the check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Test every menu laplacian of every graph for conditional positive definiteness.
    Certify {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Individual graph files, used instead of a dataset.
        graphs: Vec<PathBuf>,
    },
    /// Train one model per pooling mode, or per laplacian against the learned combination.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = SweepOver::Pooling)]
        over: SweepOver,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum JacobianArg {
    Exact,
    Collapsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepOver {
    Pooling,
    Laplacian,
}

fn exit_status(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Usage => "usage",
        ErrorKind::Data => "data",
        ErrorKind::Numerical => "numerical",
    }
}

/// Writes the machine-readable error record as the last stderr line.
fn report(err: &MlgcnError) -> ExitCode {
    let kind = err.kind();
    let status = exit_status(kind);
    let record = serde_json::json!({
        "error": { "kind": kind_name(kind), "exit_code": status, "message": err.to_string() }
    });
    eprintln!("{record}");
    ExitCode::from(status)
}

fn effective_config(cli: &Cli) -> mlgcn::Result<RunConfig> {
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        config.out.clone_from(out);
    }
    let mut apply_data = |args: &DataArgs| {
        if let Some(data) = &args.data {
            config.data = Some(data.clone());
        }
        if let Some(epochs) = args.epochs {
            config.train.epochs = epochs;
        }
        if let Some(lr) = args.lr {
            config.train.learning_rate = lr;
        }
    };
    match &cli.command {
        Command::Train { data, .. } | Command::Sweep { data, .. } => apply_data(data),
        Command::Eval { data: Some(d), .. } | Command::Certify { data: Some(d), .. } => config.data = Some(d.clone()),
        Command::Ingest { input, format } => {
            if let Some(input) = input {
                config.ingest.input = Some(input.clone());
            }
            if let Some(format) = format {
                config.ingest.format = match format {
                    FormatArg::Csv => IngestFormat::Csv,
                    FormatArg::Synthetic => IngestFormat::Synthetic,
                };
            }
        }
        Command::Gradcheck { jacobian: Some(j), .. } => {
            config.gradcheck.jacobian = match j {
                JacobianArg::Exact => JacobianChoice::Exact,
                JacobianArg::Collapsed => JacobianChoice::CollapsedNormalizer,
            };
        }
        _ => {}
    }
    Ok(config)
}

fn run(cli: &Cli) -> mlgcn::Result<ExitCode> {
    let config = effective_config(cli)?;
    match &cli.command {
        Command::Ingest { .. } => commands::ingest(&config),
        Command::Train { pooling, .. } => commands::train(&config, pooling.as_deref()),
        Command::Eval { checkpoint, split, .. } => commands::eval(&config, checkpoint, *split, cli.common.seed),
        Command::Gradcheck { strict, .. } => return commands::gradcheck(&config, *strict),
        Command::Certify { graphs, .. } => commands::certify(&config, graphs),
        Command::Sweep { over, .. } => commands::sweep(&config, *over),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return report(&MlgcnError::Usage(e.kind().to_string()));
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}
