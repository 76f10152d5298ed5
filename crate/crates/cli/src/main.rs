//! `appselect`: train, evaluate and analyse target-app rankers from the
//! command line.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use appselect::corpus::SplitStrategy;
use appselect::eval::Method;
use clap::{Args, Parser, Subcommand};

use commands::{AnalyzeArgs, CompareArgs, EvalSource, SplitArgs, TrainArgs, UsageError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "appselect", version, about = "Rank the apps on a device for a free-text query")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "APPSELECT_OUT", default_value = "appselect-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a query log and print its statistics.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Also write stats.csv and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic query log and matching word vectors.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Write train/valid/test partitions of a query log.
    Split {
        #[arg(long)]
        input: PathBuf,
        /// `query` or `task`.
        #[arg(long, default_value = "query")]
        strategy: SplitStrategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        repetition: u32,
        /// Train, validation and test fractions, e.g. `0.7,0.1,0.2`.
        #[arg(long, value_parser = parse_ratios)]
        ratios: Option<(f64, f64, f64)>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train one method and save it.
    Train {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Run config; its [experiment.params] section sets hyperparameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Word vectors, one `token v1 v2 ...` line each.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Rank queries read from standard input, one per line.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Score one method, saved model or ranking file on a test set.
    Eval {
        #[arg(long)]
        test: PathBuf,
        /// Rankings as `query_id,app,score` CSV.
        #[arg(long, conflicts_with_all = ["model", "method"])]
        run: Option<PathBuf>,
        #[arg(long, conflicts_with = "method")]
        model: Option<PathBuf>,
        /// Train this method on --train (and --valid) first.
        #[arg(long, requires = "train")]
        method: Option<Method>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run every method over repeated splits and write the comparison.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to one split strategy.
        #[arg(long)]
        strategy: Option<SplitStrategy>,
        /// Restrict to these methods; repeatable.
        #[arg(long)]
        method: Vec<Method>,
        #[arg(long)]
        svg: bool,
        #[arg(long, env = "APPSELECT_OUT")]
        out: Option<PathBuf>,
    },
    /// Query-log statistics, overlap and per-task difficulty.
    Analyze {
        /// Query log; defaults to the config's dataset or synthetic data.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
        /// Add one row per app to the length and overlap tables.
        #[arg(long)]
        per_app: bool,
        /// Compare queries only within their own task.
        #[arg(long)]
        task_scope: bool,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// per_query.csv from `compare`, for the task-difficulty table.
        #[arg(long, requires = "method")]
        per_query: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long, default_value = "query")]
        strategy: SplitStrategy,
        #[command(flatten)]
        out: OutDir,
    },
    /// Dump a neural model's app embeddings and their 2-D projection.
    ExportEmb {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        out: OutDir,
    },
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated fractions".into()),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Ingest { input, out } => commands::ingest(&input, out.as_deref()),
        Command::Synth { config, seed, out } => commands::synth(config.as_deref(), seed, &out.out),
        Command::Split { input, strategy, seed, repetition, ratios, out } => commands::split_cmd(SplitArgs {
            input: &input,
            strategy,
            seed,
            repetition,
            ratios,
            out: &out.out,
        }),
        Command::Train { method, train, valid, config, seed, embeddings, out } => commands::train(TrainArgs {
            method,
            train: &train,
            valid: valid.as_deref(),
            config: config.as_deref(),
            seed,
            embeddings: embeddings.as_deref(),
            out: &out.out,
        }),
        Command::Rank { model, k } => {
            commands::rank(&model, k, std::io::stdin().lock(), std::io::BufWriter::new(std::io::stdout().lock()))
        }
        Command::Eval { test, run, model, method, train, valid, config, seed, out } => {
            let source = match (&run, &model, method) {
                (Some(r), None, None) => EvalSource::Run(r),
                (None, Some(m), None) => EvalSource::Model(m),
                (None, None, Some(method)) => EvalSource::Method {
                    method,
                    train: train.as_deref().expect("clap enforces --train with --method"),
                    valid: valid.as_deref(),
                },
                _ => return Err(UsageError("eval needs exactly one of --run, --model or --method".into()).into()),
            };
            commands::eval(&test, source, config.as_deref(), seed, &out.out)
        }
        Command::Compare { config, seed, strategy, method, svg, out } => commands::compare(CompareArgs {
            config: config.as_deref(),
            seed,
            strategy,
            methods: &method,
            svg,
            out: out.as_deref(),
        }),
        Command::Analyze { input, config, svg, per_app, task_scope, top_n, per_query, method, strategy, out } => {
            commands::analyze(AnalyzeArgs {
                input: input.as_deref(),
                config: config.as_deref(),
                out: &out.out,
                svg,
                per_app,
                task_scope,
                top_n,
                per_query: per_query.as_deref(),
                method,
                strategy,
            })
        }
        Command::ExportEmb { model, svg, out } => commands::export_embeddings(&model, &out.out, svg),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<appselect::Error>() {
        Some(appselect::Error::Divergence { .. }) => EXIT_DIVERGED,
        Some(appselect::Error::InvalidConfig(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// A closed downstream pipe (`appselect rank ... | head`) is not a failure.
fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
