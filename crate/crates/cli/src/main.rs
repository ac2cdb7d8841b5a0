//! `tspfcn`: generate data, train, predict, decode, evaluate and benchmark.
//!
//! Exit codes: 0 ok, 1 usage or configuration, 2 data, 3 numeric guard.

mod args;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tspfcn::Execution;

use args::{Algo, Arch, Counts, PredictorArgs, RenderArgs};
use manifest::{now_ms, RunManifest};

/// Data directory root used when `--data`/`--out` name a relative dataset.
pub const DATA_DIR_ENV: &str = "TSPFCN_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "tspfcn", version, about = "Image-based TSP solving with a fully convolutional network")]
struct Cli {
    /// Base seed for every random choice
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 1 runs everything sequentially
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset of DP-solved instances with images and labels
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Render inputs (and labels, where tours are known) for an instance file
    Render {
        #[arg(long)]
        instances: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Solve every instance in a file with one solver
    Solve {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, value_enum, default_value = "dp")]
        algo: Algo,
    },
    /// Train a network on a generated dataset
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Held-out dataset for the test curve
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        arch: Arch,
        /// Continue from a checkpoint instead of a fresh init
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, default_value_t = 3000)]
        iterations: usize,
        #[arg(long, default_value_t = 3000)]
        chunk_size: usize,
        #[arg(long, default_value_t = 50)]
        snapshot_every: usize,
        #[arg(long, default_value_t = 64)]
        eval_samples: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        score_channels: Option<usize>,
        /// Training sample whose prediction is saved at each snapshot
        #[arg(long, default_value_t = 0)]
        probe: usize,
        #[arg(long)]
        no_snapshots: bool,
    },
    /// Predict class masks for a dataset
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        predictor: PredictorArgs,
    },
    /// Decode class masks into tours
    Decode {
        /// Directory of `{id}.png` masks
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        /// Departure cities; defaults to every city
        #[arg(long)]
        m: Option<usize>,
        /// Rotate tours to start at this city
        #[arg(long)]
        departure: Option<usize>,
    },
    /// Score the full pipeline against exact optima
    Eval {
        /// Dataset to score; without it, `--n`/`--count` instances are generated
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, required_unless_present = "data")]
        n: Option<usize>,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        m: Option<usize>,
        /// Score instances whose cities share a pixel too
        #[arg(long)]
        keep_collisions: bool,
        #[command(flatten)]
        predictor: PredictorArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Time every solver per city count
    Bench {
        /// City counts, e.g. 4..12 or 8,10
        #[arg(long, default_value = "4..12", value_parser = args::parse_counts)]
        n: Counts,
        #[arg(long, value_enum, value_delimiter = ',')]
        algos: Vec<Algo>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 3)]
        warmups: usize,
        #[arg(long, default_value_t = 5)]
        timing_instances: usize,
        /// City counts at which GA/ACO e0 is measured
        #[arg(long, default_value = "10", value_parser = args::parse_counts)]
        quality_n: Counts,
        #[arg(long, default_value_t = 480)]
        quality_instances: usize,
        #[command(flatten)]
        predictor: PredictorArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Parameter sweeps over the pipeline
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
}

#[derive(Debug, Subcommand)]
enum SweepKind {
    /// Pipeline accuracy across city counts
    Generalization {
        #[arg(long, default_value = "4..12", value_parser = args::parse_counts)]
        n: Counts,
        #[arg(long, default_value_t = 100)]
        per_n: usize,
        #[arg(long)]
        keep_collisions: bool,
        #[command(flatten)]
        predictor: PredictorArgs,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Decode accuracy and cost against the number of departure cities
    Departures {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Fraction of path pixels flipped in each clean mask
        #[arg(long, default_value_t = 0.01)]
        flip: f64,
        #[arg(long, default_value = "1..10", value_parser = args::parse_counts)]
        m: Counts,
        #[arg(long, default_value_t = 5)]
        timing_reps: usize,
        #[command(flatten)]
        render: RenderArgs,
    },
}

/// A usage problem found after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Settings every command sees.
pub struct Ctx {
    pub seed: u64,
    pub exec: Execution,
    pub out: PathBuf,
}

/// What a command reports for its manifest.
#[derive(Default)]
pub struct Run {
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<tspfcn::Error>() {
            return match e {
                tspfcn::Error::Numeric(_) => 3,
                tspfcn::Error::Config(_) => 1,
                _ => 2,
            };
        }
        if cause.is::<Usage>() {
            return 1;
        }
    }
    2
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen { .. } => "gen",
        Command::Render { .. } => "render",
        Command::Solve { .. } => "solve",
        Command::Train { .. } => "train",
        Command::Predict { .. } => "predict",
        Command::Decode { .. } => "decode",
        Command::Eval { .. } => "eval",
        Command::Bench { .. } => "bench",
        Command::Sweep { kind: SweepKind::Generalization { .. } } => "sweep-generalization",
        Command::Sweep { kind: SweepKind::Departures { .. } } => "sweep-departures",
    }
}

fn default_out(cli: &Cli) -> anyhow::Result<PathBuf> {
    if let Some(o) = &cli.out {
        return Ok(o.clone());
    }
    if let Command::Gen { n, .. } = cli.command {
        let root = std::env::var_os(DATA_DIR_ENV)
            .ok_or_else(|| Usage(format!("gen needs --out or {DATA_DIR_ENV}")))?;
        return Ok(PathBuf::from(root).join(format!("n{n}")));
    }
    Ok(PathBuf::from("tspfcn-out").join(command_name(&cli.command)))
}

fn run(cli: Cli, argv: Vec<String>) -> anyhow::Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        exec: Execution::from_jobs(cli.jobs),
        out: default_out(&cli)?,
    };
    std::fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    let started = now_ms();
    let name = command_name(&cli.command);
    let result = commands::dispatch(cli.command, &ctx);
    let (run, error) = match &result {
        Ok(r) => (r, None),
        // refused before doing anything; `out` may even be an input
        Err(e) if e.is::<Usage>() => return result.map(|_| ()),
        Err(e) => (&Run::default(), Some(format!("{e:#}"))),
    };
    RunManifest {
        command: name.to_string(),
        args: argv,
        config: run.config.clone(),
        seed: cli.seed,
        jobs: cli.jobs,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        inputs: run.inputs.clone(),
        outputs: run.outputs.clone(),
        error,
    }
    .write(&ctx.out)?;
    result.map(|_| ())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if cli.jobs > 1 && std::env::var_os("RAYON_NUM_THREADS").is_none() {
        // still single-threaded here, and rayon reads this on first use
        std::env::set_var("RAYON_NUM_THREADS", cli.jobs.to_string());
    }
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
