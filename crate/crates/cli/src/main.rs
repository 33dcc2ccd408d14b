use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcmt_cli::commands::{run_command, Command, Inputs};
use mcmt_cli::config::{self, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "mcmt", version, about = "Multi-camera vehicle tracking pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// TOML config file; defaults to $MCMT_CONFIG when set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides io.output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Tracking threads, 0 for one per camera (overrides run.workers).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Config override `section.key=value`; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Default)]
struct InArgs {
    /// Input directory.
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scenario with ground truth and detections.
    Simulate,
    /// Suppress overlapping detections in every camera.
    Nms(InArgs),
    /// Suppression and single-camera tracking.
    Track(InArgs),
    /// Link per-camera tracklets into global identities.
    Mcmt(InArgs),
    /// Score predicted tracks against ground truth.
    Eval {
        /// Prediction track file or directory.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Ground-truth track file or scenario directory.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Train the embedding head on synthetic features.
    TrainHead,
    /// Noise sweep and training summary with chart data.
    Report(InArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = cli.global;
    let path = g.config.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut overrides = g.overrides;
    if let Some(seed) = g.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    if let Some(w) = g.workers {
        overrides.push(format!("run.workers={w}"));
    }
    if let Some(out) = &g.out {
        overrides.push(format!("io.output={:?}", out.display().to_string()));
    }
    let cfg = match config::load(path.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let (command, inputs) = match cli.command {
        Cmd::Simulate => (Command::Simulate, Inputs::default()),
        Cmd::Nms(a) => (Command::Nms, Inputs { input: a.input, ..Inputs::default() }),
        Cmd::Track(a) => (Command::Track, Inputs { input: a.input, ..Inputs::default() }),
        Cmd::Mcmt(a) => (Command::Mcmt, Inputs { input: a.input, ..Inputs::default() }),
        Cmd::Eval { pred, gt } => (
            Command::Eval,
            Inputs {
                predictions: pred,
                ground_truth: gt,
                ..Inputs::default()
            },
        ),
        Cmd::TrainHead => (Command::TrainHead, Inputs::default()),
        Cmd::Report(a) => (Command::Report, Inputs { input: a.input, ..Inputs::default() }),
    };
    match run_command(command, &cfg, &inputs) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
