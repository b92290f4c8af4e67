mod commands;
mod manifest;

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "skinfield", version, about = "Learn pose-dependent skinning weight fields from multi-view images")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Configuration file (scene spec for `synth`, training config otherwise).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic arm dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for heat-diffusion initial weights.
    InitSkin {
        #[arg(long)]
        data: PathBuf,
        /// `.bin` or `.json` weights file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the training schedule.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the short desk-scale iteration counts.
        #[arg(long)]
        desk: bool,
        /// Stages to run, e.g. `1..4`, `2..3` or `4`.
        #[arg(long, value_parser = parse_stages, default_value = "1..4")]
        stage: RangeInclusive<u8>,
        /// Initial weights instead of heat diffusion.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Checkpoint to continue from (default: the previous stage's
        /// checkpoint in `--out` when the range starts after stage 1).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Write a loss row every n iterations.
        #[arg(long, default_value_t = 10)]
        log_every: u64,
    },
    /// Pose the template with a trained field.
    Pose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Pose file with a `frames` list.
        #[arg(long)]
        poses: PathBuf,
        /// An `.obj` path for a single pose, otherwise a directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted and reference meshes with matching file names.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// JSON report (default: stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
    /// Run the finite-difference gradient suites.
    Gradcheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_stages(s: &str) -> Result<RangeInclusive<u8>, String> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let parse = |x: &str| x.trim().parse::<u8>().map_err(|_| format!("bad stage `{x}`"));
    let (a, b) = (parse(a)?, parse(b)?);
    if !(1..=4).contains(&a) || !(a..=4).contains(&b) {
        return Err(format!("stage range must lie in 1..4, got {s}"));
    }
    Ok(a..=b)
}

/// 2 usage or I/O, 3 invalid data, 4 numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|c| c.downcast_ref::<skinfield::Error>())
        .map_or(2, |e| {
            if e.is_numerical() {
                4
            } else if e.is_validation() {
                3
            } else {
                2
            }
        })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
