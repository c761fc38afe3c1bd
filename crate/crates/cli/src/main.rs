//! `topodepth`: persistence diagrams, Betti curves, per-layer Ω trajectories
//! and θ-based model ranking from activation tensors.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use topodepth::grid::GridError;
use topodepth::metrics::MetricsError;
use topodepth::ttp::DEFAULT_DEGREE;
use topodepth::{ChannelPolicy, EtaPolicy, PoolMode};

use commands::{Common, RankInputs, UsageError};

#[derive(Parser)]
#[command(name = "topodepth", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// How channels of a H×W×C tensor become a scalar grid: volume, mean or select:<k>.
    #[arg(long, global = true, default_value = "volume")]
    channels: ChannelPolicy,

    /// Reduce both spatial axes by this factor before computing homology.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    downsample: Option<u32>,

    /// Downsampling mode: stride or max.
    #[arg(long, global = true, default_value = "stride")]
    pool: PoolMode,

    /// Min-max normalize every grid to [0, 1].
    #[arg(long, global = true)]
    normalize: bool,

    /// Size of the worker pool for per-image diagrams.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Omit the timestamp comment from SVG output.
    #[arg(long, global = true)]
    reproducible: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Persistence diagram of a tensor (one per image for a batch).
    Diagram {
        tensor: PathBuf,
    },
    /// Betti curves of a tensor over an evenly spaced threshold grid.
    Betti {
        tensor: PathBuf,
        /// Threshold grid as min:max:count, count at least 2.
        #[arg(long, value_parser = parse_grid)]
        grid: (f64, f64, usize),
    },
    /// Ω per layer for the model described by a manifest.
    Omega {
        manifest: PathBuf,
        /// Threshold: "auto" picks it on the first layer, or give a number.
        #[arg(long, default_value = "auto")]
        eta: EtaPolicy,
    },
    /// Rank models by θ, the slope of their Ω trajectory at mid-depth.
    Rank {
        /// Manifest files, or directories whose *.json files are manifests.
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        /// CSV `model_id,accuracy`; overrides accuracies stored in manifests.
        #[arg(long)]
        accuracy: Option<PathBuf>,
        /// CSV `model_id,leep` for a baseline correlation.
        #[arg(long)]
        leep: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        eta: EtaPolicy,
        /// Degree of the polynomial fitted to each Ω trajectory.
        #[arg(long, default_value_t = DEFAULT_DEGREE)]
        degree: usize,
    },
}

fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, count] = parts.as_slice() else {
        return Err("expected min:max:count".into());
    };
    let min: f64 = min.parse().map_err(|_| format!("bad min '{min}'"))?;
    let max: f64 = max.parse().map_err(|_| format!("bad max '{max}'"))?;
    let count: usize = count.parse().map_err(|_| format!("bad count '{count}'"))?;
    if count < 2 {
        return Err(format!("count must be at least 2, got {count}"));
    }
    if !(min.is_finite() && max.is_finite()) || max < min {
        return Err("need finite min ≤ max".into());
    }
    Ok((min, max, count))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let workers = match cli.workers {
        Some(n) => n as usize,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let common = Common {
        channels: cli.channels,
        downsample: cli.downsample.map(|f| f as usize),
        pool: cli.pool,
        normalize: cli.normalize,
        workers,
        out: cli.out,
        reproducible: cli.reproducible,
    };
    match cli.command {
        Command::Diagram { tensor } => commands::diagram(&tensor, &common),
        Command::Betti { tensor, grid } => commands::betti(&tensor, grid, &common),
        Command::Omega { manifest, eta } => commands::omega(&manifest, eta, &common),
        Command::Rank {
            manifests,
            accuracy,
            leep,
            eta,
            degree,
        } => commands::rank(
            RankInputs {
                manifests: &manifests,
                accuracy: accuracy.as_deref(),
                leep: leep.as_deref(),
                eta,
                degree,
            },
            &common,
        ),
    }
}

/// Layer errors box their source, so a metrics error can appear either way.
fn as_metrics<'a>(e: &'a (dyn std::error::Error + 'static)) -> Option<&'a MetricsError> {
    e.downcast_ref::<MetricsError>()
        .or_else(|| e.downcast_ref::<Box<MetricsError>>().map(|b| &**b))
}

/// 2 for bad input or IO, 1 for anything that failed during computation.
fn exit_code(err: &anyhow::Error) -> u8 {
    let input = err.chain().any(|e| {
        e.is::<GridError>()
            || e.is::<std::io::Error>()
            || e.is::<UsageError>()
            || e.is::<csv::Error>()
            || matches!(as_metrics(e), Some(MetricsError::Grid(_)))
    });
    if input {
        2
    } else {
        1
    }
}

fn report(err: &anyhow::Error) {
    // library errors repeat their source in their message; skip the repeats
    let mut parts: Vec<String> = Vec::new();
    for e in err.chain() {
        let text = e.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    eprintln!("error: {}", parts.join(": "));
    let no_threshold = err.chain().any(|e| {
        matches!(as_metrics(e), Some(MetricsError::NoValidThreshold { .. }))
    });
    if no_threshold {
        eprintln!("hint: pass a fixed threshold with --eta <value>");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            report(&err);
            ExitCode::from(exit_code(&err))
        }
    }
}
