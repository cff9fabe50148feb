//! `bbs`: compress int8 model weights by bit-plane pruning and estimate
//! what bit-serial accelerators gain from the result.

mod commands;
mod manifest;

use bbs_core::compress::Strategy;
use bbs_core::sim::AcceleratorKind;
use clap::{Parser, Subcommand, ValueEnum};
use commands::{CompressArgs, PlanChoice, PresetLevel};
use std::path::PathBuf;

#[derive(Debug)]
pub enum AppError {
    /// Bad flags or flag combinations; exit code 2.
    Config(String),
    /// Unreadable or inconsistent inputs; exit code 3.
    Data(String),
}

impl From<bbs_core::Error> for AppError {
    fn from(e: bbs_core::Error) -> Self {
        match e {
            bbs_core::Error::Config(m) => AppError::Config(m),
            other => AppError::Data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bbs",
    version,
    about = "Bit-plane weight compression and accelerator cycle estimation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-layer value and bit sparsity report (CSV)
    Analyze {
        manifest: PathBuf,
        /// Weight group length used for the group-level sparsity column
        #[arg(long, default_value_t = 32)]
        group_size: usize,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prune bit planes and write container, plan, and quality report
    Compress {
        manifest: PathBuf,
        /// Preset: cons (gentle), mod (stronger), none (store raw)
        #[arg(long, value_enum)]
        level: Option<Level>,
        /// Rounding strategy for a custom level
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Planes to prune per group for a custom level (1..=6)
        #[arg(long)]
        n_pruned: Option<u8>,
        /// Fraction of channels exempted at full precision
        #[arg(long)]
        beta: Option<f64>,
        /// Channel-parallelism multiple exempt blocks are padded to
        #[arg(long, default_value_t = 32)]
        c_h: usize,
        #[arg(long, default_value_t = 32)]
        group_size: usize,
        /// Re-read the container and check it decodes bit-exactly
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate cycles on bit-serial accelerator models
    Simulate {
        manifest: PathBuf,
        /// Container from a compress run (required for bitvert)
        #[arg(long)]
        container: Option<PathBuf>,
        /// Comma-separated: stripes,pragmatic,bitlet,bitwave,bitvert
        #[arg(long, value_delimiter = ',', default_value = "stripes,pragmatic,bitlet,bitwave")]
        models: Vec<String>,
        /// Comma-separated PE column counts to sweep
        #[arg(long, value_delimiter = ',', default_value = "32")]
        pe_columns: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a deterministic synthetic model (manifest + blobs)
    GenSynthetic {
        /// Repeatable: gemm:m=16,k=128,n=64 or conv:cout=8,cin=4,kh=3,kw=3,out=49
        #[arg(long = "layer")]
        layers: Vec<String>,
        /// Gaussian weight spread before int8 rounding
        #[arg(long, default_value_t = 20.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Cons,
    Mod,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    /// Replace pruned bits with a rounded group average
    Avg,
    /// Shift the group by a searched constant before snapping
    Zp,
}

fn compress_plan(
    level: Option<Level>,
    strategy: Option<StrategyArg>,
    n_pruned: Option<u8>,
) -> Result<PlanChoice, AppError> {
    match (level, strategy, n_pruned) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(AppError::Config(
            "--level already fixes the strategy; drop --strategy/--n-pruned".into(),
        )),
        (Some(Level::None), None, None) => Ok(PlanChoice::None),
        (Some(Level::Cons), None, None) => Ok(PlanChoice::Preset(PresetLevel::Conservative)),
        (Some(Level::Mod), None, None) => Ok(PlanChoice::Preset(PresetLevel::Moderate)),
        (None, Some(s), Some(n)) => Ok(PlanChoice::Custom {
            strategy: match s {
                StrategyArg::Avg => Strategy::RoundedAvg,
                StrategyArg::Zp => Strategy::ZeroPoint,
            },
            n_pruned: n,
        }),
        (None, _, _) => Err(AppError::Config(
            "pick --level cons|mod|none, or --strategy with --n-pruned".into(),
        )),
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.cmd {
        Cmd::Analyze { manifest, group_size, out } => {
            commands::cmd_analyze(&manifest, group_size, out.as_deref())
        }
        Cmd::Compress {
            manifest,
            level,
            strategy,
            n_pruned,
            beta,
            c_h,
            group_size,
            verify,
            out,
        } => {
            let args = CompressArgs {
                plan: compress_plan(level, strategy, n_pruned)?,
                beta,
                c_h,
                group_size,
                verify,
            };
            commands::cmd_compress(&manifest, &args, &out)
        }
        Cmd::Simulate { manifest, container, models, pe_columns, out } => {
            let kinds: Vec<AcceleratorKind> = models
                .iter()
                .map(|m| m.parse().map_err(AppError::from))
                .collect::<Result<_, _>>()?;
            commands::cmd_simulate(&manifest, container.as_deref(), &kinds, &pe_columns, &out)
        }
        Cmd::GenSynthetic { layers, sigma, seed, name, out } => {
            commands::cmd_gen_synthetic(&layers, sigma, seed, &name, &out)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(AppError::Config(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(AppError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(3);
        }
    }
}
