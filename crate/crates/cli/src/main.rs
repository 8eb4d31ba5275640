//! `drfk` — command-line front end.
//!
//! Exit codes: 0 success, 2 usage/config/input problems, 3 numeric
//! failure (diverged training, non-finite values).

mod commands;
mod pairs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "drfk", version, about = "Deep Residual Fourier Transformation deblurring toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write synthetic sharp/blurry pairs and a manifest.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint plus a loss CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Loss log (default: <out>.loss.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Deblur one image.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fold DO-Conv layers before running.
        #[arg(long)]
        fold: bool,
        /// Sliding-window inference (any image size).
        #[arg(long)]
        tile: bool,
    },
    /// PSNR/SSIM of a model over a directory of pairs.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tile: bool,
    },
    /// Spectrum maps of an image and of one block's features.
    Analyze {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Block id such as `dec0.7` (default: last level-0 decoder block).
        #[arg(long)]
        block: Option<String>,
        /// Sharp reference; adds a spectrum difference map.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
    },
    /// Parameter and MAC counts of a configuration.
    Count {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        /// Also list every layer.
        #[arg(long)]
        layers: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = commands::init_threads() {
        eprintln!("drfk: {e}");
        return ExitCode::from(2);
    }
    let res = match cli.cmd {
        Cmd::GenData { config, out } => commands::gen_data(&config, &out),
        Cmd::Train {
            config,
            out,
            resume,
            log,
        } => commands::train(&config, &out, resume.as_deref(), log.as_deref()),
        Cmd::Infer {
            ckpt,
            input,
            out,
            fold,
            tile,
        } => commands::infer(&ckpt, &input, &out, fold, tile),
        Cmd::Eval {
            ckpt,
            pairs,
            out,
            tile,
        } => commands::eval(&ckpt, &pairs, &out, tile),
        Cmd::Analyze {
            ckpt,
            input,
            out,
            block,
            reference,
        } => commands::analyze(&ckpt, &input, &out, block.as_deref(), reference.as_deref()),
        Cmd::Count {
            config,
            height,
            width,
            layers,
        } => commands::count(config.as_deref(), height, width, layers),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drfk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
