// SPDX-License-Identifier: Apache-2.0

//! `repdet`: weight fusion, loss comparison, gradient checks, mask demos,
//! toy pretraining and detection evaluation.

mod args;
mod cmd;
mod status;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repdet_core::io::{load_config, ResolvedConfig};

use status::{CmdResult, Failure};

#[derive(Parser)]
#[command(name = "repdet", version, about = "Reparameterizable detection backbone toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct Global {
    /// Seed for every random draw; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Fold a train-form backbone container into deploy form.
    Fuse(cmd::fuse::FuseArgs),
    /// Print regression losses for one box pair.
    Loss(cmd::loss::LossArgs),
    /// Compare analytic and finite-difference loss gradients.
    Gradcheck(cmd::gradcheck::GradcheckArgs),
    /// Evaluate detections against ground truth.
    Eval(cmd::eval::EvalArgs),
    /// Draw a random patch mask.
    Mask(cmd::mask::MaskArgs),
    /// Run masked-reconstruction pretraining on built-in images.
    PretrainDemo(cmd::pretrain::PretrainArgs),
    /// Write a seeded train-form backbone container.
    Init(cmd::init::InitArgs),
}

/// Settings shared by all commands after merging defaults, the config
/// file and global flags.
pub struct Context {
    pub config: ResolvedConfig,
    pub format: Format,
}

impl Context {
    fn resolve(g: &Global) -> Result<Self, Failure> {
        let mut config = match &g.config {
            Some(path) => load_config(path)?,
            None => ResolvedConfig::default(),
        };
        if let Some(seed) = g.seed {
            config.seed = seed;
        }
        Ok(Self {
            config,
            format: g.format.unwrap_or(Format::Table),
        })
    }
}

fn run(cli: &Cli) -> CmdResult {
    let ctx = Context::resolve(&cli.global)?;
    match &cli.command {
        Command::Fuse(a) => cmd::fuse::run(a, &ctx),
        Command::Loss(a) => cmd::loss::run(a, &ctx),
        Command::Gradcheck(a) => cmd::gradcheck::run(a, &ctx),
        Command::Eval(a) => cmd::eval::run(a, &ctx),
        Command::Mask(a) => cmd::mask::run(a, &ctx),
        Command::PretrainDemo(a) => cmd::pretrain::run(a, &ctx),
        Command::Init(a) => cmd::init::run(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.stdout.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(status::ExitStatus::Io.code() as u8);
            }
            ExitCode::from(out.status.code() as u8)
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.status.code() as u8)
        }
    }
}
