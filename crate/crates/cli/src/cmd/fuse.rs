// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use repdet_core::init;
use repdet_core::io::{read_weights_file, save_weights, WeightContainer};
use repdet_core::repvit::{backbone_forward, reparam_backbone, Backbone, Form};
use repdet_core::{DType, Scalar};
use serde_json::json;

use super::write_output;
use crate::status::{CmdResult, ExitStatus, Failure, Outcome};
use crate::{Context, Format};

#[derive(Args)]
pub struct FuseArgs {
    /// Train-form weight container.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Destination for the deploy-form container.
    #[arg(long = "out", value_name = "FILE")]
    output: PathBuf,
    /// Side length of the square probe image.
    #[arg(long, default_value_t = 64)]
    probe_size: usize,
    /// Largest acceptable probe deviation; above it nothing is written.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

struct Fused {
    deploy: WeightContainer,
    train_params: usize,
    deploy_params: usize,
    deviation: f64,
    input_channels: usize,
}

fn fuse<T: Scalar>(c: &WeightContainer, probe: usize, seed: u64) -> Result<Fused, Failure> {
    let train = Backbone::<T>::from_container(c)?;
    let deploy = reparam_backbone(&train)?;
    let ch = train.config.input_channels;
    let x = init::uniform::<T, _>(&mut init::rng(seed), [1, ch, probe, probe], -1.0, 1.0);
    let a = backbone_forward(&x, &train, Form::Train)?;
    let b = backbone_forward(&x, &deploy, Form::Deploy)?;
    Ok(Fused {
        deploy: deploy.to_container(),
        train_params: train.param_count(),
        deploy_params: deploy.param_count(),
        deviation: a.max_abs_diff(&b)?,
        input_channels: ch,
    })
}

pub fn run(a: &FuseArgs, ctx: &Context) -> CmdResult {
    if a.probe_size == 0 || !a.probe_size.is_multiple_of(32) {
        return Err(Failure::usage(format!("--probe-size must be a positive multiple of 32, got {}", a.probe_size)));
    }
    let c = read_weights_file(&a.input)?;
    if c.form == Form::Deploy {
        return Err(Failure::usage(format!("{} is already in deploy form", a.input.display())));
    }
    let seed = ctx.config.seed;
    let f = match c.tensors.first().map(|t| t.dtype) {
        Some(DType::F32) => fuse::<f32>(&c, a.probe_size, seed)?,
        Some(DType::F64) => fuse::<f64>(&c, a.probe_size, seed)?,
        None => return Err(Failure::usage(format!("{} holds no tensors", a.input.display()))),
    };

    let text = save_weights(&f.deploy)?;
    let mut out = String::new();
    match ctx.format {
        Format::Table => {
            let _ = writeln!(out, "train params   {}", f.train_params);
            let _ = writeln!(out, "deploy params  {}", f.deploy_params);
            let _ = writeln!(
                out,
                "max deviation  {:.3e}  (probe 1x{}x{p}x{p}, seed {seed})",
                f.deviation,
                f.input_channels,
                p = a.probe_size
            );
        }
        Format::Json => {
            let v = json!({
                "train_params": f.train_params,
                "deploy_params": f.deploy_params,
                "max_deviation": f.deviation,
                "probe": [1, f.input_channels, a.probe_size, a.probe_size],
                "seed": seed,
            });
            out = serde_json::to_string_pretty(&v).expect("json value") + "\n";
        }
    }
    if !(f.deviation <= a.tol) {
        return Ok(Outcome { stdout: out, status: ExitStatus::Validation });
    }
    write_output(&a.output, &text)?;
    Ok(Outcome::ok(out))
}
