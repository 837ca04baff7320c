// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use repdet_core::io::save_weights;
use repdet_core::repvit::{Backbone, BackboneConfig};

use super::write_output;
use crate::args::parse_four;
use crate::status::{CmdResult, Failure, Outcome};
use crate::Context;

#[derive(Clone, Copy, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Args)]
pub struct InitArgs {
    #[arg(long = "out", value_name = "FILE")]
    output: PathBuf,
    /// Channels of the four stages.
    #[arg(long, value_parser = parse_four, default_value = "8,8,16,16")]
    channels: [usize; 4],
    /// Blocks per stage.
    #[arg(long, value_parser = parse_four, default_value = "1,1,2,1")]
    depths: [usize; 4],
    #[arg(long, default_value_t = 2)]
    ffn_expansion: usize,
    #[arg(long, default_value_t = 3)]
    input_channels: usize,
    #[arg(long, value_enum, default_value = "f32")]
    dtype: Precision,
}

pub fn run(a: &InitArgs, ctx: &Context) -> CmdResult {
    let cfg = BackboneConfig {
        stage_channels: a.channels,
        stage_depths: a.depths,
        ffn_expansion: a.ffn_expansion,
        input_channels: a.input_channels,
        ..BackboneConfig::default()
    };
    let seed = ctx.config.seed;
    let (container, params) = match a.dtype {
        Precision::F32 => {
            let b = Backbone::<f32>::random(&cfg, seed).map_err(|e| Failure::usage(e.to_string()))?;
            (b.to_container(), b.param_count())
        }
        Precision::F64 => {
            let b = Backbone::<f64>::random(&cfg, seed).map_err(|e| Failure::usage(e.to_string()))?;
            (b.to_container(), b.param_count())
        }
    };
    write_output(&a.output, &save_weights(&container)?)?;
    Ok(Outcome::ok(format!(
        "wrote {} ({} tensors, {params} params, seed {seed})\n",
        a.output.display(),
        container.tensors.len()
    )))
}
