// SPDX-License-Identifier: Apache-2.0

use clap::Args;
use repdet_core::spark::generate_mask;

use crate::status::{CmdResult, Failure, Outcome};
use crate::{Context, Format};

#[derive(Args)]
pub struct MaskArgs {
    /// Image height in pixels.
    #[arg(long)]
    h: usize,
    /// Image width in pixels.
    #[arg(long)]
    w: usize,
    /// Patch side length.
    #[arg(long)]
    patch: Option<usize>,
    /// Probability that a patch is masked.
    #[arg(long)]
    ratio: Option<f64>,
    /// Same as --format json.
    #[arg(long)]
    json: bool,
}

pub fn run(a: &MaskArgs, ctx: &Context) -> CmdResult {
    let patch = a.patch.unwrap_or(ctx.config.patch_size);
    let ratio = a.ratio.unwrap_or(ctx.config.mask_ratio);
    let m = generate_mask(a.h, a.w, patch, ratio, ctx.config.seed).map_err(|e| Failure::usage(e.to_string()))?;
    let total = m.rows() * m.cols();
    if a.json || ctx.format == Format::Json {
        return Ok(Outcome::ok(serde_json::to_string_pretty(&m).expect("mask serializes") + "\n"));
    }
    let masked = m.masked_count();
    Ok(Outcome::ok(format!(
        "{}masked fraction {:.4} ({masked}/{total})\n",
        m.to_bitmap(),
        masked as f64 / total as f64
    )))
}
