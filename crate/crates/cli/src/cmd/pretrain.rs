// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use clap::Args;
use repdet_core::spark::{spark_pretrain_toy, synthetic_images};
use serde_json::json;

use crate::status::{CmdResult, ExitStatus, Failure, Outcome};
use crate::{Context, Format};

#[derive(Args)]
pub struct PretrainArgs {
    /// Optimisation steps.
    #[arg(long)]
    steps: Option<usize>,
}

pub fn run(a: &PretrainArgs, ctx: &Context) -> CmdResult {
    let steps = a.steps.unwrap_or(ctx.config.pretrain_steps);
    if steps == 0 {
        return Err(Failure::usage("--steps must be at least 1"));
    }
    let seed = ctx.config.seed;
    let run = spark_pretrain_toy(&synthetic_images(), steps, seed)?;
    let initial = run.trace[0];
    let stdout = match ctx.format {
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{:>5}  {:>10}", "step", "loss");
            for (t, l) in run.trace.iter().enumerate() {
                let _ = writeln!(s, "{t:>5}  {l:>10.6}");
            }
            let _ = writeln!(s, "{:>5}  {:>10.6}", "final", run.final_loss);
            let _ = writeln!(s, "ratio {:.4} (seed {seed}, {steps} steps)", run.ratio());
            s
        }
        Format::Json => {
            let v = json!({
                "seed": seed,
                "steps": steps,
                "trace": run.trace,
                "initial_loss": initial,
                "final_loss": run.final_loss,
                "ratio": run.ratio(),
            });
            serde_json::to_string_pretty(&v).expect("json value") + "\n"
        }
    };
    let status = if run.final_loss < initial { ExitStatus::Success } else { ExitStatus::Validation };
    Ok(Outcome { stdout, status })
}
