// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use clap::Args;
use rand::Rng;
use repdet_core::init;
use repdet_core::loss::{loss_grad_analytic, loss_grad_fd, relative_error, BBox, LossConfig, LossVariant};
use serde_json::json;

use super::loss::select_variants;
use crate::status::{CmdResult, ExitStatus, Failure, Outcome};
use crate::{Context, Format};

#[derive(Args)]
pub struct GradcheckArgs {
    /// Variant name or "all" (every variant with an analytic gradient).
    #[arg(long, default_value = "all")]
    variant: String,
    /// Non-degenerate pairs per variant.
    #[arg(long)]
    trials: Option<usize>,
    /// Largest acceptable relative error.
    #[arg(long)]
    tol: Option<f64>,
    /// Central-difference step.
    #[arg(long)]
    h: Option<f64>,
}

/// Positive-area box inside roughly [0, 150]^2.
fn sample_box<R: Rng>(rng: &mut R) -> BBox {
    let x = rng.gen_range(0.0..100.0);
    let y = rng.gen_range(0.0..100.0);
    let w = rng.gen_range(1.0..50.0);
    let h = rng.gen_range(1.0..50.0);
    BBox::from_xywh(x, y, w, h).expect("positive extent")
}

/// Half the pairs are independent, half are jittered copies that overlap.
fn sample_pair<R: Rng>(rng: &mut R) -> (BBox, BBox) {
    let a = sample_box(rng);
    let b = if rng.gen_bool(0.5) {
        sample_box(rng)
    } else {
        let (w, h) = (a.width(), a.height());
        let x1 = a.x1 + rng.gen_range(-0.3..0.3) * w;
        let y1 = a.y1 + rng.gen_range(-0.3..0.3) * h;
        let x2 = (a.x2 + rng.gen_range(-0.3..0.3) * w).max(x1 + 0.5);
        let y2 = (a.y2 + rng.gen_range(-0.3..0.3) * h).max(y1 + 0.5);
        BBox::new(x1, y1, x2, y2).expect("ordered corners")
    };
    (a, b)
}

struct Report {
    variant: LossVariant,
    checked: usize,
    skipped: usize,
    worst: f64,
}

fn check(cfg: &LossConfig, trials: usize, seed: u64, h: f64) -> Result<Report, Failure> {
    let index = LossVariant::ALL.iter().position(|&v| v == cfg.variant).unwrap_or(0) as u64;
    let mut rng = init::rng(seed.wrapping_add(index));
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < trials {
        if skipped > 100 * trials {
            return Err(Failure::validation(format!("{}: too many degenerate pairs", cfg.variant)));
        }
        let (pred, gt) = sample_pair(&mut rng);
        let an = loss_grad_analytic(&pred, &gt, cfg)?;
        let fd = loss_grad_fd(&pred, &gt, cfg, None, h)?;
        if an.flagged || fd.flagged {
            skipped += 1;
            continue;
        }
        worst = worst.max(relative_error(&an.grad, &fd.grad));
        checked += 1;
    }
    Ok(Report { variant: cfg.variant, checked, skipped, worst })
}

pub fn run(a: &GradcheckArgs, ctx: &Context) -> CmdResult {
    let c = &ctx.config;
    let trials = a.trials.unwrap_or(c.gradcheck_trials);
    let tol = a.tol.unwrap_or(c.gradcheck_tol);
    let h = a.h.unwrap_or(c.fd_step);
    if trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    if !(tol > 0.0) || !(h > 0.0) {
        return Err(Failure::usage("--tol and --h must be positive"));
    }
    let all = a.variant == "all";
    let mut variants = select_variants(&a.variant)?;
    if all {
        variants.retain(|v| v.has_analytic_grad(&c.loss));
    } else if !variants[0].has_analytic_grad(&c.loss) {
        return Err(Failure::usage(format!("{} has no analytic gradient", variants[0])));
    }
    let reports = variants
        .into_iter()
        .map(|v| check(&LossConfig { variant: v, ..c.loss.clone() }, trials, c.seed, h))
        .collect::<Result<Vec<_>, _>>()?;
    let pass = reports.iter().all(|r| r.worst <= tol);

    let stdout = match ctx.format {
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{:<10}  {:>6}  {:>7}  {:>13}  status", "variant", "pairs", "skipped", "worst rel err");
            for r in &reports {
                let status = if r.worst <= tol { "ok" } else { "FAIL" };
                let _ = writeln!(
                    s,
                    "{:<10}  {:>6}  {:>7}  {:>13.3e}  {status}",
                    r.variant.name(),
                    r.checked,
                    r.skipped,
                    r.worst
                );
            }
            let _ = writeln!(s, "tolerance {tol:.1e}, h {h:.1e}, seed {}: {}", c.seed, if pass { "pass" } else { "FAIL" });
            s
        }
        Format::Json => {
            let rows: Vec<_> = reports
                .iter()
                .map(|r| json!({"variant": r.variant.name(), "pairs": r.checked, "skipped": r.skipped, "worst_rel_err": r.worst}))
                .collect();
            let v = json!({"tolerance": tol, "h": h, "seed": c.seed, "pass": pass, "variants": rows});
            serde_json::to_string_pretty(&v).expect("json value") + "\n"
        }
    };
    let status = if pass { ExitStatus::Success } else { ExitStatus::Validation };
    Ok(Outcome { stdout, status })
}
